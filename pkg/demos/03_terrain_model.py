# %% [markdown]
# # The terrain navigation model
#
# A vehicle moves with nearly constant velocity over a height map.  It
# measures the terrain height below it plus its velocity in the body frame.

# %%
import tempfile
from pathlib import Path

import numpy as np

from cpdpmf import tan
from cpdpmf.grid import GaussianMoments, design_grid

terrain = tan.synth_terrain(seed=3, extent=4000.0, n_hills=500)
xmin, xmax, ymin, ymax = terrain.extent
print(f"map {xmax - xmin:.0f} x {ymax - ymin:.0f} m, heights {np.nanmin(terrain.heights):.0f}"
      f" to {np.nanmax(terrain.heights):.0f} m")

# %% [markdown]
# ## Simulate a trajectory

# %%
dyn = tan.CvModel.nearly_constant_velocity()
meas = tan.MeasModel()
traj = tan.simulate(dyn, meas, terrain, [1500.0, 1500.0, 6.0, 4.0], steps=20, seed=7)
for k in (0, 10, 19):
    x, z = traj.states[k], traj.measurements[k]
    print(f"k={k:2d} pos ({x[0]:.0f}, {x[1]:.0f}) height {z[0]:.1f} m, body velocity ({z[1]:.2f}, {z[2]:.2f})")

# %% [markdown]
# The heading aligns the body x axis with the velocity, so the body-frame
# lateral velocity is pure noise.

# %%
print("mean lateral body velocity:", traj.measurements[:, 2].mean())

# %% [markdown]
# ## Likelihood on a grid
# The likelihood factors into a position matrix and a velocity matrix.

# %%
model = tan.TanModel(dyn, meas, terrain)
grid = design_grid(GaussianMoments.diagonal(traj.states[0], [80, 80, 1, 1]), 4.0, (41, 41, 21, 21))
(pos_modes, lpos), (vel_modes, lvel) = model.likelihood_factors(traj.measurements[0], traj.headings[0], grid)
i, j = np.unravel_index(np.argmax(lpos), lpos.shape)
print("position modes", pos_modes, "peak at", grid.axes[0][i], grid.axes[1][j], "truth", traj.states[0][:2])
print("velocity modes", vel_modes, "matrix rank", np.linalg.matrix_rank(lvel))

# %% [markdown]
# ## ESRI ASCII round trip

# %%
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "dem.asc"
    tan.write_esri_ascii(terrain, path)
    back = tan.load_esri_ascii(path)
    print("round-trip max error:", np.max(np.abs(back.heights - terrain.heights)))
