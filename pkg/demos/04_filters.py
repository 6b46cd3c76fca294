# %% [markdown]
# # Four filters on one trajectory
#
# The CP grid filter, the dense grid filter, a bootstrap particle filter and
# a UKF all track the same simulated flight.

# %%
import time

import numpy as np

from cpdpmf import tan
from cpdpmf.filters import (CpdFilterConfig, init_cpd_state, init_full_state, init_particles,
                            lgbf_cpd_step, lgbf_full_step, pf_bootstrap_step, ukf_step)
from cpdpmf.grid import GaussianMoments

terrain = tan.synth_terrain(seed=0, extent=5000.0, n_hills=600)
model = tan.TanModel(tan.CvModel.nearly_constant_velocity(), tan.MeasModel(), terrain)
m0 = GaussianMoments.diagonal([2000.0, 2000.0, 8.0, 5.0], [100.0, 100.0, 1.0, 1.0])
traj = tan.simulate(model.dynamics, model.meas, terrain, [2060.0, 1950.0, 8.3, 4.6], steps=30, seed=1)
cfg = CpdFilterConfig(counts=(21, 21, 17, 17), max_rank=10)

# %% [markdown]
# ## Run each filter

# %%
rng = np.random.default_rng(2)
states = {
    "LGbF CPD": (lgbf_cpd_step, init_cpd_state(m0, cfg)),
    "LGbF": (lgbf_full_step, init_full_state(m0, cfg)),
}
estimates = {name: [] for name in ("LGbF CPD", "LGbF", "PFb", "UKF")}
elapsed = dict.fromkeys(estimates, 0.0)

particles = init_particles(m0, 20000, rng)
ukf = m0
for z, psi in zip(traj.measurements, traj.headings):
    for name, (step, state) in states.items():
        t0 = time.perf_counter()
        state, est = step(state, z, psi, model, cfg)
        elapsed[name] += time.perf_counter() - t0
        states[name] = (step, state)
        estimates[name].append(est)
    t0 = time.perf_counter()
    particles, est = pf_bootstrap_step(particles, z, psi, model, rng)
    elapsed["PFb"] += time.perf_counter() - t0
    estimates["PFb"].append(est)
    t0 = time.perf_counter()
    ukf, est = ukf_step(ukf, z, psi, model)
    elapsed["UKF"] += time.perf_counter() - t0
    estimates["UKF"].append(est)

# %% [markdown]
# ## Errors
# Position RMSE over the second half of the run, once the filters have settled.

# %%
half = len(traj.states) // 2
for name, est in estimates.items():
    err = np.asarray(est)[half:, :2] - traj.states[half:, :2]
    rmse = np.sqrt(np.mean(np.sum(err ** 2, axis=1)))
    print(f"{name:9s} {rmse:7.1f} m   {elapsed[name] / len(traj.states):.3f} s/step")

print("final CP rank:", states["LGbF CPD"][1].rank)
