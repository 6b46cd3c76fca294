# %% [markdown]
# # Point-mass densities on a moving grid
#
# A density is a set of weights on an equidistant grid centred on the mean.
# Weights are scaled so that the cell volume times their sum is one.

# %%
import numpy as np

from cpdpmf import grid as g

moments = g.GaussianMoments.diagonal([100.0, -50.0], [10.0, 4.0])
axes = g.design_grid(moments, sigma_mult=4.0, counts=(41, 31))
print("counts", axes.counts, "spacing", axes.deltas, "centre", axes.center)

# %% [markdown]
# ## Gaussian initialisation and moments
# The recovered moments match the input up to grid discretisation.

# %%
pmd = g.gaussian_pmd_init(moments, axes)
print("mass", pmd.mass())
est = g.moments_from_pmd(pmd)
print("mean", est.mean)
print("std ", np.sqrt(np.diag(est.cov)))

# %% [markdown]
# ## Diffusion along one axis
# Convolving with a Gaussian kernel adds its variance to that axis.

# %%
delta = axes.deltas[0]
kernel = g.gaussian_kernel_axis(41, delta, 9.0)
marginal = pmd.dense().sum(axis=1) * axes.deltas[1]
wider = g.convolve_axis(marginal, kernel, delta)
x = axes.axes[0]


def var(p):
    p = p / (p.sum() * delta)
    mu = delta * np.sum(x * p)
    return delta * np.sum((x - mu) ** 2 * p)


print(f"variance before {var(marginal):.2f}, after {var(wider):.2f} (expected about {var(marginal) + 9:.2f})")

# %% [markdown]
# ## Interpolation onto a shifted axis
# Values outside the source span are zero.

# %%
shifted = g.interp_axis(x, marginal, x + 15.0)
print("mass kept after a 15 unit shift:", shifted.sum() / marginal.sum())
