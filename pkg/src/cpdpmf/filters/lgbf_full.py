"""Lagrangian grid filter on full (dense) weight tensors.

Serves as the accuracy reference for the CP filter; memory and time grow
with the product of the grid counts.
"""
from __future__ import annotations

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.ndimage import convolve1d

from ..cpd import ORACLE_CAP, _check_cap
from ..grid import (AxisGrid, GaussianMoments, Pmd, design_grid, gaussian_density,
                    gaussian_kernel_axis, moments_from_pmd, normalize)
from .common import CpdFilterConfig, predictive_grid
from .lgbf_cpd import FilterStateCpd as _State


class FilterStateFull(_State):
    """Same fields as the CP state; ``pmd.weights`` is an ndarray."""


def init_full_state(moments: GaussianMoments, cfg: CpdFilterConfig, cap: int = ORACLE_CAP) -> FilterStateFull:
    _check_cap(cfg.counts, cap)
    grid = design_grid(moments, cfg.sigma_mult, cfg.counts)
    var = np.diag(moments.cov)
    w = np.ones(grid.counts)
    for j, (a, m, v) in enumerate(zip(grid.axes, moments.mean, var)):
        shape = [1] * grid.ndim
        shape[j] = -1
        w = w * gaussian_density(a, m, v).reshape(shape)
    return FilterStateFull(normalize(Pmd(grid, w)), 0)


def likelihood_tensor(model, z, psi, grid: AxisGrid) -> np.ndarray:
    lik = np.ones(grid.counts)
    for modes, values in model.likelihood_factors(z, psi, grid):
        shape = [1] * grid.ndim
        for m, n in zip(modes, np.shape(values)):
            shape[m] = n
        lik = lik * np.asarray(values).reshape(shape)
    return lik


def measurement_update_full(state: FilterStateFull, z, psi, model) -> FilterStateFull:
    w = likelihood_tensor(model, z, psi, state.grid) * state.pmd.weights
    return FilterStateFull(normalize(Pmd(state.grid, w)), state.k)


def advect_full(state: FilterStateFull, dynamics, cfg: CpdFilterConfig,
                new_grid: AxisGrid = None) -> FilterStateFull:
    """Multilinear interpolation of the weights onto ``F^-1 (new_grid - u)``."""
    if new_grid is None:
        new_grid = predictive_grid(state.pmd, dynamics, cfg)
    finv = np.linalg.inv(dynamics.F)
    pts = (new_grid.points() - dynamics.u) @ finv.T
    interp = RegularGridInterpolator(state.grid.axes, state.pmd.weights, method="linear",
                                     bounds_error=False, fill_value=0.0)
    w = interp(pts).reshape(new_grid.counts)
    return FilterStateFull(normalize(Pmd(new_grid, w)), state.k)


def diffuse_full(state: FilterStateFull, dynamics) -> FilterStateFull:
    """Separable zero-padded convolution with the process-noise kernel."""
    grid = state.grid
    w = state.pmd.weights
    q = np.diag(dynamics.Q)
    for j in range(grid.ndim):
        if q[j] == 0.0:
            continue
        delta = grid.deltas[j]
        kernel = gaussian_kernel_axis(grid.counts[j], delta, q[j])
        w = delta * convolve1d(w, kernel, axis=j, mode="constant", cval=0.0)
    return FilterStateFull(normalize(Pmd(grid, w)), state.k)


def lgbf_full_step(state: FilterStateFull, z, psi, model, cfg: CpdFilterConfig):
    post = measurement_update_full(state, z, psi, model)
    estimate = moments_from_pmd(post.pmd).mean
    prior = diffuse_full(advect_full(post, model.dynamics, cfg), model.dynamics)
    return FilterStateFull(prior.pmd, state.k + 1), estimate
