"""
Lagrangian grid filter with CP-format weights.

One step is: measurement update (likelihood factors lifted to CP form and
multiplied in), advection (grid moved along the dynamics, loading vectors
interpolated per block), diffusion (1-D Gaussian convolutions of the
loading vectors).  Rank is rounded back to ``cfg.max_rank`` after the
measurement update and after the advection.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import cpd
from ..cpd import CpdTensor
from ..grid import (AxisGrid, GaussianMoments, Pmd, convolve_axis, design_grid,
                    gaussian_kernel_axis, gaussian_pmd_init, interp_axis, moments_from_pmd,
                    normalize)
from .common import CpdFilterConfig, dynamics_blocks, predictive_grid


@dataclass(frozen=True)
class FilterStateCpd:
    pmd: Pmd
    k: int = 0

    @property
    def grid(self) -> AxisGrid:
        return self.pmd.grid

    @property
    def rank(self) -> int:
        return self.pmd.weights.rank


@dataclass(frozen=True)
class BackProjectionMap:
    """Indexing of a sheared two-mode grid block.

    ``first_points[i]`` is the first coordinate of the back-transformed
    grid point ``mu[i] = (i1, i2)``; its second coordinate is
    ``second_points[second_index[i]]``.  When the inverse block is upper
    triangular the second coordinate depends on ``i2`` alone and
    ``second_points`` holds only ``N2`` values.
    """

    first_points: np.ndarray
    second_points: np.ndarray
    mu: np.ndarray
    second_index: np.ndarray


def back_projection_map(block_inv, axis_first, axis_second, shift=(0.0, 0.0)) -> BackProjectionMap:
    """Map the new-grid block ``axis_first x axis_second`` back through
    ``block_inv`` (after subtracting the known input ``shift``)."""
    b = np.asarray(block_inv, dtype=float)
    xa = np.asarray(axis_first) - shift[0]
    xb = np.asarray(axis_second) - shift[1]
    na, nb = xa.shape[0], xb.shape[0]
    i1, i2 = np.divmod(np.arange(na * nb), nb)
    mu = np.stack([i1, i2], axis=1)
    first = b[0, 0] * xa[i1] + b[0, 1] * xb[i2]
    if b[1, 0] == 0.0:
        second = b[1, 1] * xb
        second_index = i2
    else:
        second = b[1, 0] * xa[i1] + b[1, 1] * xb[i2]
        second_index = np.arange(na * nb)
    return BackProjectionMap(first, second, mu, second_index)


def init_cpd_state(moments: GaussianMoments, cfg: CpdFilterConfig) -> FilterStateCpd:
    grid = design_grid(moments, cfg.sigma_mult, cfg.counts)
    return FilterStateCpd(gaussian_pmd_init(moments, grid), 0)


def lift_likelihood(modes, values, counts, cfg: CpdFilterConfig) -> CpdTensor:
    """CP form of a likelihood that varies along ``modes`` only."""
    values = np.asarray(values, dtype=float)
    if len(modes) == 1:
        small = CpdTensor(np.ones(1), (values.reshape(-1, 1),))
    elif len(modes) == 2:
        small = cpd.svd_truncated(values, cfg.svd_energy).as_cpd()
    else:
        small = cpd.decompose_dense(values, cfg.max_rank, seed=cfg.seed, max_iters=cfg.als_iters,
                                    tol=cfg.als_tol, init=cfg.als_init)
    return cpd.embed_invariant_modes(small, modes, counts)


def _round(t: CpdTensor, cfg: CpdFilterConfig) -> CpdTensor:
    if t.rank <= cfg.max_rank:
        return t
    return cpd.rank_reduce_als(t, cfg.max_rank, max_iters=cfg.als_iters, tol=cfg.als_tol,
                               seed=cfg.seed, init=cfg.als_init)


def measurement_update_cpd(state: FilterStateCpd, z, psi, model, cfg: CpdFilterConfig,
                           round_rank: bool = True) -> FilterStateCpd:
    """Multiply the prior by the lifted likelihood factors, round, normalise.

    Raises
    ------
    DivergenceError
        If the posterior has no mass left on the grid.
    """
    grid = state.grid
    post = state.pmd.weights
    lik = None
    for modes, values in model.likelihood_factors(z, psi, grid):
        term = lift_likelihood(modes, values, grid.counts, cfg)
        lik = term if lik is None else cpd.hadamard(lik, term)
    if lik is not None:
        post = cpd.hadamard(lik, post)
    if round_rank:
        post = _round(post, cfg)
    return FilterStateCpd(normalize(Pmd(grid, post)), state.k)


def advect_factors(weights: CpdTensor, old_grid: AxisGrid, new_grid: AxisGrid, dynamics,
                   svd_energy: float):
    """Interpolate CP weights onto ``F^-1 (new_grid - u)`` without densifying.

    Returns the unrounded tensor and, for every input rank component, the
    list of per-block ranks; the output rank is the sum over components
    of the product of their block ranks.
    """
    F, u = dynamics.F, dynamics.u
    blocks = dynamics_blocks(F)
    lam = weights.lambdas
    R = weights.rank
    # per block: list over r of (left columns, singular values, right columns)
    block_terms = []
    for block in blocks:
        binv = np.linalg.inv(F[np.ix_(block, block)])
        if len(block) == 1:
            (a,) = block
            pts = binv[0, 0] * (new_grid.axes[a] - u[a])
            cols = interp_axis(old_grid.axes[a], weights.factors[a], pts)
            block_terms.append([(cols[:, r:r + 1], np.ones(1), None) for r in range(R)])
        elif len(block) == 2:
            a, b = block
            bp = back_projection_map(binv, new_grid.axes[a], new_grid.axes[b], (u[a], u[b]))
            pa = interp_axis(old_grid.axes[a], weights.factors[a], bp.first_points)
            pb = interp_axis(old_grid.axes[b], weights.factors[b], bp.second_points)
            na, nb = new_grid.counts[a], new_grid.counts[b]
            mats = np.zeros((na, nb, R))
            mats[bp.mu[:, 0], bp.mu[:, 1]] = pa * pb[bp.second_index]
            uu, ss, vt = np.linalg.svd(mats.transpose(2, 0, 1), full_matrices=False)
            terms = []
            for r in range(R):
                k = cpd._truncation_rank(ss[r], svd_energy)
                terms.append((uu[r, :, :k], ss[r, :k], vt[r, :k].T))
            block_terms.append(terms)
        else:
            raise NotImplementedError(
                f"advection handles dynamics blocks of size 1 or 2, found block {block}")

    d = len(new_grid.axes)
    columns = [[] for _ in range(d)]
    lambdas = []
    ranks = []
    for r in range(R):
        sizes = tuple(bt[r][1].shape[0] for bt in block_terms)
        ranks.append(sizes)
        combos = np.indices(sizes).reshape(len(sizes), -1)
        lam_r = np.full(combos.shape[1], lam[r])
        for bi, (block, bt) in enumerate(zip(blocks, block_terms)):
            left, sing, right = bt[r]
            idx = combos[bi]
            lam_r = lam_r * sing[idx]
            columns[block[0]].append(left[:, idx])
            if right is not None:
                columns[block[1]].append(right[:, idx])
        lambdas.append(lam_r)
    t = CpdTensor(np.concatenate(lambdas), tuple(np.hstack(c) for c in columns))
    return t, ranks


def advect_cpd(state: FilterStateCpd, dynamics, cfg: CpdFilterConfig,
               new_grid: AxisGrid = None, round_rank: bool = True) -> FilterStateCpd:
    """Deterministic half of the time update.

    The next grid is designed from Kalman-predicted moments unless
    ``new_grid`` is given.
    """
    if new_grid is None:
        new_grid = predictive_grid(state.pmd, dynamics, cfg)
    t, _ = advect_factors(state.pmd.weights, state.grid, new_grid, dynamics, cfg.svd_energy)
    if round_rank:
        t = _round(t, cfg)
    return FilterStateCpd(normalize(Pmd(new_grid, t)), state.k)


def diffuse_cpd(state: FilterStateCpd, dynamics) -> FilterStateCpd:
    """Convolve every loading vector with its axis' process-noise kernel."""
    grid = state.grid
    t = state.pmd.weights
    q = np.diag(dynamics.Q)
    factors = []
    for j, f in enumerate(t.factors):
        if q[j] == 0.0:
            factors.append(f)
            continue
        delta = grid.deltas[j]
        kernel = gaussian_kernel_axis(grid.counts[j], delta, q[j])
        factors.append(convolve_axis(f, kernel, delta))
    return FilterStateCpd(normalize(Pmd(grid, CpdTensor(t.lambdas, tuple(factors)))), state.k)


def lgbf_cpd_step(state: FilterStateCpd, z, psi, model, cfg: CpdFilterConfig):
    """Full filter cycle on measurement ``z``.

    Returns the prior for the next step and the posterior-mean estimate.
    """
    post = measurement_update_cpd(state, z, psi, model, cfg)
    estimate = moments_from_pmd(post.pmd).mean
    prior = diffuse_cpd(advect_cpd(post, model.dynamics, cfg), model.dynamics)
    return FilterStateCpd(prior.pmd, state.k + 1), estimate
