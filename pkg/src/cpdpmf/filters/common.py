"""Configuration and grid handling shared by the grid-based filters."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

from ..grid import AxisGrid, GaussianMoments, Pmd, design_grid, moments_from_pmd
from .kalman import kf_predict


@dataclass(frozen=True)
class CpdFilterConfig:
    """Settings for the grid filters.

    ``max_rank``, ``als_*`` and ``svd_energy`` only matter for the CP
    filter.  ``grid_policy="kf"`` re-centres the grid every step on the
    Kalman-predicted moments; ``"fixed"`` keeps the initial grid.
    """

    counts: tuple = (21, 21, 21, 21)
    sigma_mult: float = 4.0
    max_rank: int = 10
    als_iters: int = 50
    als_tol: float = 1e-6
    als_init: str = "nvecs"
    seed: int = 0
    svd_energy: float = 0.9999
    grid_policy: str = "kf"

    def __post_init__(self):
        counts = tuple(int(n) for n in self.counts)
        if any(n < 3 or n % 2 == 0 for n in counts):
            raise ValueError(f"grid counts must be odd and >= 3, got {counts}")
        if self.max_rank < 1:
            raise ValueError(f"max_rank must be >= 1, got {self.max_rank}")
        if not 0.0 < self.svd_energy <= 1.0:
            raise ValueError(f"svd_energy must lie in (0, 1], got {self.svd_energy}")
        if self.grid_policy not in ("kf", "fixed"):
            raise ValueError(f"grid_policy must be 'kf' or 'fixed', got {self.grid_policy!r}")
        object.__setattr__(self, "counts", counts)


def psd_moments(m: GaussianMoments) -> GaussianMoments:
    """Clip negative covariance eigenvalues (CP round-off can produce them)."""
    w, v = np.linalg.eigh(m.cov)
    if np.all(w >= 0):
        return m
    return GaussianMoments(m.mean, (v * np.clip(w, 0.0, None)) @ v.T)


def predictive_grid(posterior: Pmd, dynamics, cfg: CpdFilterConfig) -> AxisGrid:
    """Axes-aligned grid for the next step from Kalman-predicted moments.

    Each predicted variance is floored at ``delta**2 / 12`` of the posterior
    grid, the spread of mass smeared over one cell.  This keeps the grid
    valid when the posterior collapses onto a single node along an axis.
    """
    if cfg.grid_policy == "fixed":
        return posterior.grid
    pred = kf_predict(psd_moments(moments_from_pmd(posterior)), dynamics)
    floor = posterior.grid.deltas ** 2 / 12.0
    cov = pred.cov + np.diag(np.clip(floor - np.diag(pred.cov), 0.0, None))
    return design_grid(GaussianMoments(pred.mean, cov), cfg.sigma_mult, posterior.grid.counts)


def dynamics_blocks(F) -> list:
    """Groups of state indices that ``F`` couples, each sorted ascending."""
    F = np.asarray(F)
    coupled = (F != 0) | (F.T != 0)
    n, labels = connected_components(coupled, directed=False)
    blocks = [tuple(np.flatnonzero(labels == c).tolist()) for c in range(n)]
    return sorted(blocks)
