"""Bootstrap particle filter with systematic resampling."""
from __future__ import annotations

import numpy as np

from ..errors import DivergenceError
from ..grid import GaussianMoments


def systematic_resample(weights, rng) -> np.ndarray:
    """Indices drawn with a single uniform offset and stride ``1/n``."""
    n = weights.shape[0]
    positions = (rng.random() + np.arange(n)) / n
    cum = np.cumsum(weights)
    cum[-1] = 1.0
    return np.searchsorted(cum, positions, side="right")


def init_particles(moments: GaussianMoments, n: int, rng) -> np.ndarray:
    return rng.multivariate_normal(moments.mean, moments.cov, size=n)


def pf_bootstrap_step(particles, z, psi, model, rng):
    """Weight by ``z``, estimate, resample, then propagate one step.

    Returns the propagated (equally weighted) particles and the weighted
    posterior mean.
    """
    w = model.likelihood(particles, z, psi)
    total = w.sum()
    if not np.isfinite(total) or total <= 0:
        raise DivergenceError("all particle weights vanished")
    w = w / total
    estimate = w @ particles
    particles = particles[systematic_resample(w, rng)]
    dyn = model.dynamics
    noise = rng.standard_normal(particles.shape) * np.sqrt(np.diag(dyn.Q))
    return particles @ dyn.F.T + dyn.u + noise, estimate
