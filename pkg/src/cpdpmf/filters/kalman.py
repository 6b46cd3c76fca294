"""Kalman prediction (used for grid design) and the unscented Kalman filter."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DivergenceError
from ..grid import GaussianMoments


def kf_predict(moments: GaussianMoments, model) -> GaussianMoments:
    F = model.F
    mean = F @ moments.mean + model.u
    cov = F @ moments.cov @ F.T + model.Q
    return GaussianMoments(mean, 0.5 * (cov + cov.T))


@dataclass(frozen=True)
class UkfParams:
    alpha: float = 1e-3
    beta: float = 2.0
    kappa: float = 0.0

    def weights(self, n):
        lam = self.alpha ** 2 * (n + self.kappa) - n
        wm = np.full(2 * n + 1, 0.5 / (n + lam))
        wc = wm.copy()
        wm[0] = lam / (n + lam)
        wc[0] = wm[0] + 1.0 - self.alpha ** 2 + self.beta
        return n + lam, wm, wc


def sigma_points(moments: GaussianMoments, params: UkfParams = UkfParams()):
    """Symmetric sigma-point set ``(2n+1, n)`` with mean and covariance weights."""
    n = moments.mean.shape[0]
    c, wm, wc = params.weights(n)
    try:
        root = np.linalg.cholesky(c * moments.cov)
    except np.linalg.LinAlgError as exc:
        raise DivergenceError("UKF covariance is not positive definite") from exc
    pts = np.vstack([moments.mean, moments.mean + root.T, moments.mean - root.T])
    return pts, wm, wc


def ukf_update(moments: GaussianMoments, z, h, R, params: UkfParams = UkfParams()) -> GaussianMoments:
    """Unscented measurement update for ``z = h(x) + v``, ``v ~ N(0, R)``.

    ``h`` maps a batch of states ``(m, n)`` to predicted measurements
    ``(m, nz)``; NaN predictions (e.g. sigma points off the map) are
    reported as divergence.
    """
    pts, wm, wc = sigma_points(moments, params)
    zs = h(pts)
    if not np.all(np.isfinite(zs)):
        raise DivergenceError("UKF sigma point produced an undefined measurement")
    z_mean = wm @ zs
    dz = zs - z_mean
    dx = pts - moments.mean
    pzz = (wc[:, None] * dz).T @ dz + R
    pxz = (wc[:, None] * dx).T @ dz
    gain = np.linalg.solve(pzz.T, pxz.T).T
    mean = moments.mean + gain @ (np.asarray(z) - z_mean)
    cov = moments.cov - gain @ pzz @ gain.T
    return GaussianMoments(mean, 0.5 * (cov + cov.T))


def ukf_step(moments: GaussianMoments, z, psi, model, params: UkfParams = UkfParams()):
    """Measurement update then prediction for the terrain model.

    Returns the predicted moments for the next step and the posterior mean.
    Prediction uses the linear dynamics directly, where the unscented
    transform is exact.
    """
    post = ukf_update(moments, z, lambda x: model.h(x, psi), model.meas.R, params)
    return kf_predict(post, model.dynamics), post.mean
