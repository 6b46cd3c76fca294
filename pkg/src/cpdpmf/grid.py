"""
Axes-aligned equidistant grids and point-mass densities on them.

A :class:`Pmd` carries its weights either as a dense ``numpy`` array
(C order, one axis per state dimension) or as a :class:`~cpdpmf.cpd.CpdTensor`.
Weights are normalised so that ``volume * sum(weights) == 1``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.linalg import toeplitz

from . import cpd
from .cpd import CpdTensor
from .errors import DivergenceError, ShapeMismatchError

_SQRT_2PI = np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class AxisGrid:
    """Cartesian product of one-dimensional equidistant axes."""

    axes: tuple

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        for j, a in enumerate(axes):
            if a.ndim != 1 or a.shape[0] < 3 or a.shape[0] % 2 == 0:
                raise ValueError(f"axis {j} must hold an odd number (>= 3) of points, got {a.shape}")
            steps = np.diff(a)
            if np.any(steps <= 0):
                raise ValueError(f"axis {j} is not strictly increasing")
            if np.max(np.abs(steps - steps[0])) > 1e-9 * abs(steps[0]) + 1e-12 * np.max(np.abs(a)):
                raise ValueError(f"axis {j} is not equidistant")
        object.__setattr__(self, "axes", axes)

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def counts(self) -> tuple:
        return tuple(a.shape[0] for a in self.axes)

    @property
    def deltas(self) -> np.ndarray:
        return np.array([(a[-1] - a[0]) / (a.shape[0] - 1) for a in self.axes])

    @property
    def volume(self) -> float:
        return float(np.prod(self.deltas))

    @property
    def center(self) -> np.ndarray:
        return np.array([a[a.shape[0] // 2] for a in self.axes])

    def points(self) -> np.ndarray:
        """All grid points as an ``(N, D)`` array in C order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass(frozen=True)
class GaussianMoments:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (mean.shape[0], mean.shape[0]):
            raise ShapeMismatchError(f"covariance shape {cov.shape} does not match mean length {mean.shape[0]}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @classmethod
    def diagonal(cls, mean, std):
        std = np.asarray(std, dtype=float)
        return cls(mean, np.diag(std ** 2))


Weights = Union[np.ndarray, CpdTensor]


@dataclass(frozen=True)
class Pmd:
    """Point-mass density: weights on the points of ``grid``."""

    grid: AxisGrid
    weights: Weights

    def __post_init__(self):
        shape = self.weights.shape
        if tuple(shape) != self.grid.counts:
            raise ShapeMismatchError(f"weights of shape {tuple(shape)} on a grid with counts {self.grid.counts}")

    @property
    def volume(self) -> float:
        return self.grid.volume

    @property
    def is_cpd(self) -> bool:
        return isinstance(self.weights, CpdTensor)

    def total(self) -> float:
        """Sum of weights (not multiplied by the cell volume)."""
        if self.is_cpd:
            return cpd.sum_entries(self.weights)
        return float(np.sum(self.weights))

    def mass(self) -> float:
        return self.volume * self.total()

    def dense(self) -> np.ndarray:
        return cpd.to_dense(self.weights) if self.is_cpd else self.weights


def design_grid(moments: GaussianMoments, sigma_mult: float = 4.0, counts=None) -> AxisGrid:
    """Grid spanning ``mean +- sigma_mult * std`` along every axis.

    The middle point of every axis equals the mean exactly.
    """
    mean = moments.mean
    var = np.diag(moments.cov)
    if counts is None:
        raise ValueError("counts are required")
    counts = [int(n) for n in counts]
    if len(counts) != mean.shape[0]:
        raise ShapeMismatchError(f"{len(counts)} counts for a {mean.shape[0]}-dimensional state")
    if sigma_mult <= 0:
        raise ValueError(f"sigma_mult must be positive, got {sigma_mult}")
    if np.any(~(var > 0)):
        raise ValueError(f"grid design needs positive variances, got {var}")
    axes = []
    for m, v, n in zip(mean, var, counts):
        if n < 3 or n % 2 == 0:
            raise ValueError(f"grid counts must be odd and >= 3, got {n}")
        c = n // 2
        delta = sigma_mult * np.sqrt(v) / c
        axes.append(m + (np.arange(n) - c) * delta)
    return AxisGrid(tuple(axes))


def normalize(p: Pmd) -> Pmd:
    total = p.total()
    if not np.isfinite(total) or total <= 0:
        raise DivergenceError(f"point-mass density has nonpositive total weight {total}")
    s = 1.0 / (p.volume * total)
    if p.is_cpd:
        return Pmd(p.grid, cpd.scale(p.weights, s))
    return Pmd(p.grid, p.weights * s)


def gaussian_density(x, mean, var):
    return np.exp(-0.5 * (x - mean) ** 2 / var) / (_SQRT_2PI * np.sqrt(var))


def gaussian_pmd_init(moments: GaussianMoments, grid: AxisGrid) -> Pmd:
    """Rank-one CP weights for a Gaussian with diagonal covariance."""
    cov = moments.cov
    off = cov - np.diag(np.diag(cov))
    if np.any(np.abs(off) > 1e-12 * np.max(np.abs(np.diag(cov)))):
        raise ValueError("gaussian_pmd_init needs a diagonal covariance")
    var = np.diag(cov)
    cols = [gaussian_density(a, m, v)[:, None] for a, m, v in zip(grid.axes, moments.mean, var)]
    return normalize(Pmd(grid, CpdTensor(np.ones(1), tuple(cols))))


def moments_from_pmd(p: Pmd, tol: float = 1e-6) -> GaussianMoments:
    """Mean and covariance of a normalised point-mass density.

    Mass sits at the grid points.  Dense weights are clamped at zero (and
    renormalised) before the moments are taken; CP weights are handled in
    factored form and are not clamped.
    """
    mass = p.mass()
    if abs(mass - 1.0) > tol:
        raise ValueError(f"moments_from_pmd needs a normalised density, mass is {mass}")
    axes = p.grid.axes
    d = len(axes)
    if p.is_cpd:
        t = p.weights
        s0 = np.stack([f.sum(axis=0) for f in t.factors])            # (D, R)
        s1 = np.stack([a @ f for a, f in zip(axes, t.factors)])       # (D, R)
        s2 = np.stack([(a * a) @ f for a, f in zip(axes, t.factors)])
        vol = p.volume
        second = np.empty((d, d))
        mean = np.empty(d)
        for j in range(d):
            rest = np.prod(np.delete(s0, j, axis=0), axis=0)
            mean[j] = vol * t.lambdas @ (s1[j] * rest)
            second[j, j] = vol * t.lambdas @ (s2[j] * rest)
            for l in range(j + 1, d):
                rest2 = np.prod(np.delete(s0, [j, l], axis=0), axis=0)
                second[j, l] = second[l, j] = vol * t.lambdas @ (s1[j] * s1[l] * rest2)
    else:
        w = np.clip(p.weights, 0.0, None)
        w = w / w.sum()
        mean = np.empty(d)
        second = np.empty((d, d))
        marg1 = []
        for j in range(d):
            m = w.sum(axis=tuple(i for i in range(d) if i != j))
            marg1.append(m)
            mean[j] = axes[j] @ m
            second[j, j] = (axes[j] ** 2) @ m
        for j in range(d):
            for l in range(j + 1, d):
                m2 = w.sum(axis=tuple(i for i in range(d) if i not in (j, l)))
                second[j, l] = second[l, j] = axes[j] @ m2 @ axes[l]
    cov = second - np.outer(mean, mean)
    return GaussianMoments(mean, 0.5 * (cov + cov.T))


def interp_axis(src_points, src_values, dst_points):
    """Piecewise-linear interpolation along one axis, zero outside the span.

    ``src_values`` may be a vector or a matrix whose columns are interpolated
    independently; ``dst_points`` may have any shape.
    """
    x = np.asarray(src_points, dtype=float)
    y = np.asarray(src_values, dtype=float)
    q = np.asarray(dst_points, dtype=float)
    if np.any(np.diff(x) <= 0):
        raise ValueError("interpolation source points must be strictly increasing")
    flat = q.reshape(-1)
    idx = np.clip(np.searchsorted(x, flat, side="right") - 1, 0, x.shape[0] - 2)
    w = (flat - x[idx]) / (x[idx + 1] - x[idx])
    inside = (flat >= x[0]) & (flat <= x[-1])
    if y.ndim == 1:
        out = (1.0 - w) * y[idx] + w * y[idx + 1]
        out = np.where(inside, out, 0.0)
        return out.reshape(q.shape)
    out = (1.0 - w)[:, None] * y[idx] + w[:, None] * y[idx + 1]
    out[~inside] = 0.0
    return out.reshape(q.shape + y.shape[1:])


def gaussian_kernel_axis(count: int, delta: float, variance: float) -> np.ndarray:
    """Zero-mean Gaussian density sampled at ``(i - center) * delta``."""
    if count < 1 or count % 2 == 0:
        raise ValueError(f"kernel length must be odd, got {count}")
    if not variance > 0:
        raise ValueError(f"kernel variance must be positive, got {variance}")
    offsets = (np.arange(count) - count // 2) * delta
    return gaussian_density(offsets, 0.0, variance)


def convolve_axis(values, kernel, delta: float) -> np.ndarray:
    """Same-size zero-padded convolution scaled by the cell width.

    Evaluated directly as a banded Toeplitz product; columns of a matrix
    argument are convolved independently.
    """
    v = np.asarray(values, dtype=float)
    k = np.asarray(kernel, dtype=float)
    if k.shape[0] % 2 == 0:
        raise ValueError("kernel must have odd length")
    n = v.shape[0]
    c = k.shape[0] // 2
    # T[i, m] = k[c + i - m] where that index exists, else 0
    col = np.zeros(n)
    row = np.zeros(n)
    lo = min(n, c + 1)
    col[:lo] = k[c:c + lo]
    row[:lo] = k[c::-1][:lo]
    return delta * (toeplitz(col, row) @ v)
