"""
Canonical polyadic (CP) tensor algebra.

A rank-R tensor of order D is stored as a weight vector ``lambdas`` of
length R and D factor matrices, the j-th of shape ``(N_j, R)``.  Entry
``(i_1, ..., i_D)`` is ``sum_r lambdas[r] * prod_j factors[j][i_j, r]``.

Everything here works on the factors only; :func:`to_dense` exists as an
oracle for tests and small problems and refuses to build anything larger
than ``ORACLE_CAP`` entries.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import OracleCapError, ShapeMismatchError

ORACLE_CAP = 10_000_000


@dataclass(frozen=True)
class CpdTensor:
    """Weighted sum of rank-one outer products.

    Use :func:`cpd_new` to build one with validation.
    """

    lambdas: np.ndarray
    factors: tuple

    @property
    def rank(self) -> int:
        return self.lambdas.shape[0]

    @property
    def shape(self) -> tuple:
        return tuple(f.shape[0] for f in self.factors)

    @property
    def ndim(self) -> int:
        return len(self.factors)

    def __repr__(self):
        return f"CpdTensor(shape={self.shape}, rank={self.rank})"


@dataclass(frozen=True)
class SvdFactors:
    left: np.ndarray
    singular: np.ndarray
    right: np.ndarray

    @property
    def rank(self) -> int:
        return self.singular.shape[0]

    def as_cpd(self) -> CpdTensor:
        return CpdTensor(self.singular.copy(), (self.left, self.right))


class AlsInfo(NamedTuple):
    fit: float
    fits: list
    iterations: int
    converged: bool


def cpd_new(lambdas, factors) -> CpdTensor:
    """Validate and wrap CP weights and factor matrices.

    Parameters
    ----------
    lambdas : array_like, shape (R,)
    factors : sequence of array_like, the j-th of shape (N_j, R)

    Raises
    ------
    ShapeMismatchError
        If the factors disagree on the column count, or ``lambdas`` has the
        wrong length.
    """
    if len(factors) == 0:
        raise ShapeMismatchError("a CP tensor needs at least one factor matrix")
    mats = []
    for j, f in enumerate(factors):
        f = np.asarray(f, dtype=float)
        if f.ndim == 1:
            f = f[:, None]
        if f.ndim != 2 or f.shape[0] < 1:
            raise ShapeMismatchError(f"factor for mode {j} must be a nonempty matrix, got shape {f.shape}")
        mats.append(f)
    rank = mats[0].shape[1]
    if rank < 1:
        raise ShapeMismatchError("rank must be at least 1")
    for j, f in enumerate(mats):
        if f.shape[1] != rank:
            raise ShapeMismatchError(
                f"factor for mode {j} has {f.shape[1]} columns, mode 0 has {rank}")
    lam = np.asarray(lambdas, dtype=float).reshape(-1)
    if lam.shape[0] != rank:
        raise ShapeMismatchError(f"lambdas has length {lam.shape[0]} but the factors have rank {rank}")
    return CpdTensor(lam, tuple(mats))


def _check_cap(shape, cap):
    n = int(np.prod(shape, dtype=np.float64))
    if n > cap:
        raise OracleCapError(f"dense rendering of shape {tuple(shape)} has {n} entries, cap is {cap}")


def to_dense(t: CpdTensor, cap: int = ORACLE_CAP) -> np.ndarray:
    """Render a CP tensor as a full C-ordered array (oracle use only)."""
    _check_cap(t.shape, cap)
    d = t.ndim
    operands = [t.lambdas, [d]]
    for j, f in enumerate(t.factors):
        operands += [f, [j, d]]
    operands.append(list(range(d)))
    return np.einsum(*operands, optimize=True)


def hadamard(a: CpdTensor, b: CpdTensor) -> CpdTensor:
    """Element-wise product in factored form.

    The result has rank ``a.rank * b.rank``; component ``(r, s)`` sits at
    column ``r * b.rank + s``.
    """
    if a.shape != b.shape:
        raise ShapeMismatchError(f"hadamard of shapes {a.shape} and {b.shape}")
    ra, rb = a.rank, b.rank
    lam = np.outer(a.lambdas, b.lambdas).reshape(ra * rb)
    factors = tuple(
        (fa[:, :, None] * fb[:, None, :]).reshape(fa.shape[0], ra * rb)
        for fa, fb in zip(a.factors, b.factors)
    )
    return CpdTensor(lam, factors)


def sum_entries(t: CpdTensor) -> float:
    col_sums = np.prod([f.sum(axis=0) for f in t.factors], axis=0)
    return float(t.lambdas @ col_sums)


def scale(t: CpdTensor, s: float) -> CpdTensor:
    return CpdTensor(t.lambdas * s, t.factors)


def norm(t: CpdTensor) -> float:
    """Frobenius norm computed from factor Gram matrices."""
    gram = np.prod([f.T @ f for f in t.factors], axis=0)
    return float(np.sqrt(max(t.lambdas @ gram @ t.lambdas, 0.0)))


def svd_truncated(m, energy_fraction: float = 1.0) -> SvdFactors:
    """SVD keeping the leading triplets that carry ``energy_fraction`` of
    the singular value sum.

    The kept rank is the smallest R with ``sum(S[:R]) >= energy_fraction *
    sum(S)``.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.size == 0:
        raise ValueError(f"svd_truncated needs a nonempty matrix, got shape {m.shape}")
    if not 0.0 < energy_fraction <= 1.0:
        raise ValueError(f"energy_fraction must lie in (0, 1], got {energy_fraction}")
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    r = _truncation_rank(s, energy_fraction)
    return SvdFactors(u[:, :r], s[:r], vt[:r].T)


def _truncation_rank(s, energy_fraction):
    cum = np.cumsum(s)
    r = int(np.searchsorted(cum, energy_fraction * cum[-1], side="left")) + 1
    return min(r, s.shape[0])


def embed_invariant_modes(components: CpdTensor, variant_positions: Sequence[int],
                          full_shape: Sequence[int]) -> CpdTensor:
    """Lift a tensor over ``d`` modes into ``len(full_shape)`` modes.

    The factors of ``components`` are placed at ``variant_positions`` and
    every other mode gets an all-ones factor, so the result is constant
    along those modes.  Rank is unchanged.
    """
    full_shape = tuple(int(n) for n in full_shape)
    positions = [int(p) for p in variant_positions]
    if len(positions) != components.ndim:
        raise ShapeMismatchError(
            f"{len(positions)} variant positions for a tensor with {components.ndim} modes")
    if any(b <= a for a, b in zip(positions, positions[1:])):
        raise ValueError(f"variant positions must be strictly increasing, got {positions}")
    for p in positions:
        if not 0 <= p < len(full_shape):
            raise ValueError(f"variant position {p} out of range for {len(full_shape)} modes")
    for p, f in zip(positions, components.factors):
        if f.shape[0] != full_shape[p]:
            raise ShapeMismatchError(
                f"mode {p}: component factor has {f.shape[0]} rows, full shape says {full_shape[p]}")
    r = components.rank
    factors = [np.ones((n, r)) for n in full_shape]
    for p, f in zip(positions, components.factors):
        factors[p] = f
    return CpdTensor(components.lambdas, tuple(factors))


# ---------------------------------------------------------------------------
# Alternating least squares
# ---------------------------------------------------------------------------

class _CpdTarget:
    """ALS target given in CP form; never densified."""

    def __init__(self, t: CpdTensor):
        self.t = t
        self.shape = t.shape
        gram = np.prod([f.T @ f for f in t.factors], axis=0)
        self.norm_sq = float(max(t.lambdas @ gram @ t.lambdas, 0.0))

    def gram_mode(self, n):
        t = self.t
        g = np.prod([f.T @ f for m, f in enumerate(t.factors) if m != n], axis=0)
        return t.factors[n] @ (t.lambdas[:, None] * g * t.lambdas[None, :]) @ t.factors[n].T

    def mttkrp(self, factors, n):
        cross = [p.T @ a for p, a in zip(self.t.factors, factors)]
        prod = self.t.lambdas[:, None] * np.prod([c for m, c in enumerate(cross) if m != n], axis=0)
        return self.t.factors[n] @ prod


class _DenseTarget:

    def __init__(self, m: np.ndarray):
        self.m = m
        self.shape = m.shape
        self.norm_sq = float(np.sum(m * m))

    def gram_mode(self, n):
        unfolded = np.moveaxis(self.m, n, 0).reshape(self.m.shape[n], -1)
        return unfolded @ unfolded.T

    def mttkrp(self, factors, n):
        d = self.m.ndim
        operands = [self.m, list(range(d))]
        for j, a in enumerate(factors):
            if j != n:
                operands += [a, [j, d]]
        operands.append([n, d])
        return np.einsum(*operands, optimize=True)


def _init_factors(target, rank, init, rng):
    if init == "random":
        return [rng.uniform(size=(n, rank)) for n in target.shape]
    if init != "nvecs":
        raise ValueError(f"unknown ALS init {init!r}; use 'nvecs' or 'random'")
    factors = []
    for n, size in enumerate(target.shape):
        # leading eigenvectors of the mode-n unfolding times its transpose
        _, vecs = np.linalg.eigh(target.gram_mode(n))
        a = vecs[:, ::-1][:, :rank]
        if a.shape[1] < rank:
            a = np.hstack([a, rng.uniform(size=(size, rank - a.shape[1]))])
        factors.append(a)
    return factors


def _als(target, rank, max_iters, tol, seed, init="nvecs", verbose=False):
    rng = np.random.default_rng(seed)
    d = len(target.shape)
    factors = _init_factors(target, rank, init, rng)
    lam = np.ones(rank)
    grams = [a.T @ a for a in factors]
    norm_t = np.sqrt(target.norm_sq)

    if norm_t == 0.0:
        return CpdTensor(np.zeros(rank), tuple(factors)), AlsInfo(1.0, [1.0], 0, True)

    fits = []
    best = (-np.inf, lam, factors)
    fit_old = 0.0
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        for n in range(d):
            mk = target.mttkrp(factors, n)
            v = np.prod([g for m, g in enumerate(grams) if m != n], axis=0)
            a = mk @ np.linalg.pinv(v, hermitian=True)
            lam = np.linalg.norm(a, axis=0)
            safe = np.where(lam > 0, lam, 1.0)
            factors[n] = a / safe
            grams[n] = factors[n].T @ factors[n]
        # mk is the MTTKRP of the last mode, still valid after its update
        inner = float(np.sum(lam * np.sum(factors[-1] * mk, axis=0)))
        norm_x_sq = float(lam @ np.prod(grams, axis=0) @ lam)
        resid = np.sqrt(max(target.norm_sq + norm_x_sq - 2.0 * inner, 0.0))
        fit = 1.0 - resid / norm_t
        fits.append(fit)
        if verbose:
            print(f"  sweep {it:3d}: fit = {fit:.10f}")
        if fit > best[0]:
            best = (fit, lam.copy(), [f.copy() for f in factors])
        if it > 1 and abs(fit - fit_old) < tol:
            converged = True
            break
        fit_old = fit

    fit, lam, factors = best
    return CpdTensor(lam, tuple(factors)), AlsInfo(float(fit), fits, it, converged)


def _check_rank(rank):
    if isinstance(rank, bool) or int(rank) != rank or rank < 1:
        raise ValueError(f"target rank must be a positive integer, got {rank!r}")
    return int(rank)


def rank_reduce_als(t: CpdTensor, target_rank: int, max_iters: int = 50,
                    tol: float = 1e-6, seed: int = 0, init: str = "nvecs",
                    return_info: bool = False, verbose: bool = False):
    """Round a CP tensor to lower rank by alternating least squares.

    The normal equations use only the Gram matrices of the factors and the
    cross products ``P_m^T A_m`` with the input factors, so the cost per
    sweep is ``O(R_in * R * sum(N_j))`` and nothing is densified.

    Parameters
    ----------
    t : CpdTensor
    target_rank : int
        Maximum rank of the result.  If ``t`` already has rank
        ``<= target_rank`` it is returned unchanged.
    max_iters : int
        Maximum number of full sweeps.
    tol : float
        Stop once the relative fit changes by less than this between sweeps.
    seed : int
        Seed for the uniform [0, 1) draws used by ``init="random"`` (and to
        pad ``nvecs`` when a mode has fewer rows than ``target_rank``).
    init : {"nvecs", "random"}
        ``"nvecs"`` starts from the leading left singular vectors of each
        mode unfolding, computed from factor Gram matrices.  ``"random"``
        draws every factor uniformly from [0, 1).
    return_info : bool
        Also return an :class:`AlsInfo` with the per-sweep fit history.

    Returns
    -------
    CpdTensor or (CpdTensor, AlsInfo)
        Not converging within ``max_iters`` is not an error; the best iterate
        is returned.
    """
    target_rank = _check_rank(target_rank)
    if t.rank <= target_rank:
        out = CpdTensor(t.lambdas.copy(), tuple(f.copy() for f in t.factors))
        info = AlsInfo(1.0, [1.0], 0, True)
    else:
        out, info = _als(_CpdTarget(t), target_rank, max_iters, tol, seed, init, verbose)
    return (out, info) if return_info else out


def decompose_dense(m, rank: int, seed: int = 0, max_iters: int = 50, tol: float = 1e-6,
                    init: str = "nvecs", return_info: bool = False, cap: int = ORACLE_CAP):
    """CP-ALS fit of a full tensor."""
    rank = _check_rank(rank)
    m = np.asarray(m, dtype=float)
    _check_cap(m.shape, cap)
    out, info = _als(_DenseTarget(m), rank, max_iters, tol, seed, init)
    return (out, info) if return_info else out


def to_json(t: CpdTensor) -> str:
    """Debug dump: shape, lambdas and row-major factor matrices."""
    doc = {
        "shape": list(t.shape),
        "lambdas": t.lambdas.tolist(),
        "factors": [f.tolist() for f in t.factors],
    }
    return json.dumps(doc)


def from_json(text: str) -> CpdTensor:
    doc = json.loads(text)
    t = cpd_new(doc["lambdas"], [np.asarray(f, dtype=float).reshape(-1, len(doc["lambdas"]))
                                 for f in doc["factors"]])
    if list(t.shape) != list(doc["shape"]):
        raise ShapeMismatchError(f"declared shape {doc['shape']} but factors give {t.shape}")
    return t
