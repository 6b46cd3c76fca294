import numpy as np
import pytest

from cpdpmf import cpd


def random_cpd(rng, shape, rank, positive=False):
    if positive:
        factors = [rng.uniform(0.1, 1.0, size=(n, rank)) for n in shape]
        lam = rng.uniform(0.5, 2.0, size=rank)
    else:
        factors = [rng.standard_normal((n, rank)) for n in shape]
        lam = rng.standard_normal(rank)
    return cpd.cpd_new(lam, factors)


def brute_dense(t):
    """Entry-by-entry evaluation of a CP tensor, independent of einsum."""
    out = np.zeros(t.shape)
    for idx in np.ndindex(*t.shape):
        val = 0.0
        for r in range(t.rank):
            term = t.lambdas[r]
            for j, i in enumerate(idx):
                term *= t.factors[j][i, r]
            val += term
        out[idx] = val
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
