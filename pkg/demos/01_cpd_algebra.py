# %% [markdown]
# # CP tensors in a few lines
#
# A CP tensor stores a weight per term plus one factor matrix per mode.
# Element-wise products multiply the ranks, and ALS brings the rank back down
# without ever forming the dense array.

# %%
import numpy as np

from cpdpmf import cpd

rng = np.random.default_rng(0)
shape = (30, 30, 20, 20)


def random_positive(rank):
    return cpd.cpd_new(rng.uniform(0.5, 1.5, rank), [rng.uniform(0, 1, (n, rank)) for n in shape])


a = random_positive(3)
b = random_positive(2)
print(a, b)

# %% [markdown]
# ## Storage
# The dense array has 360 000 entries; the CP form keeps rank * sum(N) numbers.

# %%
print("dense entries:", np.prod(shape))
print("CP numbers for rank 3:", a.rank * (sum(shape) + 1))

# %% [markdown]
# ## Hadamard product
# The product of rank-3 and rank-2 tensors has rank 6 and matches the dense product.

# %%
h = cpd.hadamard(a, b)
dense = cpd.to_dense(a) * cpd.to_dense(b)
print("rank of product:", h.rank)
print("max abs error vs dense:", np.max(np.abs(cpd.to_dense(h) - dense)))
print("sum of entries:", cpd.sum_entries(h), dense.sum())

# %% [markdown]
# ## Rank reduction
# Write ``a`` with every term split in two, giving a rank-6 tensor that is
# really rank 3.  ALS recovers the compact form.

# %%
split = rng.uniform(0.2, 0.8, a.rank)
redundant = cpd.cpd_new(np.r_[split * a.lambdas, (1 - split) * a.lambdas],
                        [np.hstack([f, f]) for f in a.factors])
small, info = cpd.rank_reduce_als(redundant, 3, max_iters=300, tol=1e-14, return_info=True)
ref = cpd.to_dense(a)
rel = np.linalg.norm(cpd.to_dense(small) - ref) / np.linalg.norm(ref)
print(f"rank {redundant.rank} -> {small.rank}: {info.iterations} sweeps, relative error {rel:.2e}")

# %% [markdown]
# A genuine product is not low rank, so truncation costs accuracy.

# %%
for r in (2, 4):
    approx = cpd.rank_reduce_als(h, r, max_iters=30)
    rel = np.linalg.norm(cpd.to_dense(approx) - dense) / np.linalg.norm(dense)
    print(f"product truncated to rank {r}: relative error {rel:.2e}")

# %% [markdown]
# ## Truncated SVD
# Keep the singular values that carry 99.99% of the energy.

# %%
m = rng.normal(size=(40, 5)) @ rng.normal(size=(5, 40)) + 1e-6 * rng.normal(size=(40, 40))
f = cpd.svd_truncated(m, 0.9999)
print("kept", f.rank, "of", min(m.shape), "singular values")
