# %% [markdown]
# # Targets, moments and the hybrid loss
#
# A true age becomes a soft target over the integer age grid. The model
# outputs logits over the same grid, and its point prediction is the mean
# of the softmax.

# %%
import numpy as np

from ldl_age import (
    AgeGrid,
    GaussianTargetSpec,
    HybridLossConfig,
    discretize_gaussian,
    distribution_variance,
    expected_age,
    hybrid_loss,
    method_config,
)

grid = AgeGrid(1, 100)
print(grid, "K =", grid.K)

# %% [markdown]
# ## Soft targets
# Small sigma collapses to a one-hot label. Larger sigma spreads mass over
# neighbouring ages.

# %%
for sigma in (0.1, 1.0, 3.0):
    d = discretize_gaussian(GaussianTargetSpec(37.4, sigma), grid)
    top = np.argsort(d.probs)[::-1][:4]
    print(f"sigma={sigma:<4} mean={expected_age(d):6.3f} var={distribution_variance(d):7.4f} "
          f"top ages {grid.ages[top].astype(int).tolist()}")

# %% [markdown]
# Three-point sanity check on a tiny grid.

# %%
small = discretize_gaussian(GaussianTargetSpec(2, 1), AgeGrid(1, 3))
print(np.round(small.probs, 6), distribution_variance(small))

# %% [markdown]
# ## Loss components
# Each preset is a weighting of KL, absolute error of the mean, and variance.

# %%
rng = np.random.default_rng(0)
logits = rng.normal(0, 1, grid.K)
for name in ("Reg", "Cls", "RegCls", "LDL"):
    b = hybrid_loss(method_config(name).loss, 42.0, logits, grid)
    print(f"{name:<7} kl={b.kl:7.3f} l1={b.l1:7.3f} var={b.variance:8.2f} total={b.total:8.3f}")

# %% [markdown]
# Shifting all logits by a constant changes nothing, since the softmax is
# shift invariant.

# %%
cfg = HybridLossConfig()
print(hybrid_loss(cfg, 42.0, logits, grid).total, hybrid_loss(cfg, 42.0, logits + 50, grid).total)
