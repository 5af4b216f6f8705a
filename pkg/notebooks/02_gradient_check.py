# %% [markdown]
# # Checking analytic gradients
#
# The loss gradient with respect to the logits is closed form. Backprop
# through the MLP head then gives parameter gradients. Here both are
# compared against central finite differences.

# %%
import numpy as np

from ldl_age import AgeGrid, HybridLossConfig, backward, forward, hybrid_loss, init_head
from ldl_age import hybrid_loss_gradient

grid = AgeGrid(20, 39)
cfg = HybridLossConfig(lambda1=1.0, lambda2=1.0, lambda3=0.1, sigma=1.0)
rng = np.random.default_rng(1)

# %% [markdown]
# ## Logit level

# %%
z = rng.normal(size=grid.K)
t = 27.3
analytic = hybrid_loss_gradient(cfg, t, z, grid)
h = 1e-5
numeric = np.array([
    (hybrid_loss(cfg, t, z + h * e, grid).total - hybrid_loss(cfg, t, z - h * e, grid).total) / (2 * h)
    for e in np.eye(grid.K)
])
print("max abs diff (logits):", np.max(np.abs(analytic - numeric)))
print("gradient sums to zero:", analytic.sum())

# %% [markdown]
# ## Parameter level, through a 6 -> 8 -> K head

# %%
head = init_head(6, [8], grid.K, seed=3)
x = rng.normal(size=6)
logits, trace = forward(head, x)
grads = backward(head, trace, hybrid_loss_gradient(cfg, t, logits, grid))


def total(params_head):
    return hybrid_loss(cfg, t, forward(params_head, x)[0], grid).total


worst = 0.0
for p, g in zip(head.params(), grads.params()):
    num = np.zeros_like(p)
    for i in np.ndindex(p.shape):
        old = p[i]
        p[i] = old + h
        up = total(head)
        p[i] = old - h
        down = total(head)
        p[i] = old
        num[i] = (up - down) / (2 * h)
    rel = np.abs(g - num) / np.maximum(np.maximum(np.abs(g), np.abs(num)), 1e-8)
    worst = max(worst, rel.max())
    print(p.shape, "max rel err", f"{rel.max():.2e}")
print("worst:", worst)

# %% [markdown]
# ## The L1 kink
# When the predicted mean equals the label exactly, the L1 term has no
# derivative. The implementation uses the zero subgradient there, so only
# the KL and variance terms contribute.
