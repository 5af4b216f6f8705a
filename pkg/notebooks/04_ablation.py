# %% [markdown]
# # Variance weight and target width
#
# Sweep the variance weight lambda3 together with the target width sigma,
# keeping lambda1 = lambda2 = 1.

# %%
from ldl_age import AgeGrid, SyntheticSpec, TrainConfig, generate_synthetic, split_train_validation
from ldl_age.experiments import ABLATION_PAIRS, ablation_cells, render_ablation, run_sweep, summarize

print("cells (lambda3, sigma):", ABLATION_PAIRS)

data = generate_synthetic(SyntheticSpec(n_samples=2000, dim=32, seed=0))
splits = {s: split_train_validation(data, 0.2, s) for s in (0, 1)}

# %% [markdown]
# Two seeds, a shorter epoch budget. Results are averaged per cell.

# %%
results = run_sweep(ablation_cells(), splits, AgeGrid(1, 100), train_config=TrainConfig(max_epochs=30))
rows = summarize(results)
print(render_ablation(rows))

# %% [markdown]
# Large variance weights pull the prediction toward a narrow peak before it
# has found the right age, and MAE suffers. A cell that diverges outright
# is reported as failed and the sweep carries on.

# %%
for r in rows:
    print(f"{r.cell.label:<24} ok={r.n_ok} failed={r.n_failed} mae={r.mae:.3f}")
