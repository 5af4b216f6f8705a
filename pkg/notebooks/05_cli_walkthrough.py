# %% [markdown]
# # Command-line walkthrough
#
# The same pipeline through `ldl-age`. Each command writes a
# `manifest.json` with the resolved config, seed and output checksums.

# %%
import json
import subprocess
import sys
import tempfile
from pathlib import Path

work = Path(tempfile.mkdtemp(prefix="ldl-age-"))


def run(*args):
    cmd = [sys.executable, "-m", "ldl_age.cli", *args]
    print("$ ldl-age", " ".join(args))
    proc = subprocess.run(cmd, capture_output=True, text=True)
    print(proc.stdout + proc.stderr, "exit", proc.returncode)
    return proc.returncode


# %% [markdown]
# ## Data, training, evaluation

# %%
run("synth", "--n", "1000", "--dim", "16", "--per-speaker", "4", "--seed", "3",
    "--out", str(work / "data.csv"))
run("train", "--data", str(work / "data.csv"), "--method", "ldl", "--max-epochs", "20",
    "--out", str(work / "run"))
run("evaluate", "--checkpoint", str(work / "run" / "checkpoint.json"),
    "--data", str(work / "data.csv"))

# %%
manifest = json.loads((work / "run" / "manifest.json").read_text())
print(json.dumps(manifest["config"]["loss"], indent=2), manifest["config"]["stop_reason"])

# %% [markdown]
# ## Grouped prediction
# Clips sharing a group key are averaged into one prediction per group.

# %%
run("predict", "--checkpoint", str(work / "run" / "checkpoint.json"),
    "--data", str(work / "data.csv"), "--group-by", "speaker_id", "--out", str(work / "pred"))
print((work / "pred" / "predictions.csv").read_text().splitlines()[:4])

# %% [markdown]
# ## Errors map to exit codes
# 2 for bad input, 3 for divergence, 4 for a checkpoint that does not fit the data.

# %%
run("synth", "--noise", "-1", "--out", str(work / "bad.csv"))
run("synth", "--n", "50", "--dim", "8", "--out", str(work / "dim8.csv"))
run("evaluate", "--checkpoint", str(work / "run" / "checkpoint.json"), "--data", str(work / "dim8.csv"))

# %% [markdown]
# ## Ablation grid

# %%
run("ablate", "--data", str(work / "data.csv"), "--max-epochs", "5", "--out", str(work / "ablate"))
