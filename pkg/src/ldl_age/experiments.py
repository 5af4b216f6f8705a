"""Method-comparison and ablation sweeps over shared seeds.

A sweep is a list of :class:`Cell` (a named loss configuration) crossed with
a set of seeds.  Each seed supplies its own train/test split; every cell sees
the same split and the same initial head for a given seed.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .data import as_arrays
from .errors import LDLError
from .grid import AgeGrid
from .inference import EvalResult, evaluate, predict_ages
from .losses import HybridLossConfig
from .model import init_head, save_checkpoint
from .trainer import METHODS, MethodConfig, TrainConfig, fit, method_config

ABLATION_PAIRS = ((0.01, 0.1), (0.1, 0.5), (0.1, 1.0), (1.0, 0.5), (1.0, 1.0), (10.0, 3.0))
COMPARISON_METHODS = tuple(METHODS)


@dataclass(frozen=True)
class Cell:
    label: str
    method: MethodConfig


@dataclass
class CellResult:
    cell: Cell
    seed: int
    result: EvalResult | None
    epochs: int = 0
    error: str | None = None

    @property
    def ok(self):
        return self.error is None


@dataclass
class SummaryRow:
    cell: Cell
    mae: float
    pearson: float
    n: int
    n_ok: int
    n_failed: int


def method_cells(names=COMPARISON_METHODS) -> list[Cell]:
    cells = []
    for name in names:
        m = method_config(name)
        cells.append(Cell(m.name, m))
    return cells


def ablation_cells(pairs=ABLATION_PAIRS, lambda1=1.0, lambda2=1.0) -> list[Cell]:
    """One LDL cell per ``(lambda3, sigma)`` pair."""
    return [
        Cell(f"LDL(l3={l3:g};sigma={s:g})",
             MethodConfig("LDL", HybridLossConfig(lambda1, lambda2, l3, s)))
        for l3, s in pairs
    ]


def _run_one(cell: Cell, seed: int, train, test, grid: AgeGrid, hidden_dims,
             train_config: TrainConfig, out_dir) -> CellResult:
    try:
        X, ages, _ = as_arrays(test)
        head = init_head(X.shape[1], hidden_dims, grid.K, seed)
        cfg = replace(train_config, seed=seed)
        trained, report = fit(head, train, cell.method, cfg, grid=grid)
        res = evaluate(zip(ages, predict_ages(trained, X, grid)))
    except LDLError as exc:
        return CellResult(cell, seed, None, error=f"{type(exc).__name__}: {exc}")
    if out_dir is not None:
        d = Path(out_dir) / _slug(f"{cell.label}_seed{seed}")
        d.mkdir(parents=True, exist_ok=True)
        save_checkpoint(d / "checkpoint.json", trained, grid, cell.method.loss, cell.method.name)
        (d / "train_log.csv").write_text(report.to_csv(), encoding="utf-8")
    return CellResult(cell, seed, res, epochs=len(report.epochs))


def _slug(text: str) -> str:
    return "".join(c if c.isalnum() or c in "._-" else "_" for c in text)


def run_sweep(cells, splits, grid: AgeGrid, hidden_dims=(256,),
              train_config: TrainConfig = TrainConfig(), jobs: int = 1,
              out_dir=None) -> list[CellResult]:
    """Train and evaluate every ``(cell, seed)``.

    ``splits`` maps seed -> ``(train_samples, test_samples)``.  A failing
    cell is recorded in its :class:`CellResult` and does not stop the sweep.
    Results come back in ``(cell, seed)`` order regardless of ``jobs``.
    """
    tasks = [(cell, seed, *splits[seed], grid, tuple(hidden_dims), train_config, out_dir)
             for cell in cells for seed in splits]
    if jobs <= 1:
        return [_run_one(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_run_one, *t) for t in tasks]
        return [f.result() for f in futures]


def summarize(results) -> list[SummaryRow]:
    """Average MAE and Pearson over seeds, one row per cell in first-seen order."""
    by_cell: dict[str, list[CellResult]] = {}
    for r in results:
        by_cell.setdefault(r.cell.label, []).append(r)
    rows = []
    for group in by_cell.values():
        ok = [r.result for r in group if r.ok]
        mae = float(np.mean([e.mae for e in ok])) if ok else math.nan
        rhos = [e.pearson for e in ok if e.pearson is not None]
        rho = float(np.mean(rhos)) if rhos else math.nan
        rows.append(SummaryRow(group[0].cell, mae, rho, sum(e.n for e in ok),
                               len(ok), len(group) - len(ok)))
    return rows


SUMMARY_HEADER = "method,lambda1,lambda2,lambda3,sigma,mae,pearson,n,ok,failed"


def summary_csv(rows) -> str:
    lines = [SUMMARY_HEADER]
    for r in rows:
        c = r.cell.method.loss
        lines.append(f"{r.cell.label},{c.lambda1:g},{c.lambda2:g},{c.lambda3:g},{c.sigma:g},"
                     f"{r.mae:.6f},{r.pearson:.6f},{r.n},{r.n_ok},{r.n_failed}")
    return "\n".join(lines) + "\n"


def _fmt(v):
    return "failed" if math.isnan(v) else f"{v:.2f}"


def render_comparison(rows) -> str:
    """Rows = methods, columns = MAE and rho."""
    width = max(len("Method"), *(len(r.cell.label) for r in rows))
    out = [f"{'Method':<{width}}  {'MAE':>7}  {'rho':>6}"]
    for r in rows:
        out.append(f"{r.cell.label:<{width}}  {_fmt(r.mae):>7}  {_fmt(r.pearson):>6}")
    return "\n".join(out) + "\n"


def render_ablation(rows) -> str:
    """One column per ``(lambda3, sigma)`` cell, MAE underneath."""
    cols = [(f"{r.cell.method.loss.lambda3:g}", f"{r.cell.method.loss.sigma:g}", _fmt(r.mae))
            for r in rows]
    w = max(6, *(len(v) for col in cols for v in col))
    lines = [
        "lambda3  " + " ".join(f"{c[0]:>{w}}" for c in cols),
        "sigma    " + " ".join(f"{c[1]:>{w}}" for c in cols),
        "MAE      " + " ".join(f"{c[2]:>{w}}" for c in cols),
    ]
    return "\n".join(lines) + "\n"
