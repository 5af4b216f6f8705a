import math

import pytest

from ldl_age import (
    AgeGrid,
    InvalidParameterError,
    SyntheticSpec,
    TrainConfig,
    generate_synthetic,
    split_train_validation,
)
from ldl_age.experiments import (
    SUMMARY_HEADER,
    ABLATION_PAIRS,
    ablation_cells,
    method_cells,
    render_ablation,
    render_comparison,
    run_sweep,
    summarize,
    summary_csv,
)
from ldl_age.losses import HybridLossConfig


def small_splits(seeds=(0,), n=120):
    data = generate_synthetic(SyntheticSpec(n_samples=n, dim=6, seed=11))
    return {s: split_train_validation(data, 0.2, s) for s in seeds}


FAST = TrainConfig(max_epochs=3)
GRID = AgeGrid(18, 80)


class TestCells:
    def test_method_cells(self):
        cells = method_cells()
        assert [c.label for c in cells] == ["Reg", "Cls", "RegCls", "LDL"]

    def test_default_ablation_grid(self):
        cells = ablation_cells()
        assert len(cells) == 6
        assert [(c.method.loss.lambda3, c.method.loss.sigma) for c in cells] == list(ABLATION_PAIRS)
        assert all(c.method.loss.lambda1 == 1 and c.method.loss.lambda2 == 1 for c in cells)
        assert all("," not in c.label for c in cells)


class TestSweep:
    def test_results_in_cell_seed_order(self, tmp_path):
        cells = method_cells(["reg", "ldl"])
        res = run_sweep(cells, small_splits((0, 1)), GRID, (8,), FAST, out_dir=tmp_path)
        assert [(r.cell.label, r.seed) for r in res] == [("Reg", 0), ("Reg", 1), ("LDL", 0), ("LDL", 1)]
        assert all(r.ok and r.epochs == 3 for r in res)
        assert (tmp_path / "LDL_seed1" / "checkpoint.json").exists()
        assert (tmp_path / "Reg_seed0" / "train_log.csv").exists()

    def test_deterministic(self):
        cells = ablation_cells(ABLATION_PAIRS[:2])
        a = run_sweep(cells, small_splits(), GRID, (8,), FAST)
        b = run_sweep(cells, small_splits(), GRID, (8,), FAST)
        assert summary_csv(summarize(a)) == summary_csv(summarize(b))

    def test_parallel_matches_serial(self):
        cells = method_cells(["cls", "ldl"])
        serial = run_sweep(cells, small_splits(), GRID, (8,), FAST, jobs=1)
        parallel = run_sweep(cells, small_splits(), GRID, (8,), FAST, jobs=2)
        assert [r.result for r in serial] == [r.result for r in parallel]

    def test_failed_cell_is_recorded(self):
        data = generate_synthetic(SyntheticSpec(n_samples=120, dim=6, seed=11))
        for s in data:
            s.embedding = s.embedding * 1e200
        splits = {0: split_train_validation(data, 0.2, 0)}
        res = run_sweep(method_cells(["ldl"]), splits, GRID, (8,), FAST)
        assert not res[0].ok and "TrainingDivergedError" in res[0].error
        row = summarize(res)[0]
        assert math.isnan(row.mae) and row.n_failed == 1 and row.n_ok == 0
        assert "failed" in render_comparison([row])


class TestRendering:
    def test_summary_csv(self):
        res = run_sweep(ablation_cells(), small_splits(), GRID, (), TrainConfig(max_epochs=1))
        text = summary_csv(summarize(res))
        lines = text.splitlines()
        assert lines[0] == SUMMARY_HEADER
        assert len(lines) == 7
        assert all(len(l.split(",")) == len(SUMMARY_HEADER.split(",")) for l in lines)

    def test_ablation_table_layout(self):
        res = run_sweep(ablation_cells(), small_splits(), GRID, (), TrainConfig(max_epochs=1))
        table = render_ablation(summarize(res)).splitlines()
        assert table[0].split()[1:] == ["0.01", "0.1", "0.1", "1", "1", "10"]
        assert table[1].split()[1:] == ["0.1", "0.5", "1", "0.5", "1", "3"]
        assert len(table[2].split()) == 7

    def test_comparison_rows(self):
        res = run_sweep(method_cells(), small_splits(), GRID, (), TrainConfig(max_epochs=1))
        lines = render_comparison(summarize(res)).splitlines()
        assert [l.split()[0] for l in lines] == ["Method", "Reg", "Cls", "RegCls", "LDL"]

    def test_custom_lambdas(self):
        cells = ablation_cells([(0.5, 2.0)], lambda1=0.0, lambda2=1.0)
        assert cells[0].method.loss == HybridLossConfig(0.0, 1.0, 0.5, 2.0)
        with pytest.raises(InvalidParameterError):
            ablation_cells([(0.5, -1.0)])
