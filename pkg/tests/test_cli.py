import json
import subprocess
import sys

import pytest

from ldl_age import load_checkpoint
from ldl_age.cli import build_parser, main


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "train.csv"
    assert main(["synth", "--n", "300", "--dim", "8", "--per-speaker", "3",
                 "--seed", "1", "--out", str(path)]) == 0
    return path


@pytest.fixture(scope="module")
def trained(dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["train", "--data", str(dataset), "--grid", "18:80", "--hidden", "16",
                 "--max-epochs", "3", "--out", str(out)]) == 0
    return out


def manifest(path):
    return json.loads(path.read_text())


class TestSynth:
    def test_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        for p in (a, b):
            assert main(["synth", "--n", "50", "--dim", "4", "--seed", "7", "--out", str(p)]) == 0
        assert a.read_bytes() == b.read_bytes()
        m = manifest(tmp_path / "a.jsonl.manifest.json")
        assert m["command"] == "synth" and m["seed"] == 7 and m["config"]["n_samples"] == 50

    def test_negative_noise(self, tmp_path, capsys):
        assert main(["synth", "--noise", "-1", "--out", str(tmp_path / "x.csv")]) == 2
        assert "noise" in capsys.readouterr().err

    def test_bad_flag_exits_2(self, tmp_path):
        with pytest.raises(SystemExit) as info:
            main(["synth", "--ages", "abc", "--out", str(tmp_path / "x.csv")])
        assert info.value.code == 2


class TestTrain:
    def test_outputs(self, trained):
        assert {p.name for p in trained.iterdir()} >= {"checkpoint.json", "train_log.csv",
                                                     "manifest.json"}
        m = manifest(trained / "manifest.json")
        assert m["command"] == "train" and m["config"]["method"] == "LDL"
        assert m["config"]["loss"] == {"lambda1": 1.0, "lambda2": 1.0, "lambda3": 0.1,
                                       "sigma": 1.0}
        assert m["config"]["overrides"] == {}
        assert set(m["checksums"]) == {"checkpoint", "train_log"}
        assert len(m["checksums"]["checkpoint"]) == 64
        assert (trained / "train_log.csv").read_text().startswith("epoch,kl,l1,var,total")

    def test_overrides_are_recorded(self, dataset, tmp_path):
        assert main(["train", "--data", str(dataset), "--method", "reg", "--sigma", "2.5",
                     "--grid", "18:80", "--hidden", "none", "--max-epochs", "1",
                     "--out", str(tmp_path)]) == 0
        m = manifest(tmp_path / "manifest.json")
        assert m["config"]["overrides"] == {"sigma": 2.5}
        assert m["config"]["loss"]["sigma"] == 2.5 and m["config"]["loss"]["lambda2"] == 1.0
        assert load_checkpoint(tmp_path / "checkpoint.json").loss.sigma == 2.5

    def test_deterministic(self, dataset, tmp_path):
        for d in ("a", "b"):
            assert main(["train", "--data", str(dataset), "--grid", "18:80", "--hidden", "8",
                         "--max-epochs", "2", "--seed", "5", "--deterministic",
                         "--out", str(tmp_path / d)]) == 0
        assert ((tmp_path / "a" / "checkpoint.json").read_bytes()
                == (tmp_path / "b" / "checkpoint.json").read_bytes())

    def test_divergence_exits_3(self, dataset, tmp_path, capsys):
        assert main(["train", "--data", str(dataset), "--lr", "1e6", "--momentum", "0",
                     "--grid", "18:80", "--hidden", "16", "--max-epochs", "5",
                     "--out", str(tmp_path)]) == 3
        assert "diverged" in capsys.readouterr().err

    def test_missing_data_exits_2(self, tmp_path):
        assert main(["train", "--data", str(tmp_path / "none.csv"), "--out", str(tmp_path)]) == 2

    def test_malformed_data_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("id,age,f0\na,30,1\nb,old,2\n")
        assert main(["train", "--data", str(bad), "--out", str(tmp_path / "o")]) == 2
        assert "line 3" in capsys.readouterr().err


class TestEvaluatePredict:
    def test_evaluate(self, trained, dataset, tmp_path, capsys):
        assert main(["evaluate", "--checkpoint", str(trained / "checkpoint.json"),
                     "--data", str(dataset), "--out", str(tmp_path)]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "method,mae,pearson,n"
        method, mae, rho, n = lines[1].split(",")
        assert method == "LDL" and float(mae) >= 0 and -1 <= float(rho) <= 1 and n == "300"
        assert (tmp_path / "eval.csv").read_text().splitlines() == lines

    def test_overfit_run_scores_near_zero(self, tmp_path, capsys):
        data = tmp_path / "tiny.csv"
        main(["synth", "--n", "40", "--dim", "16", "--noise", "0", "--out", str(data)])
        assert main(["train", "--data", str(data), "--grid", "18:80", "--lr", "0.01",
                     "--patience", "1000", "--max-epochs", "500", "--out", str(tmp_path / "r")]) == 0
        capsys.readouterr()
        assert main(["evaluate", "--checkpoint", str(tmp_path / "r" / "checkpoint.json"),
                     "--data", str(data)]) == 0
        assert float(capsys.readouterr().out.splitlines()[1].split(",")[1]) < 0.5

    def test_group_by_utterance(self, trained, tmp_path, capsys):
        data = tmp_path / "clips.csv"
        rows = ["id,speaker_id,age,utterance," + ",".join(f"f{i}" for i in range(8))]
        for u in range(10):
            for c in range(3):
                feats = ",".join(str(0.1 * (u + c + i)) for i in range(8))
                rows.append(f"c{u}_{c},spk{u},{30 + u},u{u},{feats}")
        data.write_text("\n".join(rows) + "\n")
        ck = str(trained / "checkpoint.json")
        assert main(["evaluate", "--checkpoint", ck, "--data", str(data),
                     "--group-by", "utterance"]) == 0
        assert capsys.readouterr().out.splitlines()[1].endswith(",10")
        assert main(["predict", "--checkpoint", ck, "--data", str(data),
                     "--group-by", "utterance", "--out", str(tmp_path / "p")]) == 0
        pred = (tmp_path / "p" / "predictions.csv").read_text().splitlines()
        assert pred[0] == "utterance,predicted_age,n_clips"
        assert len(pred) == 11 and all(l.endswith(",3") for l in pred[1:])
        assert all(18 <= float(l.split(",")[1]) <= 80 for l in pred[1:])

    def test_predict_without_ages(self, trained, tmp_path):
        data = tmp_path / "unlabeled.csv"
        data.write_text("id,f0,f1,f2,f3,f4,f5,f6,f7\nx,0,0,0,0,0,0,0,0\ny,1,1,1,1,1,1,1,1\n")
        assert main(["predict", "--checkpoint", str(trained / "checkpoint.json"),
                     "--data", str(data), "--out", str(tmp_path / "p")]) == 0
        lines = (tmp_path / "p" / "predictions.csv").read_text().splitlines()
        assert lines[0] == "id,predicted_age" and [l.split(",")[0] for l in lines[1:]] == ["x", "y"]
        assert all(18 <= float(l.split(",")[1]) <= 80 for l in lines[1:])

    def test_dimension_mismatch_exits_4(self, trained, tmp_path, capsys):
        data = tmp_path / "small.csv"
        main(["synth", "--n", "20", "--dim", "5", "--out", str(data)])
        assert main(["evaluate", "--checkpoint", str(trained / "checkpoint.json"),
                     "--data", str(data)]) == 4
        assert "dimension" in capsys.readouterr().err


class TestAblate:
    def test_default_grid_six_cells_deterministic(self, dataset, tmp_path, capsys):
        outs = []
        for d in ("a", "b"):
            assert main(["ablate", "--data", str(dataset), "--grid", "18:80", "--hidden", "8",
                         "--max-epochs", "2", "--out", str(tmp_path / d)]) == 0
            outs.append((tmp_path / d / "results.csv").read_text())
        assert outs[0] == outs[1]
        rows = outs[0].splitlines()[1:]
        assert len(rows) == 6
        assert [(r.split(",")[3], r.split(",")[4]) for r in rows] == [
            ("0.01", "0.1"), ("0.1", "0.5"), ("0.1", "1"), ("1", "0.5"), ("1", "1"), ("10", "3")]
        table = (tmp_path / "a" / "table.txt").read_text().splitlines()
        assert table[0].split()[1:] == ["0.01", "0.1", "0.1", "1", "1", "10"]
        m = manifest(tmp_path / "a" / "manifest.json")
        assert len(m["config"]["cells"]) == 6 and m["config"]["seeds"] == [0]

    def test_method_comparison(self, dataset, tmp_path, capsys):
        assert main(["ablate", "--data", str(dataset), "--methods", "reg,cls,regcls,ldl",
                     "--repeats", "2", "--grid", "18:80", "--hidden", "8", "--max-epochs", "2",
                     "--out", str(tmp_path)]) == 0
        rows = (tmp_path / "results.csv").read_text().splitlines()[1:]
        assert [r.split(",")[0] for r in rows] == ["Reg", "Cls", "RegCls", "LDL"]
        assert len((tmp_path / "cells.csv").read_text().splitlines()) == 1 + 4 * 2
        assert "Method" in capsys.readouterr().out

    def test_bad_pairs(self, dataset, tmp_path):
        assert main(["ablate", "--data", str(dataset), "--pairs", "1:2:3",
                     "--out", str(tmp_path)]) == 2


class TestHelp:
    @pytest.mark.parametrize("command", ["train", "evaluate", "predict", "synth", "ablate"])
    def test_every_flag_documented_with_default(self, command):
        sub = build_parser()._subparsers._group_actions[0].choices[command]
        text = " ".join(sub.format_help().split())
        for action in sub._actions:
            if not action.option_strings or action.dest == "help":
                continue
            assert action.option_strings[-1] in text
            if not action.required:
                assert f"(default: {action.default})" in text, action.dest

    def test_console_script(self):
        proc = subprocess.run([sys.executable, "-m", "ldl_age.cli", "--help"],
                              capture_output=True, text=True, check=True)
        for name in ("train", "evaluate", "predict", "synth", "ablate"):
            assert name in proc.stdout
