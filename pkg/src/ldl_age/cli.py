"""Command-line entry point: ``ldl-age {train,evaluate,predict,synth,ablate}``.

Exit codes: 0 success, 2 invalid arguments or unreadable input, 3 training
diverged, 4 checkpoint/data mismatch.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import asdict, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .data import SyntheticSpec, as_arrays, generate_synthetic, load_dataset, save_dataset
from .errors import DataFormatError, InvalidParameterError, TrainingDivergedError
from .experiments import (
    ABLATION_PAIRS,
    ablation_cells,
    method_cells,
    render_ablation,
    render_comparison,
    run_sweep,
    summarize,
    summary_csv,
)
from .grid import AgeGrid
from .inference import EVAL_HEADER, evaluate, predict_ages
from .model import init_head, load_checkpoint, save_checkpoint
from .trainer import MethodConfig, TrainConfig, fit, method_config, split_train_validation

EXIT_OK, EXIT_USAGE, EXIT_DIVERGED, EXIT_MISMATCH = 0, 2, 3, 4


class MismatchError(Exception):
    """Checkpoint and dataset are incompatible."""


# -- manifest ----------------------------------------------------------------


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(path, command, config, inputs, outputs, seed, started) -> Path:
    path = Path(path)
    doc = {
        "command": command,
        "version": __version__,
        "seed": seed,
        "config": config,
        "inputs": {k: str(v) for k, v in inputs.items()},
        "outputs": {k: str(v) for k, v in outputs.items()},
        "checksums": {k: _sha256(Path(v)) for k, v in outputs.items()},
        "started": started,
        "finished": _now(),
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


# -- argument helpers --------------------------------------------------------


def _grid(text):
    try:
        return AgeGrid.parse(text)
    except InvalidParameterError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _age_range(text):
    try:
        lo, hi = (int(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected A:B, got {text!r}") from None
    return lo, hi


def _int_list(text):
    if text.strip() in ("", "none"):
        return []
    try:
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _pairs(text):
    try:
        return tuple(tuple(float(v) for v in p.split(":")) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected L3:SIGMA,..., got {text!r}") from None


def _add_common(p, out_help):
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--out", required=True, help=out_help)
    p.add_argument("--deterministic", action="store_true",
                   help="request bitwise-reproducible training")


def _add_data(p):
    p.add_argument("--data", required=True, help="dataset file (.csv or .jsonl)")
    p.add_argument("--format", choices=("csv", "jsonl"), default=None,
                   help="dataset format; inferred from the suffix when omitted")


def _add_model(p):
    p.add_argument("--grid", type=_grid, default="1:100", help="age grid A:B")
    p.add_argument("--hidden", type=_int_list, default="256",
                   help="hidden layer widths, comma-separated ('none' for a linear head)")


def _add_training(p):
    d = TrainConfig()
    p.add_argument("--batch-size", type=int, default=d.batch_size, help="mini-batch size")
    p.add_argument("--lr", type=float, default=d.initial_lr, help="initial learning rate")
    p.add_argument("--momentum", type=float, default=d.momentum, help="SGD momentum")
    p.add_argument("--lr-decay", type=float, default=d.lr_decay_factor,
                   help="learning-rate factor applied on a validation plateau")
    p.add_argument("--patience", type=int, default=d.patience_epochs,
                   help="epochs without validation improvement before decaying")
    p.add_argument("--min-lr", type=float, default=d.min_lr, help="learning-rate floor")
    p.add_argument("--max-epochs", type=int, default=d.max_epochs, help="epoch budget")
    p.add_argument("--val-fraction", type=float, default=d.validation_fraction,
                   help="fraction of training data held out for validation")


def _add_loss_overrides(p):
    p.add_argument("--lambda1", type=float, default=None, help="KL weight (overrides preset)")
    p.add_argument("--lambda2", type=float, default=None, help="L1 weight (overrides preset)")
    p.add_argument("--lambda3", type=float, default=None,
                   help="variance weight (overrides preset)")
    p.add_argument("--sigma", type=float, default=None,
                   help="target Gaussian width in years (overrides preset)")


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        batch_size=args.batch_size, initial_lr=args.lr, momentum=args.momentum,
        lr_decay_factor=args.lr_decay, patience_epochs=args.patience, min_lr=args.min_lr,
        max_epochs=args.max_epochs, seed=args.seed, validation_fraction=args.val_fraction,
        deterministic=args.deterministic,
    )


def _resolve_method(args):
    preset = method_config(args.method)
    overrides = {k: getattr(args, k) for k in ("lambda1", "lambda2", "lambda3", "sigma")
                 if getattr(args, k) is not None}
    if not overrides:
        return preset, {}
    return MethodConfig(preset.name, replace(preset.loss, **overrides)), overrides


# -- commands ----------------------------------------------------------------


def cmd_train(args) -> int:
    started = _now()
    method, overrides = _resolve_method(args)
    cfg = _train_config(args)
    samples = load_dataset(args.data, args.format)
    grid = args.grid
    dim = samples[0].embedding.shape[0]
    head = init_head(dim, args.hidden, grid.K, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trained, report = fit(head, samples, method, cfg, grid=grid)
    ckpt = save_checkpoint(out / "checkpoint.json", trained, grid, method.loss, method.name)
    log = out / "train_log.csv"
    log.write_text(report.to_csv(), encoding="utf-8")
    config = {
        "method": method.name, "loss": method.loss.as_dict(), "overrides": overrides,
        "train": asdict(cfg), "grid": [grid.a_min, grid.a_max],
        "architecture": {"in_dim": dim, "hidden_dims": list(args.hidden), "K": grid.K},
        "stop_reason": report.stop_reason, "epochs_run": len(report.epochs),
    }
    write_manifest(out / "manifest.json", "train", config, {"data": args.data},
                   {"checkpoint": ckpt, "train_log": log}, args.seed, started)
    last = report.epochs[-1]
    print(f"trained {method.name} for {len(report.epochs)} epochs ({report.stop_reason}); "
          f"final val loss {last.val_total:.4f}; wrote {ckpt}")
    return EXIT_OK


def _load_for_inference(args, require_age):
    ckpt = load_checkpoint(args.checkpoint)
    samples = load_dataset(args.data, args.format, require_age=require_age)
    X, ages, _ = as_arrays(samples)
    if X.shape[1] != ckpt.head.in_dim:
        raise MismatchError(
            f"data embeddings have dimension {X.shape[1]}, checkpoint expects {ckpt.head.in_dim}"
        )
    return ckpt, samples, X, ages


def _group_keys(samples, column):
    keys = []
    for s in samples:
        if column in ("speaker_id", "speaker"):
            key = s.speaker_id
        elif column == "id":
            key = s.sample_id
        else:
            if column not in s.extra:
                raise InvalidParameterError(f"dataset has no column {column!r}")
            key = s.extra[column]
        if key in (None, ""):
            raise InvalidParameterError(f"sample {s.sample_id} has an empty {column!r}")
        keys.append(key)
    return keys


def _grouped(keys, ages, preds):
    """Mean clip prediction per group, groups in first-seen order."""
    order, members = [], {}
    for i, k in enumerate(keys):
        if k not in members:
            order.append(k)
            members[k] = []
        members[k].append(i)
    g_true, g_pred = [], []
    for k in order:
        idx = members[k]
        truths = ages[idx]
        if np.any(truths != truths[0]):
            raise InvalidParameterError(f"clips of group {k!r} carry different ages")
        g_true.append(truths[0])
        g_pred.append(float(np.mean(preds[idx])))
    return order, np.array(g_true), np.array(g_pred), [len(members[k]) for k in order]


def cmd_evaluate(args) -> int:
    started = _now()
    ckpt, samples, X, ages = _load_for_inference(args, require_age=True)
    grid = ckpt.grid
    outside = np.sum((ages < grid.a_min) | (ages > grid.a_max))
    if outside:
        print(f"warning: {outside} ages fall outside the checkpoint grid "
              f"[{grid.a_min}, {grid.a_max}]", file=sys.stderr)
    preds = predict_ages(ckpt.head, X, grid)
    if args.group_by:
        _, ages, preds, _ = _grouped(_group_keys(samples, args.group_by), ages, preds)
    result = evaluate(zip(ages, preds))
    label = args.method or ckpt.method or "model"
    row = result.csv_row(label)
    print(EVAL_HEADER)
    print(row)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "eval.csv"
        path.write_text(EVAL_HEADER + "\n" + row + "\n", encoding="utf-8")
        write_manifest(out / "manifest.json", "evaluate",
                       {"group_by": args.group_by, "method": label},
                       {"checkpoint": args.checkpoint, "data": args.data},
                       {"eval": path}, None, started)
    return EXIT_OK


def cmd_predict(args) -> int:
    started = _now()
    ckpt, samples, X, ages = _load_for_inference(args, require_age=False)
    preds = predict_ages(ckpt.head, X, ckpt.grid)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "predictions.csv"
    if args.group_by:
        keys = _group_keys(samples, args.group_by)
        # ages are irrelevant here; zero them so groups never conflict
        order, _, g_pred, counts = _grouped(keys, np.zeros(len(keys)), preds)
        lines = [f"{args.group_by},predicted_age,n_clips"]
        lines += [f"{k},{float(p)!r},{c}" for k, p, c in zip(order, g_pred, counts)]
    else:
        lines = ["id,predicted_age"] + [f"{s.sample_id},{float(p)!r}" for s, p in zip(samples, preds)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    write_manifest(out / "manifest.json", "predict", {"group_by": args.group_by},
                   {"checkpoint": args.checkpoint, "data": args.data},
                   {"predictions": path}, None, started)
    print(f"wrote {len(lines) - 1} predictions to {path}")
    return EXIT_OK


def cmd_synth(args) -> int:
    started = _now()
    spec = SyntheticSpec(
        n_samples=args.n, dim=args.dim, age_range=args.ages, noise_sigma=args.noise,
        seed=args.seed, age_distribution=args.distribution,
        samples_per_speaker=args.per_speaker,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(generate_synthetic(spec), out, args.format)
    config = asdict(spec) | {"age_range": list(spec.age_range)}
    write_manifest(out.with_name(out.name + ".manifest.json"), "synth", config, {},
                   {"data": out}, args.seed, started)
    print(f"wrote {spec.n_samples} samples to {out}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    started = _now()
    if args.methods:
        cells = method_cells([m.strip() for m in args.methods.split(",") if m.strip()])
        render = render_comparison
    else:
        for pair in args.pairs:
            if len(pair) != 2:
                raise InvalidParameterError("each --pairs entry must be L3:SIGMA")
        cells = ablation_cells(args.pairs, args.lambda1, args.lambda2)
        render = render_ablation
    if not 0 < args.test_fraction < 1:
        raise InvalidParameterError("--test-fraction must lie in (0, 1)")
    if args.repeats < 1:
        raise InvalidParameterError("--repeats must be positive")
    samples = load_dataset(args.data, args.format)
    seeds = list(range(args.seed, args.seed + args.repeats))
    splits = {s: split_train_validation(samples, args.test_fraction, s) for s in seeds}
    cfg = _train_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = run_sweep(cells, splits, args.grid, args.hidden, cfg, jobs=args.jobs,
                        out_dir=out / "cells")
    rows = summarize(results)
    csv_path = out / "results.csv"
    csv_path.write_text(summary_csv(rows), encoding="utf-8")
    table = render(rows)
    table_path = out / "table.txt"
    table_path.write_text(table, encoding="utf-8")
    per_seed = out / "cells.csv"
    lines = ["cell,seed,mae,pearson,n,epochs,status"]
    for r in results:
        if r.ok:
            rho = "nan" if r.result.pearson is None else repr(r.result.pearson)
            lines.append(f"{r.cell.label},{r.seed},{r.result.mae!r},{rho},{r.result.n},"
                         f"{r.epochs},ok")
        else:
            lines.append(f"{r.cell.label},{r.seed},nan,nan,0,0,failed")
            print(f"cell {r.cell.label} seed {r.seed} failed: {r.error}", file=sys.stderr)
    per_seed.write_text("\n".join(lines) + "\n", encoding="utf-8")
    config = {
        "cells": [{"label": c.label, **c.method.loss.as_dict()} for c in cells],
        "seeds": seeds, "test_fraction": args.test_fraction, "train": asdict(cfg),
        "grid": [args.grid.a_min, args.grid.a_max], "hidden_dims": list(args.hidden),
    }
    write_manifest(out / "manifest.json", "ablate", config, {"data": args.data},
                   {"results": csv_path, "table": table_path, "cells": per_seed},
                   args.seed, started)
    sys.stdout.write(table)
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(
        prog="ldl-age", formatter_class=fmt,
        description="Label distribution learning for age estimation from embeddings.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", formatter_class=fmt, help="train a head on a dataset")
    _add_data(p)
    p.add_argument("--method", type=str.lower, default="ldl",
                   choices=("reg", "cls", "regcls", "ldl"), help="loss preset")
    _add_loss_overrides(p)
    _add_model(p)
    _add_training(p)
    _add_common(p, "output directory for checkpoint, log and manifest")
    p.set_defaults(func=cmd_train)

    for name, func, helptext in (
        ("evaluate", cmd_evaluate, "report MAE and Pearson correlation"),
        ("predict", cmd_predict, "write expected-age predictions"),
    ):
        p = sub.add_parser(name, formatter_class=fmt, help=helptext)
        p.add_argument("--checkpoint", required=True, help="checkpoint written by 'train'")
        _add_data(p)
        p.add_argument("--group-by", default=None,
                       help="column whose rows are clips of one utterance; "
                            "predictions are averaged per group")
        if name == "evaluate":
            p.add_argument("--method", default=None,
                           help="label for the output row (default: checkpoint method)")
            p.add_argument("--out", default=None, help="directory for eval.csv and manifest")
            p.add_argument("--seed", type=int, default=0, help="unused; accepted for symmetry")
            p.add_argument("--deterministic", action="store_true",
                           help="unused; inference is always deterministic")
        else:
            _add_common(p, "directory for predictions.csv and manifest")
        p.set_defaults(func=func)

    p = sub.add_parser("synth", formatter_class=fmt, help="generate a synthetic dataset")
    p.add_argument("--n", type=int, default=2000, help="number of samples")
    p.add_argument("--dim", type=int, default=32, help="embedding dimension")
    p.add_argument("--ages", type=_age_range, default="18:80", help="age range A:B")
    p.add_argument("--noise", type=float, default=1.0, help="embedding noise std")
    p.add_argument("--distribution", choices=("uniform", "two-mode"), default="uniform",
                   help="age distribution")
    p.add_argument("--per-speaker", type=int, default=1, help="samples per speaker")
    p.add_argument("--format", choices=("csv", "jsonl"), default=None,
                   help="output format; inferred from the suffix when omitted")
    _add_common(p, "output dataset file")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ablate", formatter_class=fmt,
                       help="method comparison or (lambda3, sigma) ablation sweep")
    _add_data(p)
    p.add_argument("--methods", default=None,
                   help="comma-separated presets (reg,cls,regcls,ldl) for a comparison "
                        "table; omit for the (lambda3, sigma) ablation grid")
    p.add_argument("--pairs", type=_pairs,
                   default=",".join(f"{a:g}:{b:g}" for a, b in ABLATION_PAIRS),
                   help="ablation cells as L3:SIGMA,...")
    p.add_argument("--lambda1", type=float, default=1.0, help="KL weight for ablation cells")
    p.add_argument("--lambda2", type=float, default=1.0, help="L1 weight for ablation cells")
    p.add_argument("--repeats", type=int, default=1,
                   help="number of seeds (seed, seed+1, ...); results are averaged")
    p.add_argument("--test-fraction", type=float, default=0.2,
                   help="speaker-exclusive test split fraction")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    _add_model(p)
    _add_training(p)
    _add_common(p, "output directory for tables, per-cell runs and manifest")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except MismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except (InvalidParameterError, DataFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
