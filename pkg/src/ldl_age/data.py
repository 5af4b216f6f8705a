"""Labeled embedding datasets: CSV / JSON-lines I/O and a synthetic generator.

Synthetic law
-------------
With ``s = 2 (age - a_min) / (a_max - a_min) - 1`` in ``[-1, 1]`` the feature
map is ``phi(age) = [s, s^2 - 1/3, sin(pi s), cos(pi s)] * sqrt(2)`` and each
embedding is ``x = W phi(age) + noise``, where ``W`` is a ``(dim, 4)`` matrix
with i.i.d. ``N(0, 1/2)`` entries drawn from the seed and ``noise`` is i.i.d.
``N(0, noise_sigma^2)``.  The first column of ``W`` carries ``s`` linearly,
so for ``noise_sigma = 0`` and ``dim >= 4`` a linear least-squares probe
recovers the age exactly; the irreducible error grows with ``noise_sigma``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataFormatError, InvalidParameterError

CORE_COLUMNS = ("id", "speaker_id", "age")
N_FEATURES = 4


@dataclass
class LabeledSample:
    sample_id: str
    age: float
    embedding: np.ndarray
    speaker_id: str | None = None
    extra: dict[str, str] = field(default_factory=dict)

    def __eq__(self, other):
        if not isinstance(other, LabeledSample):
            return NotImplemented
        return (
            self.sample_id == other.sample_id
            and self.speaker_id == other.speaker_id
            and self.age == other.age
            and np.array_equal(self.embedding, other.embedding)
            and self.extra == other.extra
        )


def as_arrays(samples):
    """Stack samples into ``(X, ages, speaker_ids)``."""
    samples = list(samples)
    if not samples:
        raise InvalidParameterError("empty dataset")
    X = np.stack([s.embedding for s in samples]).astype(np.float64)
    ages = np.array([s.age for s in samples], dtype=np.float64)
    return X, ages, [s.speaker_id for s in samples]


def _parse_age(text, line, required=True):
    if not required and (text is None or text == ""):
        return math.nan
    try:
        age = float(text)
    except (TypeError, ValueError):
        raise DataFormatError(f"age {text!r} is not a number", line) from None
    if not math.isfinite(age) or age <= 0:
        raise DataFormatError(f"age must be a positive finite number, got {text!r}", line)
    return age


def _parse_features(values, line):
    try:
        x = np.array([float(v) for v in values], dtype=np.float64)
    except (TypeError, ValueError):
        raise DataFormatError("non-numeric embedding value", line) from None
    if not np.all(np.isfinite(x)):
        raise DataFormatError("non-finite embedding value", line)
    return x


def _feature_columns(header):
    feats = [c for c in header if c.startswith("f") and c[1:].isdigit()]
    if feats != [f"f{i}" for i in range(len(feats))]:
        raise DataFormatError("feature columns must be f0, f1, ... in order", 1)
    return feats


def _load_csv(path: Path, require_age: bool):
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        if "id" not in header or (require_age and "age" not in header):
            raise DataFormatError("header must contain 'id' and 'age' columns", 1)
        feats = _feature_columns(header)
        if not feats:
            raise DataFormatError("header has no feature columns f0..", 1)
        col = {name: i for i, name in enumerate(header)}
        extra_cols = [c for c in header if c not in CORE_COLUMNS and c not in feats]
        fidx = [col[f] for f in feats]
        samples = []
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(header):
                raise DataFormatError(
                    f"ragged row: {len(row)} fields, header has {len(header)}", line
                )
            spk = row[col["speaker_id"]] if "speaker_id" in col else ""
            samples.append(LabeledSample(
                sample_id=row[col["id"]],
                age=_parse_age(row[col["age"]] if "age" in col else None, line, require_age),
                embedding=_parse_features([row[i] for i in fidx], line),
                speaker_id=spk or None,
                extra={c: row[col[c]] for c in extra_cols},
            ))
    return samples


def _load_jsonl(path: Path, require_age: bool):
    samples = []
    dim = None
    with path.open(encoding="utf-8") as fh:
        for line, text in enumerate(fh, start=1):
            if not text.strip():
                continue
            try:
                rec = json.loads(text)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"bad JSON ({exc.msg})", line) from None
            if not isinstance(rec, dict) or "id" not in rec or "embedding" not in rec:
                raise DataFormatError("record needs 'id', 'age' and 'embedding'", line)
            emb = rec["embedding"]
            if not isinstance(emb, list):
                raise DataFormatError("'embedding' must be a list", line)
            if dim is None:
                dim = len(emb)
            elif len(emb) != dim:
                raise DataFormatError(f"embedding has {len(emb)} values, expected {dim}", line)
            samples.append(LabeledSample(
                sample_id=str(rec["id"]),
                age=_parse_age(rec.get("age"), line, require_age),
                embedding=_parse_features(emb, line),
                speaker_id=rec.get("speaker_id") or None,
                extra={k: str(v) for k, v in rec.items()
                       if k not in (*CORE_COLUMNS, "embedding")},
            ))
    return samples


def _infer_format(path: Path, fmt: str | None) -> str:
    if fmt:
        if fmt not in ("csv", "jsonl"):
            raise InvalidParameterError(f"unknown dataset format {fmt!r}")
        return fmt
    return "jsonl" if path.suffix.lower() in (".jsonl", ".ndjson") else "csv"


def load_dataset(path, fmt: str | None = None, require_age: bool = True) -> list[LabeledSample]:
    """Read a dataset, preserving row order.

    ``fmt`` is ``"csv"`` (header ``id,speaker_id,age,f0,...``) or ``"jsonl"``
    (one object per line with ``id``, ``speaker_id``, ``age``, ``embedding``);
    by default it is inferred from the file suffix.  Columns other than these
    are kept in :attr:`LabeledSample.extra`.  With ``require_age=False``
    missing ages are allowed and read as NaN (for prediction-only input).
    """
    path = Path(path)
    fmt = _infer_format(path, fmt)
    if not path.is_file():
        raise FileNotFoundError(f"no such dataset: {path}")
    loader = _load_csv if fmt == "csv" else _load_jsonl
    samples = loader(path, require_age)
    if not samples:
        raise DataFormatError(f"{path}: no samples")
    return samples


def save_dataset(samples, path, fmt: str | None = None) -> Path:
    samples = list(samples)
    if not samples:
        raise InvalidParameterError("refusing to write an empty dataset")
    dim = samples[0].embedding.shape[0]
    if any(s.embedding.shape != (dim,) for s in samples):
        raise InvalidParameterError("embeddings have inconsistent dimensions")
    path = Path(path)
    fmt = _infer_format(path, fmt)
    extra_cols = sorted({k for s in samples for k in s.extra})
    if fmt == "csv":
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([*CORE_COLUMNS, *extra_cols, *(f"f{i}" for i in range(dim))])
            for s in samples:
                w.writerow([s.sample_id, s.speaker_id or "", repr(float(s.age)),
                            *(s.extra.get(c, "") for c in extra_cols),
                            *(repr(float(v)) for v in s.embedding)])
    else:
        with path.open("w", encoding="utf-8") as fh:
            for s in samples:
                rec = {"id": s.sample_id, "speaker_id": s.speaker_id, "age": float(s.age),
                       **s.extra, "embedding": [float(v) for v in s.embedding]}
                fh.write(json.dumps(rec) + "\n")
    return path


@dataclass(frozen=True)
class SyntheticSpec:
    n_samples: int = 2000
    dim: int = 32
    age_range: tuple[int, int] = (18, 80)
    noise_sigma: float = 1.0
    seed: int = 0
    age_distribution: str = "uniform"  # or "two-mode"
    samples_per_speaker: int = 1

    def __post_init__(self):
        lo, hi = self.age_range
        if self.n_samples < 1:
            raise InvalidParameterError("n_samples must be positive")
        if self.dim < 2:
            raise InvalidParameterError("dim must be >= 2")
        if not 0 < lo < hi:
            raise InvalidParameterError(f"bad age range {self.age_range}")
        if not (math.isfinite(self.noise_sigma) and self.noise_sigma >= 0):
            raise InvalidParameterError("noise_sigma must be >= 0")
        if self.age_distribution not in ("uniform", "two-mode"):
            raise InvalidParameterError(f"unknown age distribution {self.age_distribution!r}")
        if self.samples_per_speaker < 1:
            raise InvalidParameterError("samples_per_speaker must be positive")


def age_features(ages, age_range) -> np.ndarray:
    """The smooth map ``phi`` from the module docstring, shape ``(N, 4)``."""
    lo, hi = age_range
    s = 2.0 * (np.asarray(ages, dtype=np.float64) - lo) / (hi - lo) - 1.0
    return math.sqrt(2.0) * np.stack(
        [s, s**2 - 1.0 / 3.0, np.sin(np.pi * s), np.cos(np.pi * s)], axis=-1
    )


def mixing_matrix(dim: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng([seed, 1])
    return rng.standard_normal((dim, N_FEATURES)) * math.sqrt(0.5)


def _draw_ages(spec: SyntheticSpec, n: int, rng) -> np.ndarray:
    lo, hi = spec.age_range
    if spec.age_distribution == "uniform":
        return rng.uniform(lo, hi, n)
    # two bumps at 30% and 65% of the range, loosely shaped like adult call-centre data
    width = hi - lo
    centers = lo + width * np.where(rng.random(n) < 0.55, 0.3, 0.65)
    ages = centers + rng.standard_normal(n) * 0.12 * width
    # reflect then clip so the tails stay inside the range
    ages = np.where(ages < lo, 2 * lo - ages, ages)
    ages = np.where(ages > hi, 2 * hi - ages, ages)
    return np.clip(ages, lo, hi)


def generate_synthetic(spec: SyntheticSpec) -> list[LabeledSample]:
    rng = np.random.default_rng([spec.seed, 0])
    n_spk = -(-spec.n_samples // spec.samples_per_speaker)
    spk_ages = _draw_ages(spec, n_spk, rng)
    spk_of = np.arange(spec.n_samples) // spec.samples_per_speaker
    ages = np.round(spk_ages[spk_of], 2)
    W = mixing_matrix(spec.dim, spec.seed)
    X = age_features(ages, spec.age_range) @ W.T
    X += spec.noise_sigma * rng.standard_normal(X.shape)
    width = len(str(spec.n_samples - 1))
    return [
        LabeledSample(
            sample_id=f"s{i:0{width}d}",
            age=float(ages[i]),
            embedding=X[i],
            speaker_id=f"spk{spk_of[i]:0{width}d}",
        )
        for i in range(spec.n_samples)
    ]
