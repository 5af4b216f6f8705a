"""Expected-age prediction, clip aggregation, and MAE / Pearson evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError
from .grid import AgeGrid, LabelDistribution, expected_age
from .losses import softmax
from .model import ModelHead, forward


@dataclass(frozen=True)
class ClipPrediction:
    distribution: LabelDistribution
    point_estimate: float
    weight: float = 1.0

    def __post_init__(self):
        if not self.weight >= 0:
            raise InvalidParameterError(f"clip weight must be >= 0, got {self.weight!r}")
        if abs(self.point_estimate - expected_age(self.distribution)) > 1e-9:
            raise InvalidParameterError("point_estimate disagrees with the distribution")

    @classmethod
    def from_distribution(cls, dist: LabelDistribution, weight: float = 1.0) -> ClipPrediction:
        return cls(dist, expected_age(dist), weight)


@dataclass(frozen=True)
class EvalResult:
    mae: float
    pearson: float | None  # None when undefined (n < 2 or a constant series)
    n: int

    def csv_row(self, method: str) -> str:
        rho = "nan" if self.pearson is None else repr(self.pearson)
        return f"{method},{self.mae!r},{rho},{self.n}"


EVAL_HEADER = "method,mae,pearson,n"


def _check_grid(head: ModelHead, grid: AgeGrid):
    if head.n_outputs != grid.K:
        raise InvalidParameterError(
            f"head produces {head.n_outputs} logits but grid has {grid.K} ages"
        )


def predict_distributions(head: ModelHead, embeddings, grid: AgeGrid) -> np.ndarray:
    """Softmax outputs for a batch of embeddings, shape ``(N, K)``."""
    _check_grid(head, grid)
    logits, _ = forward(head, np.atleast_2d(embeddings))
    return softmax(logits)


def predict_ages(head: ModelHead, embeddings, grid: AgeGrid) -> np.ndarray:
    """Expected age for every row of ``embeddings``."""
    p = predict_distributions(head, embeddings, grid)
    return np.clip(p @ grid.ages, grid.a_min, grid.a_max)


def predict_clip(head: ModelHead, embedding, grid: AgeGrid, weight: float = 1.0) -> ClipPrediction:
    x = np.asarray(embedding, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidParameterError("predict_clip takes a single embedding vector")
    _check_grid(head, grid)
    logits, _ = forward(head, x)
    return ClipPrediction.from_distribution(LabelDistribution(grid, softmax(logits)), weight)


def predict_utterance(clip_predictions) -> float:
    """Weighted mean of clip point estimates, ``sum w_i y_i / sum w_i``.

    Weights default to 1 per clip; pass e.g. clip durations as weights when
    they are known.
    """
    clips = list(clip_predictions)
    if not clips:
        raise InvalidParameterError("no clips to aggregate")
    w = np.array([c.weight for c in clips], dtype=np.float64)
    total = w.sum()
    if not total > 0:
        raise InvalidParameterError("clip weights sum to zero")
    est = np.array([c.point_estimate for c in clips], dtype=np.float64)
    return float(w @ est / total)


def evaluate(pairs) -> EvalResult:
    """MAE and Pearson correlation for ``(true_age, predicted_age)`` pairs.

    Pearson uses sample statistics with the 1/(N-1) normalization and is
    ``None`` when fewer than two pairs are given or either series is
    constant.
    """
    arr = np.asarray(list(pairs), dtype=np.float64).reshape(-1, 2)
    n = arr.shape[0]
    if n == 0:
        raise InvalidParameterError("cannot evaluate an empty set of predictions")
    t, y = arr[:, 0], arr[:, 1]
    mae = float(np.mean(np.abs(y - t)))
    if n < 2:
        return EvalResult(mae, None, n)
    sy, st = y.std(ddof=1), t.std(ddof=1)
    if sy == 0 or st == 0 or not math.isfinite(sy * st):
        return EvalResult(mae, None, n)
    rho = float(np.sum((y - y.mean()) / sy * ((t - t.mean()) / st)) / (n - 1))
    return EvalResult(mae, float(np.clip(rho, -1.0, 1.0)), n)
