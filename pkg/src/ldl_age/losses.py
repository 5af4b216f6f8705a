"""KL, L1 and variance losses, their weighted sum, and gradients w.r.t. logits.

Every function here works on pre-softmax logits or on probability vectors
over an :class:`~ldl_age.grid.AgeGrid`.  The batched helpers return mean
losses over the batch and the matching per-row gradients (already divided
by the batch size), which is what the trainer consumes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError
from .grid import AgeGrid, LabelDistribution, gaussian_target_probs

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class HybridLossConfig:
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 0.1
    sigma: float = 1.0

    def __post_init__(self):
        lams = (self.lambda1, self.lambda2, self.lambda3)
        if any(not np.isfinite(v) or v < 0 for v in lams):
            raise InvalidParameterError(f"loss weights must be >= 0, got {lams}")
        if not any(v > 0 for v in lams):
            raise InvalidParameterError("at least one loss weight must be positive")
        if not np.isfinite(self.sigma) or not self.sigma > 0:
            raise InvalidParameterError(f"sigma must be positive, got {self.sigma!r}")

    def as_dict(self):
        return {
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "lambda3": self.lambda3,
            "sigma": self.sigma,
        }


@dataclass(frozen=True)
class LossBreakdown:
    kl: float
    l1: float
    variance: float
    total: float


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _check_same_grid(a: LabelDistribution, b: LabelDistribution):
    if a.grid != b.grid:
        raise InvalidParameterError(f"grid mismatch: {a.grid} vs {b.grid}")


def _kl_rows(target: np.ndarray, predicted: np.ndarray) -> np.ndarray:
    q = np.maximum(predicted, PROB_FLOOR)
    pos = target > 0
    safe_t = np.where(pos, target, 1.0)
    terms = np.where(pos, target * (np.log(safe_t) - np.log(q)), 0.0)
    # each term can be slightly negative; the sum is >= 0 up to round-off
    return np.maximum(terms.sum(axis=-1), 0.0)


def kl_loss(target: LabelDistribution, predicted: LabelDistribution) -> float:
    """Forward KL ``sum_k y_k log(y_k / q_k)`` with ``0 log 0 = 0``."""
    _check_same_grid(target, predicted)
    return float(_kl_rows(target.probs, predicted.probs))


def l1_age_loss(true_age: float, predicted: LabelDistribution) -> float:
    return abs(float(predicted.grid.ages @ predicted.probs) - true_age)


def variance_loss(predicted: LabelDistribution) -> float:
    return predicted.variance()


def _check_logits(logits, grid: AgeGrid) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    if z.shape[-1:] != (grid.K,):
        raise InvalidParameterError(
            f"logits have length {z.shape[-1:]} but the grid has {grid.K} ages"
        )
    return z


def _components(config, true_age, logits, grid):
    """Per-row (kl, l1, var), plus intermediates for the gradient."""
    p = softmax(logits)
    y = gaussian_target_probs(true_age, config.sigma, grid)
    ages = grid.ages
    mean = p @ ages
    dev = ages - mean[..., None]
    var = np.maximum((p * dev**2).sum(axis=-1), 0.0)
    kl = _kl_rows(y, p)
    l1 = np.abs(mean - np.asarray(true_age, dtype=np.float64))
    return kl, l1, var, (p, y, mean, dev)


def _gradient_rows(config, true_age, p, y, mean, dev, var):
    """d(total)/d(logits) for each row.

    With ``J = diag(p) - p p^T`` the softmax Jacobian, ``J g = p * (g - p.g)``.
    KL gives ``p - y``; L1 gives ``sign(mean - t) * J a``; the variance
    ``sum p (a - mean)^2`` has gradient ``p * ((a - mean)^2 - var)`` once both
    occurrences of ``mean`` are differentiated.
    """
    grad = np.zeros_like(p)
    if config.lambda1:
        grad += config.lambda1 * (p - y)
    if config.lambda2:
        s = np.sign(mean - np.asarray(true_age, dtype=np.float64))
        grad += (config.lambda2 * s)[..., None] * p * dev
    if config.lambda3:
        grad += config.lambda3 * p * (dev**2 - var[..., None])
    return grad


def hybrid_loss(config: HybridLossConfig, true_age: float, logits, grid: AgeGrid) -> LossBreakdown:
    z = _check_logits(logits, grid)
    if z.ndim != 1:
        raise InvalidParameterError("hybrid_loss takes one sample; see batch_hybrid_loss")
    kl, l1, var, _ = _components(config, true_age, z, grid)
    kl, l1, var = float(kl), float(l1), float(var)
    total = config.lambda1 * kl + config.lambda2 * l1 + config.lambda3 * var
    return LossBreakdown(kl, l1, var, total)


def hybrid_loss_gradient(config: HybridLossConfig, true_age: float, logits, grid: AgeGrid) -> np.ndarray:
    """Analytic gradient of :func:`hybrid_loss` ``.total`` w.r.t. the logits.

    At the L1 kink (predicted mean exactly equal to ``true_age``) the
    subgradient 0 is used.
    """
    z = _check_logits(logits, grid)
    if z.ndim != 1:
        raise InvalidParameterError("hybrid_loss_gradient takes one sample")
    _, _, var, (p, y, mean, dev) = _components(config, true_age, z, grid)
    return _gradient_rows(config, true_age, p, y, mean, dev, var)


def batch_hybrid_loss(config: HybridLossConfig, true_ages, logits, grid: AgeGrid):
    """Mean loss breakdown over a batch and the gradient of the mean total.

    Returns ``(LossBreakdown, grad)`` with ``grad`` of shape ``(N, K)``.
    """
    z = _check_logits(logits, grid)
    t = np.asarray(true_ages, dtype=np.float64)
    if z.ndim != 2 or t.shape != (z.shape[0],):
        raise InvalidParameterError(
            f"expected logits (N, K) and N ages, got {z.shape} and {t.shape}"
        )
    n = z.shape[0]
    kl, l1, var, (p, y, mean, dev) = _components(config, t, z, grid)
    grad = _gradient_rows(config, t, p, y, mean, dev, var) / n
    kl_m, l1_m, var_m = float(kl.mean()), float(l1.mean()), float(var.mean())
    total = config.lambda1 * kl_m + config.lambda2 * l1_m + config.lambda3 * var_m
    return LossBreakdown(kl_m, l1_m, var_m, total), grad


def batch_total_loss(config: HybridLossConfig, true_ages, logits, grid: AgeGrid) -> float:
    z = _check_logits(logits, grid)
    kl, l1, var, _ = _components(config, np.asarray(true_ages, dtype=np.float64), z, grid)
    return float(
        config.lambda1 * kl.mean() + config.lambda2 * l1.mean() + config.lambda3 * var.mean()
    )
