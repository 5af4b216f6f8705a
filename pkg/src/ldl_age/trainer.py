"""Mini-batch SGD with momentum and a plateau learning-rate schedule."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .data import as_arrays
from .errors import InvalidParameterError, TrainingDivergedError
from .grid import AgeGrid
from .losses import HybridLossConfig, LossBreakdown, batch_hybrid_loss, batch_total_loss
from .model import ModelHead, backward, forward

METHODS = {
    "Reg": HybridLossConfig(lambda1=0.0, lambda2=1.0, lambda3=0.0, sigma=1.0),
    "Cls": HybridLossConfig(lambda1=1.0, lambda2=0.0, lambda3=0.0, sigma=0.1),
    "RegCls": HybridLossConfig(lambda1=1.0, lambda2=1.0, lambda3=0.0, sigma=0.1),
    "LDL": HybridLossConfig(lambda1=1.0, lambda2=1.0, lambda3=0.1, sigma=1.0),
}
_ALIASES = {name.lower(): name for name in METHODS} | {"reg+cls": "RegCls"}


@dataclass(frozen=True)
class MethodConfig:
    name: str
    loss: HybridLossConfig


def method_config(name: str) -> MethodConfig:
    """Loss preset for ``Reg``, ``Cls``, ``RegCls`` or ``LDL`` (case-insensitive)."""
    key = _ALIASES.get(str(name).lower())
    if key is None:
        raise InvalidParameterError(
            f"unknown method {name!r}; expected one of {', '.join(METHODS)}"
        )
    return MethodConfig(key, METHODS[key])


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    initial_lr: float = 1e-3
    momentum: float = 0.9
    lr_decay_factor: float = 0.5
    patience_epochs: int = 2
    min_lr: float = 1e-5
    max_epochs: int = 100
    seed: int = 0
    validation_fraction: float = 0.1
    # every run is already bitwise reproducible (fixed-order reductions, seeded shuffles);
    # the flag is recorded for the manifest
    deterministic: bool = False

    def __post_init__(self):
        if self.batch_size < 1:
            raise InvalidParameterError("batch_size must be positive")
        if not self.initial_lr > 0 or not self.min_lr > 0:
            raise InvalidParameterError("learning rates must be positive")
        if self.min_lr > self.initial_lr:
            raise InvalidParameterError("min_lr must not exceed initial_lr")
        if not 0 <= self.momentum < 1:
            raise InvalidParameterError("momentum must lie in [0, 1)")
        if not 0 < self.lr_decay_factor < 1:
            raise InvalidParameterError("lr_decay_factor must lie in (0, 1)")
        if self.patience_epochs < 1 or self.max_epochs < 1:
            raise InvalidParameterError("patience_epochs and max_epochs must be positive")
        if not 0 < self.validation_fraction < 1:
            raise InvalidParameterError("validation_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train: LossBreakdown
    val_total: float
    lr: float


LOG_HEADER = "epoch,kl,l1,var,total,val_total,lr"


@dataclass
class TrainReport:
    epochs: list[EpochRecord] = field(default_factory=list)
    stop_reason: str = ""

    @property
    def final_epoch(self) -> int:
        return self.epochs[-1].epoch if self.epochs else -1

    @property
    def learning_rates(self) -> list[float]:
        return [r.lr for r in self.epochs]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(LOG_HEADER + "\n")
        for r in self.epochs:
            t = r.train
            values = (t.kl, t.l1, t.variance, t.total, r.val_total, r.lr)
            buf.write(f"{r.epoch}," + ",".join(repr(float(v)) for v in values) + "\n")
        return buf.getvalue()


class PlateauSchedule:
    """Multiply the learning rate by ``factor`` after ``patience`` epochs
    without a strict improvement of the monitored loss.

    :meth:`step` returns ``False`` once the rate is already at ``min_lr`` and
    patience runs out again, which is the signal to stop training.
    """

    def __init__(self, initial_lr, factor=0.5, patience=2, min_lr=1e-5):
        self.lr = initial_lr
        self.factor = factor
        self.patience = patience
        self.min_lr = min_lr
        self.best = math.inf
        self.bad_epochs = 0

    def step(self, value: float) -> bool:
        if value < self.best:
            self.best = value
            self.bad_epochs = 0
            return True
        self.bad_epochs += 1
        if self.bad_epochs < self.patience:
            return True
        self.bad_epochs = 0
        if self.lr <= self.min_lr:
            return False
        self.lr = max(self.lr * self.factor, self.min_lr)
        return True


def split_train_validation(dataset, fraction: float, seed: int):
    """Random split; samples sharing a speaker id land on the same side.

    Speakers (or, for samples without one, individual samples) are shuffled
    and assigned to validation until it holds ``round(fraction * N)``
    samples.  Row order within each part follows the input order.
    """
    samples = list(dataset)
    n = len(samples)
    if n == 0:
        raise InvalidParameterError("empty dataset")
    if not 0 < fraction < 1:
        raise InvalidParameterError("fraction must lie in (0, 1)")
    groups: dict[object, list[int]] = {}
    for i, s in enumerate(samples):
        key = ("spk", s.speaker_id) if s.speaker_id is not None else ("row", i)
        groups.setdefault(key, []).append(i)
    if len(groups) < 2:
        raise InvalidParameterError("need at least two speakers/samples to split")
    target = max(1, round(fraction * n))
    keys = list(groups)
    order = np.random.default_rng(seed).permutation(len(keys))
    in_val = np.zeros(n, dtype=bool)
    count = 0
    for j in order:
        if count >= target:
            break
        idx = groups[keys[j]]
        if count + len(idx) >= n:
            continue
        in_val[idx] = True
        count += len(idx)
    if count == 0:
        raise InvalidParameterError("dataset too small for a non-empty validation split")
    train = [s for s, v in zip(samples, in_val) if not v]
    val = [s for s, v in zip(samples, in_val) if v]
    return train, val


def sgd_step(head: ModelHead, grads, velocities, lr: float, momentum: float):
    """Heavy-ball update ``v <- m v - lr g; p <- p + v``, in place."""
    for p, g, v in zip(head.params(), grads.params(), velocities):
        v *= momentum
        v -= lr * g
        p += v


def _epoch_order(n: int, seed: int, epoch: int) -> np.ndarray:
    return np.random.default_rng([seed, epoch]).permutation(n)


def validation_loss(head: ModelHead, X, ages, loss: HybridLossConfig, grid: AgeGrid) -> float:
    logits, _ = forward(head, X)
    return batch_total_loss(loss, ages, logits, grid)


def fit(head: ModelHead, dataset, method: MethodConfig, train_config: TrainConfig = TrainConfig(),
        grid: AgeGrid | None = None, validation=None, log=None):
    """Train a copy of ``head`` and return ``(trained_head, TrainReport)``.

    ``dataset`` is a list of :class:`LabeledSample`.  Unless ``validation`` is
    given, ``train_config.validation_fraction`` of it is held out
    (speaker-exclusive).  ``grid`` defaults to ages 1..K where K is the head's
    output size.  ``log``, if given, is called with each :class:`EpochRecord`.
    """
    cfg = train_config
    samples = list(dataset)
    if not samples:
        raise InvalidParameterError("empty dataset")
    if grid is None:
        grid = AgeGrid(1, head.n_outputs)
    if grid.K != head.n_outputs:
        raise InvalidParameterError(f"head has {head.n_outputs} outputs, grid has {grid.K}")
    if validation is None:
        train_set, val_set = split_train_validation(samples, cfg.validation_fraction, cfg.seed)
    else:
        train_set, val_set = samples, list(validation)
    X, ages, _ = as_arrays(train_set)
    Xv, ages_v, _ = as_arrays(val_set)
    if X.shape[1] != head.in_dim or Xv.shape[1] != head.in_dim:
        raise InvalidParameterError(
            f"embeddings have dimension {X.shape[1]}, head expects {head.in_dim}"
        )
    loss = method.loss
    head = head.copy()
    velocities = [np.zeros_like(p) for p in head.params()]
    sched = PlateauSchedule(cfg.initial_lr, cfg.lr_decay_factor, cfg.patience_epochs, cfg.min_lr)
    report = TrainReport()
    with np.errstate(over="ignore", invalid="ignore"):
        _train_epochs(head, X, ages, Xv, ages_v, loss, grid, cfg, sched, velocities, report, log)
    return head, report


def _train_epochs(head, X, ages, Xv, ages_v, loss, grid, cfg, sched, velocities, report, log):
    n = len(ages)
    for epoch in range(cfg.max_epochs):
        lr = sched.lr
        order = _epoch_order(n, cfg.seed, epoch)
        sums = np.zeros(3)
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            logits, trace = forward(head, X[idx])
            parts, dlogits = batch_hybrid_loss(loss, ages[idx], logits, grid)
            if not math.isfinite(parts.total) or not np.all(np.isfinite(dlogits)):
                raise TrainingDivergedError(epoch, b, parts.total)
            sgd_step(head, backward(head, trace, dlogits), velocities, lr, cfg.momentum)
            if not all(np.isfinite(p).all() for p in head.params()):
                raise TrainingDivergedError(epoch, b, parts.total)
            sums += len(idx) * np.array([parts.kl, parts.l1, parts.variance])
        kl, l1, var = sums / n
        train = LossBreakdown(kl, l1, var, loss.lambda1 * kl + loss.lambda2 * l1 + loss.lambda3 * var)
        val_total = validation_loss(head, Xv, ages_v, loss, grid)
        if not math.isfinite(val_total):
            raise TrainingDivergedError(epoch, -1, val_total)
        record = EpochRecord(epoch, train, val_total, lr)
        report.epochs.append(record)
        if log is not None:
            log(record)
        if not sched.step(val_total):
            report.stop_reason = "min_lr_plateau"
            break
    else:
        report.stop_reason = "max_epochs"
