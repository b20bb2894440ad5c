"""Adam training on class-balanced epochs."""

from __future__ import annotations

import contextlib
import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterator, Mapping, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .architecture import Network
from .engine import ShapeError
from .metrics import UndefinedMetricError, evaluate
from .pipeline import INTERICTAL, PREICTAL, DataError, WindowSample, stack

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    epochs: int = 100
    samples_per_epoch: int = 6400
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if self.samples_per_epoch < 2 or self.samples_per_epoch % 2:
            raise ValueError("samples_per_epoch must be a positive even number")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be positive and epochs non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Mapping[str, np.ndarray]) -> "AdamState":
        return cls(
            {k: np.zeros_like(p) for k, p in params.items()},
            {k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    config: TrainConfig,
) -> tuple[Mapping[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for parameter {name!r}")
    state.t += 1
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads[name]
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= config.learning_rate * (m / c1) / (np.sqrt(v / c2) + config.epsilon)
    return params, state


def _labels_of(samples) -> np.ndarray:
    if isinstance(samples, np.ndarray):
        return samples.astype(np.int64)
    return np.array([s.label for s in samples], dtype=np.int64)


def balanced_epoch(samples, config: TrainConfig, rng: np.random.Generator) -> Iterator[np.ndarray]:
    """Yield index batches for one epoch.

    ``samples`` is a sequence of :class:`WindowSample` or a label array.  The
    epoch draws ``samples_per_epoch / 2`` indices per class uniformly with
    replacement, shuffles them together and cuts ``batch_size`` chunks.
    """
    labels = _labels_of(samples)
    pools = [np.flatnonzero(labels == INTERICTAL), np.flatnonzero(labels == PREICTAL)]
    for label, pool in zip(("interictal", "preictal"), pools):
        if pool.size == 0:
            raise DataError(f"balanced epoch needs {label} samples, pool is empty")
    half = config.samples_per_epoch // 2
    picks = np.concatenate([pool[rng.integers(0, pool.size, half)] for pool in pools])
    picks = picks[rng.permutation(picks.size)]
    for start in range(0, picks.size, config.batch_size):
        yield picks[start:start + config.batch_size]


@contextlib.contextmanager
def deterministic_mode():
    """Single-threaded BLAS so repeated runs are bit-identical."""
    with threadpool_limits(limits=1):
        yield


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_sensitivity: float = math.nan
    val_fpr_per_h: float = math.nan
    val_auc: float = math.nan


@dataclass
class TrainResult:
    net: Network
    history: list[EpochRecord] = field(default_factory=list)


def predict_scores(net: Network, x: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Preictal probability for every sample of ``x`` (inference mode)."""
    out = [net.predict_proba(x[i:i + batch_size])[:, PREICTAL] for i in range(0, len(x), batch_size)]
    return np.concatenate(out) if out else np.zeros(0)


def train_step(net: Network, x, y, state: AdamState, config: TrainConfig, rng, dropout: bool = True) -> float:
    loss, _ = net.loss_and_grad(x, y, rng=rng, training=dropout)
    if not math.isfinite(loss):
        raise TrainingError(f"non-finite loss at step {state.t + 1}")
    params = net.named_parameters()
    adam_step(
        {k: p.data for k, p in params.items()},
        {k: p.grad for k, p in params.items()},
        state,
        config,
    )
    return loss


def train(
    net: Network,
    train_samples: Sequence[WindowSample],
    val_samples: Sequence[WindowSample] | None,
    config: TrainConfig,
    window_s: float = 20.0,
    threshold: float = 0.5,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> TrainResult:
    """Fixed-length training (no early stopping), validating after every epoch."""
    x, y = stack(train_samples)
    try:
        net.check_input(x.shape)
    except ShapeError as exc:
        raise ShapeError(f"training samples do not fit the network: {exc}") from None
    xv = yv = None
    if val_samples:
        xv, yv = stack(val_samples)
        net.check_input(xv.shape)

    rng = np.random.default_rng(config.seed)
    state = AdamState.zeros_like({k: p.data for k, p in net.named_parameters().items()})
    result = TrainResult(net)
    for epoch in range(1, config.epochs + 1):
        losses = [
            train_step(net, x[idx], y[idx], state, config, rng)
            for idx in balanced_epoch(y, config, rng)
        ]
        record = EpochRecord(epoch, float(np.mean(losses)))
        if xv is not None:
            scores = predict_scores(net, xv)
            try:
                rep = evaluate(scores, yv, threshold, window_s)
                record.val_sensitivity = rep.sensitivity
                record.val_fpr_per_h = rep.fpr_per_hour
                record.val_auc = rep.auc
            except UndefinedMetricError as exc:
                log.warning("epoch %d: validation metrics undefined: %s", epoch, exc)
        result.history.append(record)
        log.info(
            "epoch %d loss %.5f val_auc %.4f", epoch, record.train_loss, record.val_auc
        )
        if on_epoch is not None:
            on_epoch(record)
    return result


HISTORY_COLUMNS = ("epoch", "train_loss", "val_sensitivity", "val_fpr_per_h", "val_auc")


def write_history_csv(history: Sequence[EpochRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HISTORY_COLUMNS)
        for r in history:
            w.writerow([r.epoch] + [repr(getattr(r, c)) for c in HISTORY_COLUMNS[1:]])
