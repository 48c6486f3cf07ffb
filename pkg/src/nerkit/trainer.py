"""Generic training loop: mini-batch gradient descent with per-epoch
validation, early stopping, and capture of validation predictions.

Models plug in through a small protocol (parameters / loss_and_grads /
evaluate), so the same loop trains every head and the prediction filter.
Given a fixed seed the loop is fully deterministic: batching order, the
optimizer, and evaluation all avoid nondeterministic iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Protocol, Sequence

import numpy as np

from .corpus import Mention
from .encoder import SparseRows, coalesce_rows
from .errors import TrainingError

DEFAULT_LEARNING_RATE = 1e-5
DEFAULT_BATCH_SIZE = 4
DEFAULT_MAX_EPOCHS = 20
DEFAULT_PATIENCE = 5

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = DEFAULT_LEARNING_RATE
    batch_size: int = DEFAULT_BATCH_SIZE
    max_epochs: int = DEFAULT_MAX_EPOCHS
    patience: int = DEFAULT_PATIENCE
    optimizer: str = "adam"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max epochs must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass(frozen=True)
class EpochRecord:
    """Validation outcome of one epoch.

    For entity models the metrics are strict micro precision/recall/F1 and
    `predictions` holds the captured validation mentions. The filter model
    reports its heldout accuracy in all three metric slots and captures
    nothing.
    """

    epoch: int
    precision: float
    recall: float
    f1: float
    predictions: frozenset[Mention] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        for name in ("precision", "recall", "f1"):
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {value}")


class TrainableModel(Protocol):
    """What the loop needs from a model."""

    def parameters(self) -> dict[str, np.ndarray]: ...

    def loss_and_grads(self, item: Any) -> tuple[float, dict[str, np.ndarray | SparseRows]]: ...

    def evaluate(self, items: Sequence[Any]) -> tuple[float, float, float, frozenset[Mention]]: ...

    def snapshot(self) -> dict[str, np.ndarray]: ...

    def restore(self, snapshot: dict[str, np.ndarray]) -> None: ...


class SgdOptimizer:
    def __init__(self, learning_rate: float):
        self.learning_rate = learning_rate

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray | SparseRows]) -> None:
        for name, grad in grads.items():
            p = params[name]
            if isinstance(grad, SparseRows):
                if len(grad.indices):
                    p[grad.indices] -= self.learning_rate * grad.rows
            else:
                p -= self.learning_rate * grad


class AdamOptimizer:
    """Adaptive-moments update with bias correction.

    Row-sparse gradients update only the touched rows' moments (the usual
    lazy treatment for large embedding tables); bias correction uses the
    global step count.
    """

    def __init__(self, learning_rate: float):
        self.learning_rate = learning_rate
        self.step_count = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def _state(self, name: str, shape: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
        if name not in self._m:
            self._m[name] = np.zeros(shape)
            self._v[name] = np.zeros(shape)
        return self._m[name], self._v[name]

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray | SparseRows]) -> None:
        self.step_count += 1
        t = self.step_count
        correction = np.sqrt(1.0 - ADAM_BETA2**t) / (1.0 - ADAM_BETA1**t)
        lr = self.learning_rate * correction
        for name, grad in grads.items():
            p = params[name]
            m, v = self._state(name, p.shape)
            if isinstance(grad, SparseRows):
                if not len(grad.indices):
                    continue
                idx, g = grad.indices, grad.rows
                m[idx] = ADAM_BETA1 * m[idx] + (1.0 - ADAM_BETA1) * g
                v[idx] = ADAM_BETA2 * v[idx] + (1.0 - ADAM_BETA2) * g * g
                p[idx] -= lr * m[idx] / (np.sqrt(v[idx]) + ADAM_EPS)
            else:
                m *= ADAM_BETA1
                m += (1.0 - ADAM_BETA1) * grad
                v *= ADAM_BETA2
                v += (1.0 - ADAM_BETA2) * grad * grad
                p -= lr * m / (np.sqrt(v) + ADAM_EPS)


def make_optimizer(config: TrainConfig) -> SgdOptimizer | AdamOptimizer:
    if config.optimizer == "sgd":
        return SgdOptimizer(config.learning_rate)
    return AdamOptimizer(config.learning_rate)


def accumulate_grads(
    per_item: list[dict[str, np.ndarray | SparseRows]],
) -> dict[str, np.ndarray | SparseRows]:
    """Average gradients over a batch with a fixed summation order."""
    out: dict[str, np.ndarray | SparseRows] = {}
    scale = 1.0 / len(per_item)
    for name in per_item[0]:
        first = per_item[0][name]
        if isinstance(first, SparseRows):
            indices = np.concatenate([g[name].indices for g in per_item])  # type: ignore[union-attr]
            rows = np.concatenate([g[name].rows for g in per_item])  # type: ignore[union-attr]
            merged = coalesce_rows(indices, rows)
            out[name] = SparseRows(indices=merged.indices, rows=merged.rows * scale)
        else:
            total = first.copy()
            for g in per_item[1:]:
                total += g[name]  # type: ignore[arg-type]
            out[name] = total * scale
    return out


def _check_finite(loss: float, grads: dict[str, np.ndarray | SparseRows], epoch: int) -> None:
    if not np.isfinite(loss):
        raise TrainingError(f"non-finite loss at epoch {epoch}")
    for name, g in grads.items():
        arr = g.rows if isinstance(g, SparseRows) else g
        if not np.all(np.isfinite(arr)):
            raise TrainingError(f"non-finite gradient for {name!r} at epoch {epoch}")


@dataclass
class TrainResult:
    best_epoch: int
    records: list[EpochRecord]
    best_snapshot: dict[str, np.ndarray]
    epoch_losses: list[float]


def train(
    model: TrainableModel,
    train_items: Sequence[Any],
    val_items: Sequence[Any],
    config: TrainConfig,
) -> TrainResult:
    """Train until validation stops improving or the epoch cap is hit.

    Stops once the selection metric has failed to improve for `patience`
    consecutive epochs. Ties go to the earliest epoch and the model is
    left restored to the best epoch's parameters.
    """
    if not train_items:
        raise ValueError("cannot train on an empty training split")
    if not val_items:
        raise ValueError("cannot validate on an empty validation split")

    rng = np.random.default_rng(config.seed)
    optimizer = make_optimizer(config)
    params = model.parameters()

    records: list[EpochRecord] = []
    epoch_losses: list[float] = []
    best_f1 = -1.0
    best_epoch = 0
    best_snapshot = model.snapshot()
    bad_streak = 0

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_items))
        total_loss = 0.0
        for lo in range(0, len(order), config.batch_size):
            batch = [train_items[i] for i in order[lo:lo + config.batch_size]]
            results = [model.loss_and_grads(item) for item in batch]
            grads = accumulate_grads([g for _, g in results])
            batch_loss = float(np.mean([l for l, _ in results]))
            _check_finite(batch_loss, grads, epoch)
            total_loss += batch_loss * len(batch)
            optimizer.step(params, grads)
        epoch_losses.append(total_loss / len(order))

        precision, recall, f1, captured = model.evaluate(val_items)
        records.append(
            EpochRecord(epoch=epoch, precision=precision, recall=recall, f1=f1, predictions=captured)
        )
        if f1 > best_f1:
            best_f1 = f1
            best_epoch = epoch
            best_snapshot = model.snapshot()
            bad_streak = 0
        else:
            bad_streak += 1
            if bad_streak >= config.patience:
                break

    model.restore(best_snapshot)
    return TrainResult(
        best_epoch=best_epoch,
        records=records,
        best_snapshot=best_snapshot,
        epoch_losses=epoch_losses,
    )
