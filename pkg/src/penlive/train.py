"""Generic minibatch training loop with Adam and accuracy early stopping.

Epochs iterate over shuffled minibatches; after each epoch the validation
accuracy at threshold 0.5 is recorded. Training stops at max_epochs or
once the monitor has not improved for `patience` consecutive epochs, and
the weights of the best validation epoch are restored (ties: earliest).
Single-threaded and fully determined by (seed, data order).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import EmptySplit
from .nn import OptimizerState, adam_step_params, bce_loss


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.0005
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    batch_size: int = 128
    max_epochs: int = 400
    patience: int = 40
    monitor: str = "accuracy"
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("decay rates must lie in [0, 1)")
        if self.patience < 1 or self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("patience, batch_size and max_epochs must be >= 1")
        if self.monitor != "accuracy":
            raise ValueError(f"unsupported monitor {self.monitor!r}")

    def as_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "adam_epsilon": self.adam_epsilon,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "monitor": self.monitor,
            "seed": self.seed,
            "shuffle": self.shuffle,
        }


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_accuracy: float


def _batched_predictions(model, xs: Sequence, batch_size: int) -> np.ndarray:
    out = np.empty(len(xs), dtype=np.float64)
    for lo in range(0, len(xs), batch_size):
        chunk = xs[lo : lo + batch_size]
        out[lo : lo + len(chunk)] = model.predict_batch(model.collate(chunk))
    return out


def evaluate_split(model, xs: Sequence, ys: np.ndarray, batch_size: int = 128):
    """(mean BCE loss, accuracy at threshold 0.5) over a labeled split."""
    p = _batched_predictions(model, xs, batch_size)
    losses, _ = bce_loss(p, ys)
    acc = float(np.mean((p >= 0.5) == (ys >= 0.5)))
    return float(np.mean(losses)), acc, p


def train_loop(
    model,
    train_xs: Sequence,
    train_ys,
    val_xs: Sequence,
    val_ys,
    cfg: TrainConfig = TrainConfig(),
    log: Optional[callable] = None,
):
    """Train in place; returns (model with best weights, history).

    history is a list of EpochStats, one per completed epoch.
    """
    if len(train_xs) == 0 or len(val_xs) == 0:
        raise EmptySplit("training and validation sets must be non-empty")
    train_ys = np.asarray(train_ys, dtype=np.float64)
    val_ys = np.asarray(val_ys, dtype=np.float64)
    rng = np.random.default_rng(cfg.seed)
    opt = {name: OptimizerState.zeros_like(p) for name, p in model.params.items()}

    best_acc = -1.0
    best_epoch = 0
    best_params = model.clone_params()
    history: list[EpochStats] = []

    order = np.arange(len(train_xs))
    for epoch in range(1, cfg.max_epochs + 1):
        if cfg.shuffle:
            rng.shuffle(order)
        epoch_loss = 0.0
        for lo in range(0, len(order), cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            batch = model.collate([train_xs[i] for i in idx])
            loss, grads = model.loss_and_grads(batch, train_ys[idx], train=True, rng=rng)
            epoch_loss += loss * len(idx)
            model.params, opt = adam_step_params(model.params, grads, opt, cfg)
        val_loss, val_acc, _ = evaluate_split(model, val_xs, val_ys, cfg.batch_size)
        stats = EpochStats(
            epoch=epoch,
            train_loss=epoch_loss / len(order),
            val_loss=val_loss,
            val_accuracy=val_acc,
        )
        history.append(stats)
        if log is not None:
            log(stats)
        if val_acc > best_acc:
            best_acc = val_acc
            best_epoch = epoch
            best_params = model.clone_params()
        if epoch - best_epoch >= cfg.patience:
            break
    model.params = best_params
    return model, history
