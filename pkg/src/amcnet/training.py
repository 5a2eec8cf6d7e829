"""Training loop: Xavier init, Adam, early stopping, history logging."""

from __future__ import annotations

import csv
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .datagen import Dataset
from .model import AmcNetModel
from .tensor import ConfigError, Tensor

__all__ = [
    "TrainConfig",
    "TrainResult",
    "EvalResult",
    "AdamState",
    "EarlyStopper",
    "xavier_init",
    "adam_step",
    "batch_indices",
    "evaluate",
    "fit",
]


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 200
    batch_size: int = 128
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    patience: int = 10
    min_delta: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.max_epochs <= 0 or self.batch_size <= 1:
            raise ConfigError(
                f"max_epochs must be positive and batch_size at least 2, "
                f"got {self.max_epochs} and {self.batch_size}"
            )
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError(f"betas must lie in [0, 1): {self.beta1}, {self.beta2}")
        if self.learning_rate <= 0 or self.eps <= 0 or self.patience < 1:
            raise ConfigError("learning_rate, eps and patience must be positive")


def xavier_init(model: AmcNetModel, seed: int = 0) -> AmcNetModel:
    """Fill weight tensors with Glorot-uniform draws; leave rank-1 tensors alone.

    Draws come from one stream in parameter order, so a given (config, seed)
    always produces the same model. Fan counts follow tensor rank: matrices
    are (out, in), convolution kernels multiply in the receptive field.
    """
    rng = np.random.default_rng(seed)
    for name, p in model.named_parameters():
        shape = p.shape
        if len(shape) < 2:
            continue  # biases stay 0, batch-norm gains stay 1
        receptive = int(np.prod(shape[2:], dtype=np.int64)) if len(shape) > 2 else 1
        fan_out = shape[0] * receptive
        fan_in = shape[1] * receptive
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        p.data[...] = rng.uniform(-bound, bound, size=shape).astype(p.data.dtype)
    return model


class AdamState:
    """First/second moment accumulators plus the shared step counter."""

    def __init__(self, params: list[Tensor]):
        self.step = 0
        self.m = [np.zeros_like(p.data, dtype=np.float32) for p in params]
        self.v = [np.zeros_like(p.data, dtype=np.float32) for p in params]


def adam_step(params: list[Tensor], state: AdamState, config: TrainConfig) -> None:
    """One bias-corrected Adam update over all parameters."""
    state.step += 1
    t = state.step
    b1, b2 = config.beta1, config.beta2
    for i, p in enumerate(params):
        if p.grad is None:
            raise ValueError(f"parameter {i} has no gradient; run backward first")
        g = p.grad
        state.m[i] = b1 * state.m[i] + (1 - b1) * g
        state.v[i] = b2 * state.v[i] + (1 - b2) * g * g
        m_hat = state.m[i] / (1 - b1**t)
        v_hat = state.v[i] / (1 - b2**t)
        p.data -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)


class EarlyStopper:
    """Stop after `patience` epochs without a val-loss decrease of min_delta."""

    def __init__(self, patience: int = 10, min_delta: float = 1e-6):
        self.patience = patience
        self.min_delta = min_delta
        self.best_loss = np.inf
        self.best_epoch = 0
        self.stale = 0

    def update(self, epoch: int, val_loss: float) -> bool:
        """Feed one epoch's validation loss; returns True when training should stop."""
        if val_loss < self.best_loss - self.min_delta:
            self.best_loss = val_loss
            self.best_epoch = epoch
            self.stale = 0
        else:
            self.stale += 1
        return self.stale >= self.patience


def batch_indices(n: int, batch_size: int, order: np.ndarray | None = None):
    """Split [0, n) into consecutive batches; a trailing singleton merges back.

    Batch norm cannot normalize a single example in training mode, so a final
    batch of size 1 is folded into the previous one instead of being dropped.
    """
    if n < 2:
        raise ConfigError(f"need at least 2 training examples, got {n}")
    if order is None:
        order = np.arange(n)
    starts = list(range(0, n, batch_size))
    if len(starts) > 1 and n - starts[-1] == 1:
        starts.pop()
    for j, start in enumerate(starts):
        stop = starts[j + 1] if j + 1 < len(starts) else n
        yield order[start:stop]


@dataclass
class EvalResult:
    loss: float
    accuracy: float
    predictions: np.ndarray


def evaluate(model: AmcNetModel, dataset: Dataset, batch_size: int = 256) -> EvalResult:
    """Mean cross-entropy and accuracy over a dataset in eval mode."""
    was_training = model.training
    model.eval()
    try:
        total_loss = 0.0
        preds = np.empty(len(dataset), dtype=np.int64)
        with T.no_grad():
            for idx in _eval_batches(len(dataset), batch_size):
                x = Tensor(dataset.iq[idx])
                logits = model.forward(x)
                loss = T.cross_entropy(logits, dataset.labels[idx])
                total_loss += float(loss.data) * len(idx)
                preds[idx] = np.argmax(logits.data, axis=1)
        accuracy = float(np.mean(preds == dataset.labels)) if len(dataset) else 0.0
        return EvalResult(total_loss / max(len(dataset), 1), accuracy, preds)
    finally:
        model.training = was_training


def _eval_batches(n: int, batch_size: int):
    for start in range(0, n, batch_size):
        yield np.arange(start, min(start + batch_size, n))


@dataclass
class TrainResult:
    epochs_run: int
    best_epoch: int
    best_val_loss: float
    history: list[dict] = field(default_factory=list)


def _write_history(path, rows: list[dict]) -> None:
    # write to a sibling temp file and rename so a crash never leaves a stub
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "val_loss", "val_acc"])
            for row in rows:
                writer.writerow([row["epoch"], f"{row['train_loss']:.6f}",
                                 f"{row['val_loss']:.6f}", f"{row['val_acc']:.6f}"])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fit(model: AmcNetModel, train: Dataset, val: Dataset,
        config: TrainConfig = TrainConfig(), history_path=None,
        log=None) -> TrainResult:
    """Train with Adam and early stopping; the best-val-loss weights win.

    Each epoch reshuffles with a generator keyed on (seed, epoch), so runs
    are reproducible. On stop (early or final epoch), parameters and batch
    norm running moments are restored from the best epoch's snapshot.
    """
    if train.length != model.config.sequence_length:
        raise ConfigError(
            f"dataset length {train.length} does not match model "
            f"{model.config.sequence_length}"
        )
    params = model.parameters()
    adam = AdamState(params)
    stopper = EarlyStopper(config.patience, config.min_delta)
    best_snap = model.snapshot()
    history: list[dict] = []
    epochs_run = 0
    for epoch in range(1, config.max_epochs + 1):
        epochs_run = epoch
        rng = np.random.default_rng([config.seed, epoch])
        order = rng.permutation(len(train))
        model.train()
        loss_sum = 0.0
        for idx in batch_indices(len(train), config.batch_size, order):
            x = Tensor(train.iq[idx])
            logits = model.forward(x)
            loss = T.cross_entropy(logits, train.labels[idx])
            model.zero_grad()
            loss.backward()
            adam_step(params, adam, config)
            loss_sum += float(loss.data) * len(idx)
        train_loss = loss_sum / len(train)
        val_result = evaluate(model, val, batch_size=max(config.batch_size, 256))
        row = {"epoch": epoch, "train_loss": train_loss,
               "val_loss": val_result.loss, "val_acc": val_result.accuracy}
        history.append(row)
        if log is not None:
            log(f"epoch {epoch:3d}  train_loss {train_loss:.4f}  "
                f"val_loss {val_result.loss:.4f}  val_acc {val_result.accuracy:.4f}")
        improved = val_result.loss < stopper.best_loss - stopper.min_delta
        should_stop = stopper.update(epoch, val_result.loss)
        if improved:
            best_snap = model.snapshot()
        if should_stop:
            if log is not None:
                log(f"early stop at epoch {epoch}; best was epoch {stopper.best_epoch}")
            break
    model.restore(best_snap)
    if history_path is not None:
        _write_history(history_path, history)
    return TrainResult(epochs_run, stopper.best_epoch or epochs_run,
                       float(stopper.best_loss), history)
