"""Deterministic mini-batch training with early stopping on validation loss.

All randomness flows from TrainConfig.seed through named substreams
("init" for weights, "shuffle-epoch-N" for batch order), so identical
configs reproduce identical parameters bit for bit in single-threaded
64-bit mode.
"""

import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import TASK_AVERAGE_RATING, TASKS
from .autodiff import Adam, backward, clip_global_norm, softmax_cross_entropy
from .errors import DataError, NumericalError
from .model import (ModelConfig, ModelParams, build_model, clone_params,
                    count_parameters, forward_batch, named_parameters)
from .seeding import derive_seed, substream
from .textprep import encode_example

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    task: str = TASK_AVERAGE_RATING
    batch_size: int = 32
    epochs: int = 30
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    clip_norm: float = 5.0          # <= 0 disables gradient clipping
    early_stop_patience: int = 5
    embedding_dim: int = 100
    hidden: int = 64
    hidden2: int = 64
    dense: int = 64
    max_len: int = 30
    min_count: int = 1

    def validate(self) -> None:
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.early_stop_patience < 0:
            raise ValueError(f"patience must be >= 0, got {self.early_stop_patience}")
        if self.seed < 0:
            raise ValueError(f"seed must be >= 0, got {self.seed}")
        for name in ("embedding_dim", "hidden", "hidden2", "dense", "max_len", "min_count"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")

    def model_config(self, hinglish_vocab_size: int) -> ModelConfig:
        return ModelConfig(hinglish_vocab_size=hinglish_vocab_size,
                           embedding_dim=self.embedding_dim, hidden=self.hidden,
                           hidden2=self.hidden2, dense=self.dense,
                           max_len=self.max_len)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: Optional[float]
    val_accuracy: Optional[float]
    seconds: float


HISTORY_COLUMNS = ("epoch", "train_loss", "train_accuracy",
                   "val_loss", "val_accuracy", "seconds")


def write_history(records, path) -> None:
    """Epoch history as a comma-separated log, one row per epoch."""
    lines = [",".join(HISTORY_COLUMNS)]
    for r in records:
        val_loss = "" if r.val_loss is None else f"{r.val_loss:.17g}"
        val_acc = "" if r.val_accuracy is None else f"{r.val_accuracy:.17g}"
        lines.append(f"{r.epoch},{r.train_loss:.17g},{r.train_accuracy:.17g},"
                     f"{val_loss},{val_acc},{r.seconds:.3f}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def make_batches(examples, batch_size: int, seed: int, shuffle: bool = True) -> list:
    """Partition into batches of `batch_size` (last one may be short).

    With shuffle a seeded pseudorandom permutation is applied first; the
    same seed always yields the same composition.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    items = list(examples)
    if shuffle:
        order = np.random.default_rng(seed).permutation(len(items))
        items = [items[i] for i in order]
    return [items[i:i + batch_size] for i in range(0, len(items), batch_size)]


def encode_for_task(examples, task, vocabs, embeddings, max_len: int) -> list:
    return [encode_example(e, task, vocabs, embeddings, max_len) for e in examples]


def _loss_and_correct(encs, params):
    logits = forward_batch(encs, params)
    labels = [e.label for e in encs]
    loss = softmax_cross_entropy(logits, labels)
    correct = int((logits.data.argmax(axis=1) == np.asarray(labels)).sum())
    return loss, correct


def evaluate_loss(params: ModelParams, encoded, batch_size: int = 64):
    """Mean cross-entropy and accuracy over an encoded dataset."""
    if not encoded:
        raise ValueError("empty input")
    total_loss, total_correct = 0.0, 0
    for start in range(0, len(encoded), batch_size):
        chunk = encoded[start:start + batch_size]
        loss, correct = _loss_and_correct(chunk, params)
        total_loss += loss.item() * len(chunk)
        total_correct += correct
    return total_loss / len(encoded), total_correct / len(encoded)


def predict(params: ModelParams, encoded, batch_size: int = 64) -> list:
    """Argmax class index per example; ties resolve to the lower index."""
    preds = []
    for start in range(0, len(encoded), batch_size):
        chunk = encoded[start:start + batch_size]
        logits = forward_batch(chunk, params).data
        preds.extend(int(i) for i in logits.argmax(axis=1))
    return preds


def train(config: TrainConfig, split, vocabs, embeddings):
    """Train on split.train, monitor split.validation, keep the best weights.

    Returns (ModelParams, [EpochRecord]); the parameters are those of the
    epoch with the lowest validation loss (final epoch when there is no
    validation data). Training stops once the count of consecutive epochs
    without validation improvement exceeds early_stop_patience.
    """
    config.validate()
    if not split.train:
        raise DataError("training split is empty")

    enc_train = encode_for_task(split.train, config.task, vocabs, embeddings,
                                config.max_len)
    enc_val = encode_for_task(split.validation, config.task, vocabs, embeddings,
                              config.max_len)

    params = build_model(config.model_config(len(vocabs.hinglish)),
                         rng=substream(config.seed, "init"))
    tensors = [t for _, t in named_parameters(params)]
    optimizer = Adam(tensors, lr=config.learning_rate, beta1=config.beta1,
                     beta2=config.beta2, eps=config.epsilon)
    log.info("training task=%s on %d examples (%d parameters, batch_size=%d)",
             config.task, len(enc_train), count_parameters(params), config.batch_size)

    history = []
    best_val = float("inf")
    best_params = None
    epochs_without_improvement = 0

    for epoch in range(1, config.epochs + 1):
        started = time.perf_counter()
        batches = make_batches(enc_train, config.batch_size,
                               seed=derive_seed(config.seed, f"shuffle-epoch-{epoch}"),
                               shuffle=True)
        running_loss, running_correct = 0.0, 0
        for batch_index, batch in enumerate(batches):
            try:
                loss, correct = _loss_and_correct(batch, params)
                backward(loss)
                clip_global_norm(tensors, config.clip_norm)
                optimizer.step()
            except NumericalError as exc:
                raise NumericalError(
                    f"epoch {epoch} batch {batch_index}: {exc}") from exc
            optimizer.zero_grad()
            running_loss += loss.item() * len(batch)
            running_correct += correct

        record = EpochRecord(
            epoch=epoch,
            train_loss=running_loss / len(enc_train),
            train_accuracy=running_correct / len(enc_train),
            val_loss=None,
            val_accuracy=None,
            seconds=0.0,
        )
        if enc_val:
            record.val_loss, record.val_accuracy = evaluate_loss(params, enc_val)
        record.seconds = time.perf_counter() - started
        history.append(record)
        log.info("epoch %d: train_loss=%.4f train_acc=%.4f val_loss=%s val_acc=%s "
                 "(%.1fs)", epoch, record.train_loss, record.train_accuracy,
                 "-" if record.val_loss is None else f"{record.val_loss:.4f}",
                 "-" if record.val_accuracy is None else f"{record.val_accuracy:.4f}",
                 record.seconds)

        if enc_val:
            if record.val_loss < best_val:
                best_val = record.val_loss
                best_params = clone_params(params)
                epochs_without_improvement = 0
            else:
                epochs_without_improvement += 1
                if epochs_without_improvement > config.early_stop_patience:
                    log.info("early stop after epoch %d (best val_loss=%.4f)",
                             epoch, best_val)
                    break

    return (best_params if best_params is not None else params), history
