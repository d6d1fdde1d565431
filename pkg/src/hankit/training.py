"""Training loop, optimizer, evaluation metrics, and the parameter audit.

Training is full-batch-loop SGD over seeded epoch shuffles: per batch the
forward pass runs user by user on one tape, the mean cross entropy is
walked backward once, and Adam (with decoupled weight decay) updates the
parameters in place. Model selection keeps the epoch snapshot with the best
validation F1. Everything is deterministic for a fixed config.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

from .classifier import HanModel, cross_entropy, forward_user, init_model, predict_record
from .data import Dataset, pad_truncate
from .encoder import layer_param_count
from .errors import HankitError
from .tensor import Binding, NonFiniteError, Param, Tape, add, scale

ENCODER_KINDS = ("HAN", "LSTM", "BiLSTM", "GRU", "BiGRU", "TF-first", "HAN-TF")


class TrainingError(HankitError):
    pass


class TrainingDivergedError(HankitError):
    """The loss went non-finite; the message names the failing step."""


class OptimizerError(HankitError):
    """A gradient buffer was missing or non-finite; the message names the parameter."""


class EvaluationError(HankitError):
    pass


class UnknownEncoderError(HankitError):
    pass


@dataclass
class TrainConfig:
    """Hyperparameters; defaults follow the reference setup."""

    d: int = 768
    layers: int = 2
    batch_size: int = 64
    learning_rate: float = 1e-4
    weight_decay: float = 1e-5
    dropout: float = 0.2
    epochs: int = 10
    seed: int = 0
    cap: int = 200
    ablate_mcm: bool = False

    def validate(self) -> None:
        if self.d < 1:
            raise TrainingError(f"d must be positive, got {self.d}")
        if self.layers < 1:
            raise TrainingError(f"layers must be positive, got {self.layers}")
        if self.batch_size < 1:
            raise TrainingError(f"batch_size must be positive, got {self.batch_size}")
        if self.learning_rate < 0:
            raise TrainingError(f"learning_rate must be non-negative, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise TrainingError(f"weight_decay must be non-negative, got {self.weight_decay}")
        if not 0.0 <= self.dropout < 1.0:
            raise TrainingError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.epochs < 0:
            raise TrainingError(f"epochs must be non-negative, got {self.epochs}")
        if self.cap < 1:
            raise TrainingError(f"cap must be positive, got {self.cap}")


def load_config_file(path) -> dict:
    """Parse a key=value config file into TrainConfig field overrides."""
    valid = {f.name: f.type for f in fields(TrainConfig)}
    out: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise TrainingError(f"{path}: line {lineno}: expected key=value")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in valid:
                raise TrainingError(f"{path}: line {lineno}: unknown config key {key!r}")
            try:
                if key == "ablate_mcm":
                    if value.lower() not in ("true", "false", "0", "1"):
                        raise ValueError(value)
                    out[key] = value.lower() in ("true", "1")
                elif key in ("learning_rate", "weight_decay", "dropout"):
                    out[key] = float(value)
                else:
                    out[key] = int(value)
            except ValueError:
                raise TrainingError(f"{path}: line {lineno}: bad value {value!r} for {key!r}") from None
    return out


@dataclass
class Metrics:
    """Positive-class precision/recall/F1 plus accuracy, zero-division-safe."""

    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f1: float
    accuracy: float

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int, tn: int) -> "Metrics":
        total = tp + fp + fn + tn
        if total == 0:
            raise EvaluationError("cannot compute metrics over zero predictions")
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        return cls(tp, fp, fn, tn, precision, recall, f1, (tp + tn) / total)

    @classmethod
    def from_predictions(cls, y_true: Sequence[int], y_pred: Sequence[int]) -> "Metrics":
        if len(y_true) != len(y_pred):
            raise EvaluationError(f"{len(y_true)} labels vs {len(y_pred)} predictions")
        tp = fp = fn = tn = 0
        for t, p in zip(y_true, y_pred):
            if p == 1:
                tp, fp = (tp + 1, fp) if t == 1 else (tp, fp + 1)
            else:
                fn, tn = (fn + 1, tn) if t == 1 else (fn, tn + 1)
        return cls.from_counts(tp, fp, fn, tn)


@dataclass
class AdamState:
    """First/second moment buffers keyed by parameter name."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Sequence[Param]) -> "AdamState":
        return cls(
            m={p.name: np.zeros_like(p.data) for p in params},
            v={p.name: np.zeros_like(p.data) for p in params},
        )


def adam_step(
    params: Sequence[Param],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    weight_decay: float = 0.0,
) -> None:
    """Decoupled weight decay, then a bias-corrected Adam update, in place.

    Decay applies directly to the parameter (p -= lr*wd*p) before the Adam
    delta; eps sits outside the square root.
    """
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for p in params:
        if p.name not in grads:
            raise OptimizerError(f"no gradient supplied for parameter {p.name!r}")
        g = grads[p.name]
        if g.shape != p.data.shape:
            raise OptimizerError(f"gradient shape {g.shape} does not match parameter {p.name!r}")
        if not np.all(np.isfinite(g)):
            raise OptimizerError(f"non-finite gradient for parameter {p.name!r}")
        if weight_decay:
            p.data -= lr * weight_decay * p.data
        m, v = state.m[p.name], state.v[p.name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


@dataclass
class HistoryRow:
    step: int
    epoch: int
    train_loss: float
    val_f1: float | None = None


def worker_count() -> int:
    """Worker cap from HANKIT_THREADS (default 1; invalid values fall back to 1)."""
    raw = os.environ.get("HANKIT_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _predict_labels(model: HanModel, users) -> list[int]:
    workers = worker_count()
    if workers <= 1 or len(users) < 2:
        return [predict_record(model, u)[0].label for u in users]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return [pred.label for pred, _, _ in pool.map(lambda u: predict_record(model, u), users)]


def evaluate(model: HanModel, dataset: Dataset) -> Metrics:
    """Metrics over a dataset; inference order is deterministic even threaded."""
    if not dataset.users:
        raise EvaluationError("cannot evaluate an empty dataset")
    if dataset.d != model.d:
        raise EvaluationError(f"dataset width {dataset.d} does not match model d={model.d}")
    labels = _predict_labels(model, dataset.users)
    return Metrics.from_predictions([u.label for u in dataset.users], labels)


def train(train_set: Dataset, val_set: Dataset, config: TrainConfig) -> tuple[HanModel, list[HistoryRow]]:
    """Train a fresh model; returns it with the best-validation-F1 snapshot restored.

    History holds one row per optimizer step; the last row of each epoch
    carries that epoch's validation F1. Identical configs (and datasets)
    produce identical histories and models.
    """
    config.validate()
    if not train_set.users:
        raise TrainingError("training set is empty")
    if train_set.d != config.d:
        raise TrainingError(f"dataset width {train_set.d} does not match config d={config.d}")
    if val_set.users and val_set.d != config.d:
        raise TrainingError(f"validation width {val_set.d} does not match config d={config.d}")
    model = init_model(
        config.d,
        num_layers=config.layers,
        seed=config.seed,
        cap=config.cap,
        ablate_mcm=config.ablate_mcm,
    )
    params = model.parameters()
    adam = AdamState.for_params(params)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x7EA1]))
    history: list[HistoryRow] = []
    best_f1: float | None = None
    best_snapshot: dict[str, np.ndarray] | None = None
    step = 0
    users = train_set.users
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(users))
        for start in range(0, len(users), config.batch_size):
            chunk = [users[i] for i in order[start : start + config.batch_size]]
            batch = pad_truncate(chunk, cap=config.cap, d=config.d)
            tape = Tape()
            binding = Binding(params, tape)
            total = None
            try:
                for i in range(len(chunk)):
                    probs, _, _ = forward_user(
                        model,
                        binding,
                        batch.tweet[i],
                        batch.tweet_mask[i],
                        batch.mcm[i],
                        batch.mcm_mask[i],
                        training=True,
                        dropout_rate=config.dropout,
                        rng=rng,
                    )
                    loss_i = cross_entropy(probs, int(batch.labels[i]))
                    total = loss_i if total is None else add(total, loss_i)
                mean_loss = scale(total, 1.0 / len(chunk))
                tape.backward(mean_loss)
            except NonFiniteError as exc:
                raise TrainingDivergedError(f"training diverged at step {step}: {exc}") from exc
            adam_step(params, binding.grads(), adam, config.learning_rate, config.weight_decay)
            history.append(HistoryRow(step=step, epoch=epoch, train_loss=float(mean_loss.data)))
            step += 1
        if val_set.users:
            val_f1 = evaluate(model, val_set).f1
            if history:
                history[-1].val_f1 = val_f1
            if best_f1 is None or val_f1 > best_f1:
                best_f1 = val_f1
                best_snapshot = {p.name: p.data.copy() for p in params}
    if best_snapshot is not None:
        for p in params:
            p.data[...] = best_snapshot[p.name]
    return model, history


def write_history(history: Sequence[HistoryRow], path) -> None:
    """CSV with columns step,epoch,train_loss,val_f1 (blank F1 off epoch ends)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "epoch", "train_loss", "val_f1"])
        for row in history:
            writer.writerow(
                [row.step, row.epoch, repr(row.train_loss), "" if row.val_f1 is None else repr(row.val_f1)]
            )


def read_history(path) -> list[HistoryRow]:
    rows: list[HistoryRow] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            rows.append(
                HistoryRow(
                    step=int(rec["step"]),
                    epoch=int(rec["epoch"]),
                    train_loss=float(rec["train_loss"]),
                    val_f1=float(rec["val_f1"]) if rec["val_f1"] else None,
                )
            )
    return rows


def count_params(kind: str, d: int, heads: int = 8, d_ff: int | None = None) -> int:
    """Closed-form trainable parameter count of one encoder layer.

    Gated RNNs follow the two-bias convention (separate input and recurrent
    bias vectors), bidirectional variants double their base cell, and the
    transformer layer is a post-norm block (QKV+output projections, a
    two-layer position-wise FFN of width ``d_ff``, defaulting to d, two
    layer norms); its head count does not affect the total. HAN-TF feeds one
    attention sublayer (d^2+d and its layer norm) into the transformer block.
    """
    if d < 1:
        raise ValueError(f"need positive width, got {d}")
    if heads < 1 or d % heads:
        raise ValueError(f"head count {heads} must divide d={d}")
    f = d if d_ff is None else d_ff
    if f < 1:
        raise ValueError(f"need positive FFN width, got {f}")
    gate = 2 * d * d + 2 * d
    tf_first = 4 * (d * d + d) + (d * f + f) + (f * d + d) + 4 * d
    counts = {
        "HAN": layer_param_count(d),
        "LSTM": 4 * gate,
        "BiLSTM": 8 * gate,
        "GRU": 3 * gate,
        "BiGRU": 6 * gate,
        "TF-first": tf_first,
        "HAN-TF": (d * d + d) + 2 * d + tf_first,
    }
    if kind not in counts:
        raise UnknownEncoderError(f"unknown encoder kind {kind!r}; expected one of {', '.join(ENCODER_KINDS)}")
    return counts[kind]


def format_param_count(count: int) -> str:
    return f"{count / 1e6:.2f}M"


def param_audit(d: int, heads: int = 8, d_ff: int | None = None) -> list[tuple[str, int, str]]:
    """Per-layer parameter counts for every benchmarked encoder kind."""
    return [
        (kind, count, format_param_count(count))
        for kind in ENCODER_KINDS
        for count in [count_params(kind, d, heads=heads, d_ff=d_ff)]
    ]
