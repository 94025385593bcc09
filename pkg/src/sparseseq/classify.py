"""Classification on top of the encoder: a linear softmax head over the final
hidden state (plus static features), class-weighted cross-entropy, resampling
hooks, and the staged training protocol with validation-based selection.

Modes: `scratch` trains everything from random init; `frozen` keeps a
pre-trained encoder fixed and fits only the head; `fine_tuned` runs the
frozen stage first and then trains end-to-end from its result.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import NormStats, TimeSeriesDataset, resample
from .encoders import (ENC, ConfigError, EncoderConfig, dropout_mask, encode,
                       impute_view, init_encoder_params)
from .metrics import auprc, auroc, f1_scores

HEAD_W = "head.W"
HEAD_B = "head.b"

MODES = ("scratch", "frozen", "fine_tuned")
IMBALANCE_METHODS = ("none", "class_weights", "oversample", "undersample", "oversample_cw")


@dataclass
class Hyperparams:
    """Per-model training knobs; step-2/3 fields only matter after pre-training."""

    learning_rate: float = 1e-3
    batch_size: int = 32
    hidden_units: int = 64
    dropout: float = 0.0
    recurrent_dropout: float = 0.0
    epochs: int = 100
    learning_rate_step23: float = 1e-4
    epochs_step23: int | None = None

    def stage23_epochs(self) -> int:
        return self.epochs if self.epochs_step23 is None else self.epochs_step23

    def to_obj(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "hidden_units": self.hidden_units,
            "dropout": self.dropout,
            "recurrent_dropout": self.recurrent_dropout,
            "epochs": self.epochs,
            "learning_rate_step23": self.learning_rate_step23,
            "epochs_step23": self.epochs_step23,
        }

    @staticmethod
    def from_obj(obj: dict) -> "Hyperparams":
        return Hyperparams(**obj)


@dataclass
class TrainPlan:
    mode: str = "scratch"
    imbalance: str = "none"
    oversample_fraction: float | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; pick one of {MODES}")
        if self.imbalance not in IMBALANCE_METHODS:
            raise ConfigError(f"unknown imbalance method {self.imbalance!r}")
        if self.imbalance == "oversample_cw" and self.oversample_fraction is None:
            raise ConfigError("oversample_cw needs an oversample fraction")


@dataclass
class TrainedModel:
    params: dict
    enc_config: EncoderConfig
    stats: NormStats
    n_classes: int
    selection: dict = field(default_factory=dict)


def class_weights(labels, n_classes: int) -> np.ndarray:
    """Balanced inverse frequency: w_c = N / (K * N_c)."""
    counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=n_classes)
    if (counts == 0).any():
        empty = int(np.flatnonzero(counts == 0)[0])
        raise ConfigError(f"class {empty} has no samples; cannot weight it")
    return counts.sum() / (n_classes * counts.astype(np.float64))


def weighted_cross_entropy(logits: Tensor, labels: np.ndarray, weights: np.ndarray) -> Tensor:
    """Mean over the batch of -w[label] * log softmax(logits)[label]."""
    labels = np.asarray(labels, dtype=np.int64)
    picked = ad.take_per_row(ad.log_softmax(logits, axis=1), labels)
    scale = -weights[labels] / labels.size
    return ad.masked_sum(picked, scale)


def init_head_params(rng: np.random.Generator, hidden: int, n_static: int,
                     n_classes: int) -> dict:
    return {
        HEAD_W: Tensor(ad.glorot_uniform(rng, hidden + n_static, n_classes), requires_grad=True),
        HEAD_B: Tensor(np.zeros(n_classes), requires_grad=True),
    }


def head_logits(params: dict, final_h: Tensor, static: np.ndarray,
                drop: Tensor | None = None) -> Tensor:
    x = final_h if drop is None else ad.mul(final_h, drop)
    if static.shape[1]:
        x = ad.concat([x, Tensor(static)], axis=1)
    return ad.affine(params[HEAD_B], (x, params[HEAD_W]))


def final_states(view, params: dict, config: EncoderConfig,
                 chunk: int = 512) -> np.ndarray:
    """Deterministic (eval-mode) final hidden states for every sample."""
    outs = []
    with ad.no_grad():
        for start in range(0, view.n_samples, chunk):
            idx = np.arange(start, min(start + chunk, view.n_samples))
            _, final = encode(view, params, config, idx=idx, train=False)
            outs.append(final.data)
    return np.concatenate(outs, axis=0) if outs else np.zeros((0, config.hidden))


def predict_probs(model: TrainedModel, dataset: TimeSeriesDataset) -> np.ndarray:
    """Softmax class probabilities for a normalized dataset; rows sum to 1."""
    view = impute_view(dataset, model.stats, model.enc_config.scheme)
    reps = final_states(view, model.params, model.enc_config)
    with ad.no_grad():
        logits = head_logits(model.params, Tensor(reps), dataset.static)
        return ad.softmax(logits, axis=1).data


def validation_score(probs: np.ndarray, labels: np.ndarray, n_classes: int) -> float:
    """AUPRC of the positive class for binary tasks, weighted F1 otherwise."""
    if n_classes == 2:
        return auprc(probs[:, 1], labels)
    preds = probs.argmax(axis=1)
    return f1_scores(labels, preds, n_classes).weighted / 100.0


def _select(history: list) -> tuple[int, float]:
    """Best epoch (1-based) by validation metric, earliest epoch on ties."""
    best = int(np.argmax(history))
    return best + 1, history[best]


def _epoch_batches(rng: np.random.Generator, n: int, batch_size: int):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def _train_head_stage(head: dict, reps_train: np.ndarray, train_view,
                      reps_val: np.ndarray, val_view, weights: np.ndarray,
                      hp: Hyperparams, epochs: int, lr: float,
                      rng: np.random.Generator, n_classes: int):
    """Head-only training on precomputed representations (encoder untouched)."""
    opt = ad.AdamState(lr)
    history, best_snap, best_val = [], None, -np.inf
    n = reps_train.shape[0]
    for _ in range(epochs):
        for idx in _epoch_batches(rng, n, hp.batch_size):
            ad.zero_grads(head)
            drop = None
            if hp.dropout > 0.0:
                drop = Tensor(dropout_mask(rng, (idx.size, reps_train.shape[1]), hp.dropout))
            logits = head_logits(head, Tensor(reps_train[idx]), train_view.static[idx], drop)
            loss = weighted_cross_entropy(logits, train_view.labels[idx], weights)
            ad.backward(loss)
            ad.adam_step(head, opt)
        with ad.no_grad():
            logits = head_logits(head, Tensor(reps_val), val_view.static)
            probs = ad.softmax(logits, axis=1).data
        score = validation_score(probs, val_view.labels, n_classes)
        history.append(score)
        if score > best_val:
            best_val = score
            best_snap = ad.snapshot(head)
    if best_snap is not None:
        ad.restore(head, best_snap)
    return history


def _train_end_to_end(params: dict, enc_config: EncoderConfig, train_view, val_view,
                      weights: np.ndarray, hp: Hyperparams, epochs: int, lr: float,
                      rng: np.random.Generator, n_classes: int):
    opt = ad.AdamState(lr)
    history, best_snap, best_val = [], None, -np.inf
    n = train_view.n_samples
    for _ in range(epochs):
        for idx in _epoch_batches(rng, n, hp.batch_size):
            ad.zero_grads(params)
            _, final = encode(train_view, params, enc_config, idx=idx, train=True, rng=rng)
            drop = None
            if hp.dropout > 0.0:
                drop = Tensor(dropout_mask(rng, final.data.shape, hp.dropout))
            logits = head_logits(params, final, train_view.static[idx], drop)
            loss = weighted_cross_entropy(logits, train_view.labels[idx], weights)
            ad.backward(loss)
            ad.adam_step(params, opt)
        reps_val = final_states(val_view, params, enc_config)
        with ad.no_grad():
            logits = head_logits(params, Tensor(reps_val), val_view.static)
            probs = ad.softmax(logits, axis=1).data
        score = validation_score(probs, val_view.labels, n_classes)
        history.append(score)
        if score > best_val:
            best_val = score
            best_snap = ad.snapshot(params)
    if best_snap is not None:
        ad.restore(params, best_snap)
    return history


def train_classifier(pretrained: dict | None, plan: TrainPlan,
                     train_ds: TimeSeriesDataset, val_ds: TimeSeriesDataset,
                     stats: NormStats, enc_config: EncoderConfig,
                     hp: Hyperparams, seed: int) -> TrainedModel:
    """Run the configured stages and return the best-validation checkpoint.

    Both datasets must already be normalized with the training-split stats.
    Resampling and class weights only ever see the training split.
    """
    if plan.mode != "scratch" and pretrained is None:
        raise ConfigError(f"mode {plan.mode!r} needs pre-trained encoder weights")
    rng = np.random.default_rng(seed)
    n_classes = train_ds.n_classes

    if plan.imbalance in ("oversample", "undersample"):
        train_ds = resample(train_ds, plan.imbalance, seed=int(rng.integers(2 ** 62)))
    elif plan.imbalance == "oversample_cw":
        train_ds = resample(train_ds, "oversample_to", seed=int(rng.integers(2 ** 62)),
                            fraction=plan.oversample_fraction)
    if plan.imbalance in ("class_weights", "oversample_cw"):
        weights = class_weights(train_ds.labels, n_classes)
    else:
        weights = np.ones(n_classes)

    train_view = impute_view(train_ds, stats, enc_config.scheme)
    val_view = impute_view(val_ds, stats, enc_config.scheme)

    if plan.mode == "scratch":
        params = init_encoder_params(enc_config, rng)
        params.update(init_head_params(rng, enc_config.hidden, train_ds.n_static, n_classes))
        history = _train_end_to_end(params, enc_config, train_view, val_view, weights,
                                    hp, hp.epochs, hp.learning_rate, rng, n_classes)
        epoch, value = _select(history)
        selection = {"metric": _metric_name(n_classes), "best_epoch": epoch,
                     "best_value": value, "history": history}
        return TrainedModel(params, enc_config, stats, n_classes, selection)

    encoder = {name: Tensor(t.data.copy(), requires_grad=True, name=name)
               for name, t in pretrained.items() if name.startswith(ENC)}
    head = init_head_params(rng, enc_config.hidden, train_ds.n_static, n_classes)
    reps_train = final_states(train_view, encoder, enc_config)
    reps_val = final_states(val_view, encoder, enc_config)
    stage2 = _train_head_stage(head, reps_train, train_view, reps_val, val_view, weights,
                               hp, hp.stage23_epochs(), hp.learning_rate_step23, rng, n_classes)
    params = dict(encoder)
    params.update(head)
    epoch2, value2 = _select(stage2)
    selection = {"metric": _metric_name(n_classes),
                 "stage2": {"best_epoch": epoch2, "best_value": value2, "history": stage2}}
    if plan.mode == "frozen":
        selection.update({"best_epoch": epoch2, "best_value": value2, "history": stage2})
        return TrainedModel(params, enc_config, stats, n_classes, selection)

    stage3 = _train_end_to_end(params, enc_config, train_view, val_view, weights,
                               hp, hp.stage23_epochs(), hp.learning_rate_step23,
                               rng, n_classes)
    epoch3, value3 = _select(stage3)
    selection.update({"best_epoch": epoch3, "best_value": value3, "history": stage3,
                      "stage3": {"best_epoch": epoch3, "best_value": value3}})
    return TrainedModel(params, enc_config, stats, n_classes, selection)


def _metric_name(n_classes: int) -> str:
    return "auprc" if n_classes == 2 else "f1_weighted"


def evaluate_model(model: TrainedModel, dataset: TimeSeriesDataset,
                   wanted=("auroc", "auprc", "f1")) -> dict:
    """Metric dict on a normalized dataset; percentages for every entry."""
    started = time.perf_counter()
    probs = predict_probs(model, dataset)
    out: dict = {}
    if model.n_classes == 2:
        scores = probs[:, 1]
        if "auroc" in wanted:
            out["auroc"] = 100.0 * auroc(scores, dataset.labels)
        if "auprc" in wanted:
            out["auprc"] = 100.0 * auprc(scores, dataset.labels)
    if "f1" in wanted:
        report = f1_scores(dataset.labels, probs.argmax(axis=1), model.n_classes)
        out["f1_per_class"] = report.per_class.tolist()
        out["f1_weighted"] = report.weighted
        out["f1_minority"] = report.weighted_minority
    out["eval_seconds"] = time.perf_counter() - started
    return out
