"""Self-supervised pre-training: predict the observation `shift` steps ahead.

The encoder runs over the sequence and a single projection matrix maps each
hidden state back to variable space; the squared error is averaged over
observed target entries only (so gaps neither pull predictions toward a fill
value nor contribute gradient), or optionally summed as an unmasked L1 over
the view-filled targets. shift = 0 degenerates to plain reconstruction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoders import ConfigError, EncoderConfig, InputView, encode, init_encoder_params

PROJ = "proj.W"


class NoObservedTargetsError(ValueError):
    """Every target entry in the window was missing; the masked loss is undefined."""


@dataclass
class PretrainConfig:
    shift: int = 1                 # steps ahead; 0 reconstructs the input
    loss: str = "masked_mse"       # "masked_mse" | "l1"
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 100

    def __post_init__(self):
        if self.shift < 0:
            raise ConfigError(f"shift must be >= 0, got {self.shift}")
        if self.loss not in ("masked_mse", "l1"):
            raise ConfigError(f"unknown loss {self.loss!r}")


def init_pretrain_params(config: EncoderConfig, rng: np.random.Generator) -> dict:
    params = init_encoder_params(config, rng)
    params[PROJ] = Tensor(ad.glorot_uniform(rng, config.hidden, config.n_variables),
                          requires_grad=True)
    return params


def forward_predictions(view: InputView, params: dict, config: EncoderConfig,
                        shift: int, idx: np.ndarray | None = None,
                        train: bool = False, rng=None) -> Tensor:
    """Predictions for steps 1..T-shift, time-major (T-shift, B, D)."""
    t_count = view.seq_len
    if shift >= t_count:
        raise ConfigError(f"shift {shift} must be smaller than the sequence length {t_count}")
    states, _ = encode(view, params, config, idx=idx, train=train, rng=rng)
    used = states[: t_count - shift]
    stacked = ad.stack(used, axis=0)                       # (T-shift, B, H)
    k, b, h = stacked.shape
    flat = ad.matmul(ad.reshape(stacked, (k * b, h)), params[PROJ])
    return ad.reshape(flat, (k, b, params[PROJ].shape[1]))


def shifted_targets(view: InputView, shift: int, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(targets, mask), both time-major (T-shift, B, D), aligned with predictions."""
    targets = view.filled[idx, shift:].transpose(1, 0, 2)
    mask = view.mask[idx, shift:].transpose(1, 0, 2)
    return np.ascontiguousarray(targets), np.ascontiguousarray(mask)


def masked_mse(preds: Tensor, targets: np.ndarray, target_mask: np.ndarray) -> Tensor:
    """Squared error summed over observed target entries, divided by their count."""
    denominator = float(target_mask.sum())
    if denominator == 0.0:
        raise NoObservedTargetsError("no observed target entries in the window")
    total = ad.masked_sum(ad.square(ad.sub(preds, targets)), target_mask)
    return ad.mul(total, 1.0 / denominator)


def l1_loss(preds: Tensor, targets: np.ndarray, valid: np.ndarray | None = None) -> Tensor:
    """Sum of absolute errors over all predicted steps and variables.

    `valid` optionally restricts the sum (e.g. to steps inside each sample's
    length). The subgradient at a zero difference is 0.
    """
    diff = ad.absolute(ad.sub(preds, targets))
    if valid is None:
        return ad.tensor_sum(diff)
    return ad.masked_sum(diff, valid)


def _valid_steps(view: InputView, shift: int, idx: np.ndarray) -> np.ndarray:
    """1 where step t+shift is inside the sample, time-major (T-shift, B, D)."""
    t_count = view.seq_len
    steps = np.arange(shift, t_count)[:, None]             # target step index
    ok = (steps < view.lengths[idx][None, :]).astype(np.float64)
    return np.repeat(ok[:, :, None], view.mask.shape[2], axis=2)


def batch_loss(view: InputView, params: dict, config: EncoderConfig,
               cfg: PretrainConfig, idx: np.ndarray,
               train: bool = False, rng=None) -> Tensor:
    preds = forward_predictions(view, params, config, cfg.shift, idx, train=train, rng=rng)
    targets, target_mask = shifted_targets(view, cfg.shift, idx)
    if cfg.loss == "masked_mse":
        return masked_mse(preds, targets, target_mask)
    return l1_loss(preds, targets, _valid_steps(view, cfg.shift, idx))


def pretrain(view: InputView, enc_config: EncoderConfig, cfg: PretrainConfig,
             seed: int) -> tuple[dict, list]:
    """Fit encoder + projection on the training view; returns (params, loss curve).

    Deterministic given the seed. Batches whose target window is entirely
    unobserved are skipped; an epoch where that happens to every batch aborts
    with a data diagnostic.
    """
    if view.seq_len and cfg.shift >= int(view.lengths.min()):
        raise ConfigError(
            f"shift {cfg.shift} is not smaller than every sequence length "
            f"(min is {int(view.lengths.min())})")
    rng = np.random.default_rng(seed)
    params = init_pretrain_params(enc_config, rng)
    opt = ad.AdamState(cfg.learning_rate)
    n = view.n_samples
    curve: list[float] = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            ad.zero_grads(params)
            try:
                loss = batch_loss(view, params, enc_config, cfg, idx, train=True, rng=rng)
            except NoObservedTargetsError:
                continue
            ad.backward(loss)
            ad.adam_step(params, opt)
            losses.append(loss.item())
        if not losses:
            raise NoObservedTargetsError(
                "every batch in an epoch had zero observed targets; "
                "the data is too sparse for this shift")
        curve.append(float(np.mean(losses)))
    return params, curve
