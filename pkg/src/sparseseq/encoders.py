"""Recurrent encoders over sparse sequences.

Two cell families: a plain GRU fed by one of the imputation views (missing
flags, mean fill, forward fill, or the value/mask/interval concatenation),
and a decay GRU that keeps raw values, masks, and inter-observation
intervals, pulling unobserved inputs from their last value toward the
empirical mean with trainable exponential rates while decaying the hidden
state the same way.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import NormStats, TimeSeriesDataset, compute_deltas

SCHEMES = ("flags", "mean", "forward", "simple", "grud")


class ConfigError(ValueError):
    pass


@dataclass
class EncoderConfig:
    arch: str                  # "gru" | "grud"
    scheme: str                # input view; "grud" iff arch is "grud"
    n_variables: int
    hidden: int
    dropout: float = 0.0             # on the encoder output fed to the classifier
    recurrent_dropout: float = 0.0   # per-sequence mask on the hidden-to-hidden input
    per_position_mean: bool = False

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; pick one of {SCHEMES}")
        if (self.arch == "grud") != (self.scheme == "grud"):
            raise ConfigError(f"arch {self.arch!r} is incompatible with scheme {self.scheme!r}")
        if self.arch not in ("gru", "grud"):
            raise ConfigError(f"unknown arch {self.arch!r}")

    @property
    def input_width(self) -> int:
        d = self.n_variables
        return {"flags": 2 * d, "mean": d, "forward": d, "simple": 3 * d, "grud": 2 * d}[self.scheme]

    def to_obj(self) -> dict:
        return {
            "arch": self.arch, "scheme": self.scheme, "n_variables": self.n_variables,
            "hidden": self.hidden, "dropout": self.dropout,
            "recurrent_dropout": self.recurrent_dropout,
            "per_position_mean": self.per_position_mean,
        }

    @staticmethod
    def from_obj(obj: dict) -> "EncoderConfig":
        return EncoderConfig(**obj)


# ---------------------------------------------------------------------------
# input views
# ---------------------------------------------------------------------------

@dataclass
class InputView:
    """Model-ready arrays for one (normalized) dataset under one scheme.

    `inputs` is the (N, T, I) matrix the plain GRU consumes; the decay GRU
    instead reads the raw channels (values/mask/deltas/last_before) plus the
    model-space means. `filled` is the fully-defined value channel used as
    the reconstruction target by the unmasked L1 loss.
    """

    scheme: str
    mask: np.ndarray                 # (N, T, D)
    lengths: np.ndarray              # (N,)
    static: np.ndarray               # (N, S)
    labels: np.ndarray               # (N,)
    filled: np.ndarray               # (N, T, D)
    inputs: np.ndarray | None = None
    values: np.ndarray | None = None        # (N, T, D) zero-filled raw values
    deltas: np.ndarray | None = None        # (N, T, D)
    last_before: np.ndarray | None = None   # (N, T, D) last observation strictly before t
    means: np.ndarray | None = None         # (D,) or (T, D) model-space means

    @property
    def n_samples(self) -> int:
        return self.mask.shape[0]

    @property
    def seq_len(self) -> int:
        return self.mask.shape[1]


def _mean_at(means: np.ndarray, t: int) -> np.ndarray:
    return means[t] if means.ndim == 2 else means


def impute_view(dataset: TimeSeriesDataset, stats: NormStats, scheme: str) -> InputView:
    """Turn a normalized dataset into the inputs one scheme expects.

    flags: missing entries filled with the mean (0 in normalized space) and a
    1-where-missing flag per variable. mean: mean fill only. forward: last
    observed value, mean before the first observation. simple: mean-filled
    values stacked with the mask and the inter-observation intervals. grud:
    raw channels passed through for in-cell handling.
    """
    if scheme not in SCHEMES:
        raise ConfigError(f"unknown scheme {scheme!r}; pick one of {SCHEMES}")
    mask = dataset.mask
    observed = mask == 1.0
    means = stats.model_space_means(dataset.seq_len)
    mean_grid = np.broadcast_to(means, dataset.values.shape)
    mean_fill = np.where(observed, dataset.values, mean_grid)

    if scheme == "flags":
        view_inputs = np.concatenate([mean_fill, 1.0 - mask], axis=2)
        return InputView(scheme, mask, dataset.lengths, dataset.static, dataset.labels,
                         filled=mean_fill, inputs=view_inputs)
    if scheme == "mean":
        return InputView(scheme, mask, dataset.lengths, dataset.static, dataset.labels,
                         filled=mean_fill, inputs=mean_fill)

    if scheme == "forward":
        ffill = np.empty_like(mean_fill)
        carried = np.tile(_mean_at(means, 0), (mask.shape[0], 1))
        for t in range(dataset.seq_len):
            carried = np.where(observed[:, t], dataset.values[:, t], carried)
            ffill[:, t] = carried
        return InputView(scheme, mask, dataset.lengths, dataset.static, dataset.labels,
                         filled=ffill, inputs=ffill)

    deltas = compute_deltas(mask, dataset.times)
    if scheme == "simple":
        view_inputs = np.concatenate([mean_fill, mask, deltas], axis=2)
        return InputView(scheme, mask, dataset.lengths, dataset.static, dataset.labels,
                         filled=mean_fill, inputs=view_inputs)

    # grud: last observation strictly before t, starting from the step-0 mean
    last_before = np.empty_like(mean_fill)
    carried = np.tile(_mean_at(means, 0), (mask.shape[0], 1))
    for t in range(dataset.seq_len):
        last_before[:, t] = carried
        carried = np.where(observed[:, t], dataset.values[:, t], carried)
    return InputView(scheme, mask, dataset.lengths, dataset.static, dataset.labels,
                     filled=mean_fill, values=np.nan_to_num(dataset.values),
                     deltas=deltas, last_before=last_before, means=means)


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

ENC = "enc."
DECAY_INIT_SCALE = 0.01  # keeps decay rates small but trainable at the start


def init_encoder_params(config: EncoderConfig, rng: np.random.Generator) -> dict:
    """Glorot-uniform gate matrices, zero biases, small positive decay rates."""
    i, h, d = config.input_width, config.hidden, config.n_variables
    params: dict = {}
    for gate in ("z", "r", "c"):
        params[f"{ENC}W_{gate}"] = Tensor(ad.glorot_uniform(rng, i, h), requires_grad=True)
        params[f"{ENC}U_{gate}"] = Tensor(ad.glorot_uniform(rng, h, h), requires_grad=True)
        params[f"{ENC}b_{gate}"] = Tensor(np.zeros(h), requires_grad=True)
    if config.arch == "grud":
        params[f"{ENC}w_dx"] = Tensor(rng.uniform(0.0, DECAY_INIT_SCALE, size=d), requires_grad=True)
        params[f"{ENC}b_dx"] = Tensor(np.zeros(d), requires_grad=True)
        params[f"{ENC}W_dh"] = Tensor(rng.uniform(0.0, DECAY_INIT_SCALE, size=(d, h)), requires_grad=True)
        params[f"{ENC}b_dh"] = Tensor(np.zeros(h), requires_grad=True)
    return params


def encoder_param_names(params: dict) -> list:
    return [name for name in params if name.startswith(ENC)]


# ---------------------------------------------------------------------------
# cells
# ---------------------------------------------------------------------------

def gru_step(params: dict, h_prev: Tensor, x_t: Tensor, h_gate: Tensor | None = None) -> Tensor:
    """h = (1 - z) * h_prev + z * candidate.

    `h_gate` is the hidden state the gates see; it differs from `h_prev` only
    under per-sequence recurrent dropout.
    """
    hg = h_prev if h_gate is None else h_gate
    z = ad.sigmoid(ad.affine(params[f"{ENC}b_z"], (x_t, params[f"{ENC}W_z"]), (hg, params[f"{ENC}U_z"])))
    r = ad.sigmoid(ad.affine(params[f"{ENC}b_r"], (x_t, params[f"{ENC}W_r"]), (hg, params[f"{ENC}U_r"])))
    cand = ad.tanh(ad.affine(params[f"{ENC}b_c"], (x_t, params[f"{ENC}W_c"]),
                             (ad.mul(r, hg), params[f"{ENC}U_c"])))
    return ad.add(h_prev, ad.mul(z, ad.sub(cand, h_prev)))


def gru_d_step(params: dict, h_prev: Tensor, x_t: np.ndarray, m_t: np.ndarray,
               delta_t: np.ndarray, x_last: np.ndarray, x_mean: np.ndarray,
               rec_mask: Tensor | None = None) -> tuple[Tensor, np.ndarray]:
    """One decay-GRU step; returns (h_t, updated last-observed values).

    Unobserved inputs decay from their last value toward the empirical mean
    with per-variable rates; the hidden state decays toward zero before the
    gates run on [imputed values; mask].
    """
    if np.any(delta_t < 0):
        raise ad.ContractError("negative time interval passed to the decay cell")
    delta = Tensor(delta_t)
    gamma_x = ad.exp_neg_relu(ad.add(ad.mul(delta, params[f"{ENC}w_dx"]),
                                     params[f"{ENC}b_dx"]))
    # m*x + (1-m)*(gamma*x_last + (1-gamma)*mean); the mask folds into the
    # lerp endpoints since observed entries take x_t verbatim either way
    gap = 1.0 - m_t
    x_hat = ad.add(ad.lerp(gamma_x, Tensor(gap * x_last),
                           Tensor(gap * np.broadcast_to(x_mean, x_last.shape))),
                   Tensor(m_t * x_t))
    gamma_h = ad.exp_neg_relu(ad.affine(params[f"{ENC}b_dh"], (delta, params[f"{ENC}W_dh"])))
    h_dec = ad.mul(gamma_h, h_prev)
    gate_in = ad.concat([x_hat, Tensor(m_t)], axis=1)
    h_gate = h_dec if rec_mask is None else ad.mul(h_dec, rec_mask)
    h_new = gru_step(params, h_dec, gate_in, h_gate)
    x_last_new = m_t * x_t + (1.0 - m_t) * x_last
    return h_new, x_last_new


# ---------------------------------------------------------------------------
# sequence encoding
# ---------------------------------------------------------------------------

def dropout_mask(rng: np.random.Generator, shape, rate: float) -> np.ndarray:
    """Inverted-dropout multiplier: 0 with probability `rate`, else 1/(1-rate)."""
    keep = 1.0 - rate
    return (rng.random(shape) < keep).astype(np.float64) / keep


def encode(view: InputView, params: dict, config: EncoderConfig,
           idx: np.ndarray | None = None, train: bool = False,
           rng: np.random.Generator | None = None):
    """Run the recurrence over a batch; returns (per-step states, final state).

    The final state is read at each sample's last valid step (zero vector for
    empty samples). Recurrent dropout draws one mask per sequence and is only
    active in training mode.
    """
    if idx is None:
        idx = np.arange(view.n_samples)
    idx = np.asarray(idx, dtype=np.int64)
    batch = idx.size
    t_count = view.seq_len
    hidden = config.hidden
    rec_mask = None
    if train and config.recurrent_dropout > 0.0:
        if rng is None:
            raise ConfigError("recurrent dropout needs an RNG in training mode")
        rec_mask = Tensor(dropout_mask(rng, (batch, hidden), config.recurrent_dropout))

    h = Tensor(np.zeros((batch, hidden)))
    states: list[Tensor] = []
    if config.scheme == "grud":
        values = view.values[idx]
        mask = view.mask[idx]
        deltas = view.deltas[idx]
        x_last = view.last_before[idx, 0].copy()
        means = view.means
        for t in range(t_count):
            h, x_last = gru_d_step(
                params, h, values[:, t], mask[:, t], deltas[:, t], x_last,
                _mean_at(means, t), rec_mask)
            states.append(h)
    else:
        inputs = view.inputs[idx]
        for t in range(t_count):
            x_t = Tensor(np.ascontiguousarray(inputs[:, t]))
            h_gate = h if rec_mask is None else ad.mul(h, rec_mask)
            h = gru_step(params, h, x_t, h_gate)
            states.append(h)

    lengths = view.lengths[idx]
    if t_count == 0:
        final = Tensor(np.zeros((batch, hidden)))
    elif np.all(lengths == t_count):
        final = states[-1]
    else:
        stacked = ad.stack(states, axis=0)
        final = ad.select_time(stacked, np.maximum(lengths - 1, 0))
        if np.any(lengths == 0):
            final = ad.mul(final, (lengths > 0).astype(np.float64)[:, None])
    return states, final
