"""Synthetic two-variable benchmark: noisy cosine + Bernoulli indicator.

Each sample draws latent factors (offset, cosine period, Bernoulli rate);
the label is a joint threshold on period and rate, with thresholds expressed
as quantiles of the factor distributions so any minority rate is reachable.
Missingness is injected completely at random, entrywise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import TimeSeriesDataset


class ParameterError(ValueError):
    pass


class GenerationError(RuntimeError):
    pass


GENERATION_BUDGET = 1_000_000


@dataclass
class LatentFactors:
    offset: float     # uniform [0, 1]
    period: float     # uniform [period_min, period_max]
    bern_prob: float  # uniform [0, 1]


@dataclass
class SyntheticParams:
    n_samples: int = 2000
    seq_len: int = 100
    period_min: float = 5.0
    period_max: float = 20.0
    noise_std: float = 0.1
    missing_rate: float = 0.0
    imbalance: tuple[int, int] = (1, 1)  # minority : majority
    seed: int = 0
    # quantile thresholds (q_period, q_prob); None -> sqrt(r) each, where r
    # is the minority fraction, so the two factors stay equally informative
    thresholds: tuple[float, float] | None = None

    def __post_init__(self):
        if not (0 < self.period_min < self.period_max):
            raise ParameterError(f"need 0 < period_min < period_max, got {self.period_min}, {self.period_max}")
        if not (0.0 <= self.missing_rate < 1.0):
            raise ParameterError(f"missing_rate must be in [0, 1), got {self.missing_rate}")
        if self.noise_std < 0:
            raise ParameterError(f"noise_std must be >= 0, got {self.noise_std}")
        a, b = self.imbalance
        if a <= 0 or b <= 0:
            raise ParameterError(f"imbalance parts must be positive, got {self.imbalance}")

    @property
    def minority_fraction(self) -> float:
        a, b = self.imbalance
        return a / (a + b)

    def class_quota(self) -> tuple[int, int]:
        """(n_minority, n_majority); floor for the minority, remainder to the majority."""
        n_min = int(self.n_samples * self.minority_fraction)
        if n_min < 1:
            raise ParameterError("minority quota is empty; raise n_samples or the ratio")
        return n_min, self.n_samples - n_min

    def label_thresholds(self) -> tuple[float, float]:
        if self.thresholds is not None:
            return self.thresholds
        q = math.sqrt(self.minority_fraction)
        return (q, q)


def parse_ratio(text: str) -> tuple[int, int]:
    """'1:20' -> (1, 20), minority first."""
    left, _, right = text.partition(":")
    try:
        return (int(left), int(right))
    except ValueError:
        raise ParameterError(f"ratio must look like '1:20', got {text!r}")


def sample_factors(params: SyntheticParams, rng: np.random.Generator) -> LatentFactors:
    return LatentFactors(
        offset=rng.uniform(0.0, 1.0),
        period=rng.uniform(params.period_min, params.period_max),
        bern_prob=rng.uniform(0.0, 1.0),
    )


def gen_series(factors: LatentFactors, seq_len: int, noise_std: float,
               rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """One sample: x(t) = 1 + offset + cos(2*pi*t/period) + noise, b(t) ~ Bernoulli."""
    if noise_std < 0:
        raise ParameterError(f"noise_std must be >= 0, got {noise_std}")
    t = np.arange(seq_len, dtype=np.float64)
    x = 1.0 + factors.offset + np.cos(2.0 * np.pi * t / factors.period)
    x += rng.normal(0.0, noise_std, size=seq_len) if noise_std > 0 else 0.0
    b = (rng.random(seq_len) < factors.bern_prob).astype(np.float64)
    return x, b


def label(factors: LatentFactors, params: SyntheticParams) -> int:
    """1 iff period below its q_period-quantile AND rate above its (1-q_prob)-quantile."""
    q_period, q_prob = params.label_thresholds()
    period_cut = params.period_min + q_period * (params.period_max - params.period_min)
    prob_cut = 1.0 - q_prob
    return int(factors.period <= period_cut and factors.bern_prob >= prob_cut)


def inject_missing(values: np.ndarray, missing_rate: float,
                   rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Drop each entry independently with probability missing_rate (MCAR).

    Returns (values with NaN at dropped entries, observation mask).
    """
    if not (0.0 <= missing_rate < 1.0):
        raise ParameterError(f"missing_rate must be in [0, 1), got {missing_rate}")
    mask = (rng.random(values.shape) >= missing_rate).astype(np.float64)
    out = values.copy()
    out[mask == 0.0] = np.nan
    return out, mask


def build_benchmark(params: SyntheticParams, return_factors: bool = False):
    """Dataset with exact class counts: draw factors, label, keep until quotas fill."""
    rng = np.random.default_rng(params.seed)
    n_min, n_maj = params.class_quota()
    want = [n_maj, n_min]  # indexed by label
    xs, bs, labels, factor_log = [], [], [], []
    draws = 0
    while want[0] > 0 or want[1] > 0:
        if draws >= GENERATION_BUDGET:
            raise GenerationError(
                f"class quota unreachable within {GENERATION_BUDGET} draws; still need {want}")
        draws += 1
        factors = sample_factors(params, rng)
        y = label(factors, params)
        if want[y] == 0:
            continue
        want[y] -= 1
        x, b = gen_series(factors, params.seq_len, params.noise_std, rng)
        xs.append(x)
        bs.append(b)
        labels.append(y)
        factor_log.append(factors)

    values = np.stack([np.stack(xs, axis=0), np.stack(bs, axis=0)], axis=2)  # (N, T, 2)
    values, mask = inject_missing(values, params.missing_rate, rng)
    n = params.n_samples
    times = np.tile(np.arange(params.seq_len, dtype=np.float64), (n, 1))
    dataset = TimeSeriesDataset(
        values=values,
        mask=mask,
        times=times,
        lengths=np.full(n, params.seq_len, dtype=np.int64),
        static=np.zeros((n, 0)),
        labels=np.asarray(labels, dtype=np.int64),
        variable_names=["x", "b"],
        n_classes=2,
        ids=[f"s{i:05d}" for i in range(n)],
    )
    if return_factors:
        return dataset, factor_log
    return dataset


def build_quartile_fixture(params: SyntheticParams) -> TimeSeriesDataset:
    """Invented 4-class fixture (not part of the benchmark grid): labels the
    same series by which quartile of [period_min, period_max] the period
    falls in. Only used to exercise multiclass metric and weighting paths.
    """
    rng = np.random.default_rng(params.seed)
    span = params.period_max - params.period_min
    xs, bs, labels = [], [], []
    for _ in range(params.n_samples):
        factors = sample_factors(params, rng)
        x, b = gen_series(factors, params.seq_len, params.noise_std, rng)
        q = int((factors.period - params.period_min) / span * 4)
        xs.append(x)
        bs.append(b)
        labels.append(min(q, 3))
    values = np.stack([np.stack(xs, axis=0), np.stack(bs, axis=0)], axis=2)
    values, mask = inject_missing(values, params.missing_rate, rng)
    n = params.n_samples
    return TimeSeriesDataset(
        values=values,
        mask=mask,
        times=np.tile(np.arange(params.seq_len, dtype=np.float64), (n, 1)),
        lengths=np.full(n, params.seq_len, dtype=np.int64),
        static=np.zeros((n, 0)),
        labels=np.asarray(labels, dtype=np.int64),
        variable_names=["x", "b"],
        n_classes=4,
        ids=[f"q{i:05d}" for i in range(n)],
    )
