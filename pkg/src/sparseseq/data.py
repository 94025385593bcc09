"""Dataset container, JSONL file format, time-grid aggregation, normalization
statistics, missingness features (mask, inter-observation intervals),
stratified splitting, and class resampling."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np


class SchemaError(ValueError):
    pass


class ValidationError(ValueError):
    pass


class StatsError(ValueError):
    pass


class SplitError(ValueError):
    pass


class ParameterError(ValueError):
    pass


@dataclass
class TimeSeriesDataset:
    """N samples x T steps x D variables, NaN where unobserved.

    `mask[i, t, d] == 1` iff the entry is observed; `times` are hours;
    entries past `lengths[i]` are padding and never read.
    """

    values: np.ndarray       # (N, T, D) float64, NaN at unobserved entries
    mask: np.ndarray         # (N, T, D) float64 in {0, 1}
    times: np.ndarray        # (N, T) float64
    lengths: np.ndarray      # (N,) int64
    static: np.ndarray       # (N, S) float64
    labels: np.ndarray       # (N,) int64 in 0..n_classes-1
    variable_names: list
    n_classes: int
    ids: list

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def seq_len(self) -> int:
        return self.values.shape[1]

    @property
    def n_variables(self) -> int:
        return self.values.shape[2]

    @property
    def n_static(self) -> int:
        return self.static.shape[1]

    def validate(self) -> None:
        observed = self.mask == 1.0
        if not np.all(np.isfinite(self.values[observed])):
            raise ValidationError("observed entries must be finite")
        for i in range(self.n_samples):
            ln = int(self.lengths[i])
            t = self.times[i, :ln]
            if ln > 1 and not np.all(np.diff(t) > 0):
                raise ValidationError(f"times not strictly increasing in sample {self.ids[i]}")
        if self.n_samples and not (
            (self.labels >= 0).all() and (self.labels < self.n_classes).all()
        ):
            raise ValidationError("labels outside 0..n_classes-1")

    def take(self, idx) -> "TimeSeriesDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return TimeSeriesDataset(
            values=self.values[idx],
            mask=self.mask[idx],
            times=self.times[idx],
            lengths=self.lengths[idx],
            static=self.static[idx],
            labels=self.labels[idx],
            variable_names=list(self.variable_names),
            n_classes=self.n_classes,
            ids=[self.ids[i] for i in idx],
        )

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)


# ---------------------------------------------------------------------------
# JSON Lines on disk: header line + one record per sample; null marks a
# missing value, the mask is derived on load so the two cannot desynchronize.
# ---------------------------------------------------------------------------

def save_dataset(dataset: TimeSeriesDataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        header = {
            "version": 1,
            "variables": list(dataset.variable_names),
            "n_static": dataset.n_static,
            "n_classes": dataset.n_classes,
        }
        fh.write(json.dumps(header) + "\n")
        for i in range(dataset.n_samples):
            ln = int(dataset.lengths[i])
            rows = []
            for t in range(ln):
                rows.append([
                    (float(v) if m == 1.0 else None)
                    for v, m in zip(dataset.values[i, t], dataset.mask[i, t])
                ])
            rec = {
                "id": dataset.ids[i],
                "times": [float(x) for x in dataset.times[i, :ln]],
                "values": rows,
                "static": [float(x) for x in dataset.static[i]],
                "label": int(dataset.labels[i]),
            }
            fh.write(json.dumps(rec) + "\n")


def load_dataset(path) -> TimeSeriesDataset:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise SchemaError("line 1: missing header")
    header = _parse_line(lines[0], 1, dict, ("version", "variables", "n_static", "n_classes"))
    n_vars = len(header["variables"])
    n_static = int(header["n_static"])
    records = []
    for ln_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        rec = _parse_line(line, ln_no, dict, ("id", "times", "values", "static", "label"))
        if len(rec["times"]) != len(rec["values"]):
            raise SchemaError(f"line {ln_no}: times and values lengths differ")
        for row in rec["values"]:
            if len(row) != n_vars:
                raise SchemaError(f"line {ln_no}: expected {n_vars} variables per step")
        if len(rec["static"]) != n_static:
            raise SchemaError(f"line {ln_no}: expected {n_static} static features")
        records.append(rec)

    n = len(records)
    t_max = max((len(r["times"]) for r in records), default=0)
    values = np.full((n, t_max, n_vars), np.nan)
    mask = np.zeros((n, t_max, n_vars))
    times = np.zeros((n, t_max))
    lengths = np.zeros(n, dtype=np.int64)
    static = np.zeros((n, n_static))
    labels = np.zeros(n, dtype=np.int64)
    ids = []
    for i, rec in enumerate(records):
        ln = len(rec["times"])
        lengths[i] = ln
        times[i, :ln] = rec["times"]
        if ln < t_max:  # deterministic monotone padding, never read
            last = rec["times"][-1] if ln else 0.0
            times[i, ln:] = last + np.arange(1, t_max - ln + 1)
        for t, row in enumerate(rec["values"]):
            for d, v in enumerate(row):
                if v is not None:
                    values[i, t, d] = v
                    mask[i, t, d] = 1.0
        static[i] = rec["static"]
        labels[i] = rec["label"]
        ids.append(rec["id"])
    dataset = TimeSeriesDataset(
        values=values, mask=mask, times=times, lengths=lengths, static=static,
        labels=labels, variable_names=list(header["variables"]),
        n_classes=int(header["n_classes"]), ids=ids,
    )
    dataset.validate()
    return dataset


def _parse_line(line: str, ln_no: int, kind, keys):
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as err:
        raise SchemaError(f"line {ln_no}: {err.msg}") from err
    if not isinstance(obj, kind):
        raise SchemaError(f"line {ln_no}: expected a JSON object")
    for key in keys:
        if key not in obj:
            raise SchemaError(f"line {ln_no}: missing key {key!r}")
    return obj


# ---------------------------------------------------------------------------
# event-grid aggregation (irregular observations -> fixed-resolution bins)
# ---------------------------------------------------------------------------

def aggregate(events, resolution: float, variable_names) -> tuple[np.ndarray, np.ndarray]:
    """Average events of the same variable that fall in one resolution bin.

    `events` is an iterable of (time, variable, value) with the variable given
    by name or index. Bin timestamp is the bin start; bins with no event for a
    variable stay missing (NaN). Returns (times (T',), values (T', D)).
    """
    if resolution <= 0:
        raise ParameterError(f"resolution must be > 0, got {resolution}")
    var_index = {name: d for d, name in enumerate(variable_names)}
    sums: dict = {}
    counts: dict = {}
    for time, var, value in events:
        d = var_index[var] if not isinstance(var, (int, np.integer)) else int(var)
        # small forward slack so times sitting on a boundary don't fall back a bin
        idx = math.floor(time / resolution + 1e-9)
        key = (idx, d)
        sums[key] = sums.get(key, 0.0) + float(value)
        counts[key] = counts.get(key, 0) + 1
    if not sums:
        return np.zeros(0), np.full((0, len(variable_names)), np.nan)
    bins = sorted({idx for idx, _ in sums})
    row = {idx: i for i, idx in enumerate(bins)}
    values = np.full((len(bins), len(variable_names)), np.nan)
    for (idx, d), s in sums.items():
        values[row[idx], d] = s / counts[(idx, d)]
    # snap idx*resolution to 10 decimals: cancels the one-ulp drift of float
    # multiplication so decimal resolutions yield canonical bin stamps (0.6,
    # not 0.6000000000000001)
    times = np.array([round(idx * resolution, 10) for idx in bins])
    return times, values


# ---------------------------------------------------------------------------
# normalization statistics
# ---------------------------------------------------------------------------

@dataclass
class NormStats:
    mean: np.ndarray               # (D,) over observed training entries
    std: np.ndarray                # (D,) population std, 1.0 where constant
    constant: np.ndarray           # (D,) bool
    position_mean: np.ndarray | None = None  # (T, D) optional per-step means

    def model_space_means(self, seq_len: int | None = None) -> np.ndarray:
        """Empirical means mapped into normalized space: zeros globally, or the
        per-position means z-scored when they were requested."""
        if self.position_mean is None:
            return np.zeros_like(self.mean)
        out = (self.position_mean - self.mean) / self.std
        if seq_len is not None and out.shape[0] != seq_len:
            raise ParameterError(
                f"position means cover {out.shape[0]} steps, dataset has {seq_len}")
        return out

    def to_obj(self) -> dict:
        obj = {
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "constant": [bool(c) for c in self.constant],
        }
        if self.position_mean is not None:
            obj["position_mean"] = self.position_mean.tolist()
        return obj

    @staticmethod
    def from_obj(obj: dict) -> "NormStats":
        pos = obj.get("position_mean")
        return NormStats(
            mean=np.asarray(obj["mean"], dtype=np.float64),
            std=np.asarray(obj["std"], dtype=np.float64),
            constant=np.asarray(obj["constant"], dtype=bool),
            position_mean=None if pos is None else np.asarray(pos, dtype=np.float64),
        )


def compute_stats(train: TimeSeriesDataset, per_position: bool = False) -> NormStats:
    """Mean/std over observed training entries only; population std.

    Constant variables get std clamped to 1 and are flagged. With
    `per_position`, also a mean per (step, variable) falling back to the
    global variable mean at positions nobody observed.
    """
    d_count = train.n_variables
    mean = np.zeros(d_count)
    std = np.ones(d_count)
    constant = np.zeros(d_count, dtype=bool)
    obs = train.mask == 1.0
    for d in range(d_count):
        vals = train.values[:, :, d][obs[:, :, d]]
        if vals.size == 0:
            raise StatsError(f"variable {train.variable_names[d]!r} is never observed in the training split")
        mean[d] = vals.mean()
        sd = vals.std()  # population
        if sd == 0.0:
            constant[d] = True
            std[d] = 1.0
        else:
            std[d] = sd
    position_mean = None
    if per_position:
        t_count = train.seq_len
        position_mean = np.tile(mean, (t_count, 1))
        for t in range(t_count):
            for d in range(d_count):
                vals = train.values[:, t, d][obs[:, t, d]]
                if vals.size:
                    position_mean[t, d] = vals.mean()
    return NormStats(mean=mean, std=std, constant=constant, position_mean=position_mean)


def normalize(dataset: TimeSeriesDataset, stats: NormStats) -> TimeSeriesDataset:
    """Z-score observed entries per variable; unobserved entries stay NaN.

    Not idempotent under a fixed `stats`: applying the same stats twice shifts
    the data again. Recompute stats if you need a second pass.
    """
    values = (dataset.values - stats.mean) / stats.std
    values[dataset.mask == 0.0] = np.nan
    return replace(dataset, values=values)


# ---------------------------------------------------------------------------
# missingness features
# ---------------------------------------------------------------------------

def compute_deltas(mask: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Hours since each variable was last observed.

    delta[t, d] = gap(t) + delta[t-1, d] if the variable was missing at t-1,
    else gap(t); delta[0, d] = 0.
    """
    n, t_count, d_count = mask.shape
    deltas = np.zeros((n, t_count, d_count))
    for t in range(1, t_count):
        gap = (times[:, t] - times[:, t - 1])[:, None]
        deltas[:, t, :] = gap + deltas[:, t - 1, :] * (mask[:, t - 1, :] == 0.0)
    return deltas


# ---------------------------------------------------------------------------
# stratified splitting and resampling
# ---------------------------------------------------------------------------

def _largest_remainder(n: int, fractions) -> list:
    exact = [f * n for f in fractions]
    base = [int(math.floor(e)) for e in exact]
    short = n - sum(base)
    order = sorted(range(len(fractions)), key=lambda i: (-(exact[i] - base[i]), i))
    for i in order[:short]:
        base[i] += 1
    return base


def split(dataset: TimeSeriesDataset, fractions=(0.6, 0.2, 0.2), seed: int = 0):
    """Stratified (train, val, test); largest-remainder rounding per class."""
    if abs(sum(fractions) - 1.0) > 1e-12:
        raise SplitError(f"fractions must sum to 1, got {fractions}")
    rng = np.random.default_rng(seed)
    parts: list = [[] for _ in fractions]
    for c in range(dataset.n_classes):
        idx = np.flatnonzero(dataset.labels == c)
        if idx.size < 3:
            raise SplitError(f"class {c} has {idx.size} samples; need at least 3 to split")
        idx = rng.permutation(idx)
        counts = _largest_remainder(idx.size, fractions)
        start = 0
        for part, cnt in zip(parts, counts):
            part.extend(idx[start:start + cnt])
            start += cnt
    return tuple(dataset.take(np.sort(np.asarray(p, dtype=np.int64))) for p in parts)


def resample(train: TimeSeriesDataset, mode: str, seed: int = 0,
             fraction: float | None = None) -> TimeSeriesDataset:
    """Rebalance the training split only.

    oversample: duplicate every smaller class (with replacement) up to the
    majority count. undersample: cut the larger classes down (without
    replacement) to the minority count. oversample_to: duplicate minority
    classes until together they make up `fraction` of the new total, leaving
    the majority untouched.
    """
    rng = np.random.default_rng(seed)
    counts = train.class_counts()
    if (counts == 0).any():
        raise ParameterError("every class needs at least one sample to resample")
    if mode == "oversample":
        target = counts.max()
        extras = []
        for c in range(train.n_classes):
            k = np.flatnonzero(train.labels == c)
            if k.size < target:
                extras.append(rng.choice(k, size=target - k.size, replace=True))
        idx = np.concatenate([np.arange(train.n_samples, dtype=np.int64)] + extras)
        return train.take(idx)
    if mode == "undersample":
        target = counts.min()
        chosen = []
        for c in range(train.n_classes):
            k = np.flatnonzero(train.labels == c)
            if k.size > target:
                k = np.sort(rng.choice(k, size=target, replace=False))
            chosen.append(k)
        return train.take(np.sort(np.concatenate(chosen)))
    if mode == "oversample_to":
        if fraction is None:
            raise ParameterError("oversample_to needs a fraction")
        majority = int(counts.argmax())
        n_majority = int(counts[majority])
        n_minority = int(counts.sum() - n_majority)
        current = n_minority / counts.sum()
        if not (current < fraction < 1.0):
            raise ParameterError(
                f"fraction must be in ({current:.4f}, 1), got {fraction}")
        scale = (fraction / (1.0 - fraction)) * n_majority / n_minority
        extras = []
        for c in range(train.n_classes):
            if c == majority:
                continue
            k = np.flatnonzero(train.labels == c)
            want = math.ceil(k.size * scale) - k.size
            if want > 0:
                extras.append(rng.choice(k, size=want, replace=True))
        idx = np.concatenate([np.arange(train.n_samples, dtype=np.int64)] + extras)
        return train.take(idx)
    raise ParameterError(f"unknown resampling mode {mode!r}")
