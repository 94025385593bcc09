"""Loader for ICU-challenge-style per-record text files.

Each record is a CSV of (Time, Parameter, Value) rows with HH:MM timestamps;
rows at 00:00 for the general descriptors become static features, everything
else is a time-stamped event aggregated onto a fixed-resolution grid. A
separate outcomes CSV supplies the labels.
"""

from __future__ import annotations

import csv
import io
import os

import numpy as np

from .data import SchemaError, TimeSeriesDataset, aggregate

GENERAL_DESCRIPTORS = ("Age", "Gender", "Height", "ICUType", "Weight")


def parse_record(text: str):
    """-> (record_id, static values (5,), events [(hours, parameter, value)]).

    Descriptor values of -1 mean unknown and are stored as 0. Weight rows
    after 00:00 are treated as ordinary time-series events.
    """
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["Time", "Parameter", "Value"]:
        raise SchemaError("record must start with a 'Time,Parameter,Value' header")
    record_id = None
    static = {name: 0.0 for name in GENERAL_DESCRIPTORS}
    events = []
    for row in reader:
        if not row or not row[0].strip():
            continue
        if len(row) != 3:
            raise SchemaError(f"bad record row: {row!r}")
        stamp, param, raw = (field.strip() for field in row)
        hh, _, mm = stamp.partition(":")
        hours = int(hh) + int(mm) / 60.0
        value = float(raw)
        if param == "RecordID":
            record_id = str(int(value))
            continue
        if hours == 0.0 and param in GENERAL_DESCRIPTORS:
            static[param] = value if value != -1.0 else 0.0
            continue
        events.append((hours, param, value))
    if record_id is None:
        raise SchemaError("record has no RecordID row")
    return record_id, np.array([static[n] for n in GENERAL_DESCRIPTORS]), events


def read_outcomes(path) -> dict:
    """Outcomes CSV -> {record_id: in-hospital-death label}."""
    labels = {}
    with open(path, encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "RecordID" not in reader.fieldnames \
                or "In-hospital_death" not in reader.fieldnames:
            raise SchemaError("outcomes file needs RecordID and In-hospital_death columns")
        for row in reader:
            labels[str(int(row["RecordID"]))] = int(row["In-hospital_death"])
    return labels


def load_records(record_paths, outcomes_path, resolution: float,
                 variables: list | None = None) -> TimeSeriesDataset:
    """Parse, aggregate, and assemble records into one padded dataset."""
    parsed = []
    for path in sorted(str(p) for p in record_paths):
        with open(path, encoding="utf-8") as fh:
            parsed.append(parse_record(fh.read()))
    if variables is None:
        names = set()
        for _, _, events in parsed:
            names.update(param for _, param, _ in events)
        variables = sorted(names)
    labels_by_id = read_outcomes(outcomes_path)

    grids = [aggregate(events, resolution, variables) for _, _, events in parsed]
    n = len(parsed)
    t_max = max((t.size for t, _ in grids), default=0)
    d = len(variables)
    values = np.full((n, t_max, d), np.nan)
    mask = np.zeros((n, t_max, d))
    times = np.zeros((n, t_max))
    lengths = np.zeros(n, dtype=np.int64)
    static = np.zeros((n, len(GENERAL_DESCRIPTORS)))
    labels = np.zeros(n, dtype=np.int64)
    ids = []
    for i, ((record_id, stat, _), (t, v)) in enumerate(zip(parsed, grids)):
        ln = t.size
        lengths[i] = ln
        times[i, :ln] = t
        if ln < t_max:
            last = t[-1] if ln else 0.0
            times[i, ln:] = last + np.arange(1, t_max - ln + 1)
        values[i, :ln] = v
        mask[i, :ln] = np.isfinite(v).astype(np.float64)
        static[i] = stat
        if record_id not in labels_by_id:
            raise SchemaError(f"no outcome row for record {record_id}")
        labels[i] = labels_by_id[record_id]
        ids.append(record_id)
    dataset = TimeSeriesDataset(
        values=values, mask=mask, times=times, lengths=lengths, static=static,
        labels=labels, variable_names=list(variables), n_classes=2, ids=ids,
    )
    dataset.validate()
    return dataset


def load_directory(records_dir, outcomes_path, resolution: float,
                   variables: list | None = None) -> TimeSeriesDataset:
    paths = [os.path.join(records_dir, f) for f in sorted(os.listdir(records_dir))
             if f.endswith(".txt")]
    return load_records(paths, outcomes_path, resolution, variables)
