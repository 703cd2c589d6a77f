"""Cohort ingestion and the ``Dataset`` container.

The clinical pipeline is::

    records = load_cohort("cohort.csv")
    grid = impute(hourly_segment(records))
    data = snapshot(grid)

Long-format CSV columns are ``patient_id,timestamp_hours,measurement,value,
label,anchor_hour``; ``anchor_hour`` is on the same clock as
``timestamp_hours``.  Hour cells are indexed by
``floor(timestamp - first timestamp of the patient)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .exceptions import DataError, SchemaError

# canonical feature order; the two blood pressures come first
FEATURES = ("sbp", "dbp", "heart_rate", "respiratory_rate", "spo2", "temperature")

MEASUREMENT_CODES = {
    "sbp": "sbp",
    "dbp": "dbp",
    "hr": "heart_rate",
    "rr": "respiratory_rate",
    "spo2": "spo2",
    "temp": "temperature",
}

LONG_COLUMNS = ("patient_id", "timestamp_hours", "measurement", "value", "label", "anchor_hour")
WIDE_COLUMNS = ("patient_id", "hour", "hr", "rr", "spo2", "temp", "sbp", "dbp", "label")

TEMPERATURE_RANGE = (25.0, 45.0)

# provenance codes stored in HourlyGrid.provenance
MISSING = -1
OBSERVED = 0
FORWARD = 1
BACKWARD = 2


@dataclass(frozen=True)
class PatientSeries:
    """Timestamped measurements of one patient, keyed by canonical feature name."""

    patient_id: str
    label: int
    anchor_time: float | None
    times: Mapping[str, np.ndarray]
    values: Mapping[str, np.ndarray]

    @property
    def start_time(self) -> float:
        return min(float(t[0]) for t in self.times.values() if len(t))

    def count(self, kind: str) -> int:
        return len(self.values.get(kind, ()))


@dataclass(frozen=True)
class RawRecords:
    patients: tuple[PatientSeries, ...]

    def __len__(self):
        return len(self.patients)

    @property
    def patient_ids(self):
        return [p.patient_id for p in self.patients]

    def __getitem__(self, patient_id: str) -> PatientSeries:
        for p in self.patients:
            if p.patient_id == patient_id:
                return p
        raise KeyError(patient_id)


@dataclass(frozen=True)
class PatientGrid:
    patient_id: str
    label: int
    anchor: int | None
    values: np.ndarray  # hours x len(FEATURES), NaN where missing
    provenance: np.ndarray  # same shape, MISSING/OBSERVED/FORWARD/BACKWARD

    @property
    def n_hours(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class HourlyGrid:
    patients: tuple[PatientGrid, ...]
    feature_names: tuple[str, ...] = FEATURES

    def __len__(self):
        return len(self.patients)


def _freeze(a):
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Feature matrix, binary labels and feature names.

    Arrays are copied on construction and marked read-only.
    """

    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    ids: tuple | None = None

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.y)
        if X.ndim != 2 or X.shape[0] < 1:
            raise DataError("X must be a non-empty 2-D matrix")
        if y.shape != (X.shape[0],):
            raise DataError(f"y has shape {y.shape}, expected ({X.shape[0]},)")
        if not np.all(np.isfinite(X)):
            raise DataError("X contains non-finite entries")
        if not np.all((y == 0) | (y == 1)):
            raise DataError("labels must be 0 or 1")
        names = tuple(str(n) for n in self.feature_names)
        if len(names) != X.shape[1]:
            raise DataError(f"{len(names)} feature names for {X.shape[1]} columns")
        if len(set(names)) != len(names):
            raise DataError("feature names must be unique")
        ids = None if self.ids is None else tuple(self.ids)
        if ids is not None and len(ids) != X.shape[0]:
            raise DataError("ids length does not match row count")
        object.__setattr__(self, "X", _freeze(X))
        object.__setattr__(self, "y", _freeze(y.astype(np.int64)))
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "ids", ids)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def positive_rate(self) -> float:
        return float(self.y.mean())

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.feature_index(name)]

    def feature_index(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise DataError(f"unknown feature {name!r}") from None

    def subset(self, rows) -> Dataset:
        rows = np.asarray(rows)
        ids = None if self.ids is None else tuple(np.asarray(self.ids, dtype=object)[rows])
        return Dataset(self.X[rows], self.y[rows], self.feature_names, ids)

    def with_labels(self, y) -> Dataset:
        return Dataset(self.X, y, self.feature_names, self.ids)

    def with_X(self, X) -> Dataset:
        return Dataset(X, self.y, self.feature_names, self.ids)


def concat(datasets: Sequence[Dataset]) -> Dataset:
    names = datasets[0].feature_names
    if any(d.feature_names != names for d in datasets):
        raise DataError("cannot concatenate datasets with different features")
    if all(d.ids is not None for d in datasets):
        ids = tuple(i for d in datasets for i in d.ids)
    else:
        ids = None
    return Dataset(
        np.vstack([d.X for d in datasets]),
        np.concatenate([d.y for d in datasets]),
        names,
        ids,
    )


# ---------------------------------------------------------------------------
# ingestion


def _parse_float(text, row, column):
    try:
        v = float(text)
    except (TypeError, ValueError):
        raise DataError(f"row {row}: cannot parse {column}={text!r} as a number") from None
    if not math.isfinite(v):
        raise DataError(f"row {row}: {column} is not finite")
    return v


def _parse_label(text, row):
    v = _parse_float(text, row, "label") if text not in (None, "") else None
    if v is None:
        raise DataError(f"row {row}: missing label")
    if v not in (0.0, 1.0):
        raise DataError(f"row {row}: label {text!r} outside {{0,1}}")
    return int(v)


def _read_header(reader, required, path):
    header = next(reader, None)
    if header is None:
        raise SchemaError(f"{path}: empty file, header row required")
    header = [h.strip() for h in header]
    missing = [c for c in required if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing required column(s): {', '.join(missing)}")
    return {c: header.index(c) for c in header}


def load_cohort(path) -> RawRecords:
    """Read a long-format cohort CSV into per-patient measurement series.

    Row numbers in error messages count the header as row 1.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        col = _read_header(reader, LONG_COLUMNS, path)
        order: list[str] = []
        rows: dict[str, list] = {}
        meta: dict[str, tuple] = {}
        seen = set()
        for rownum, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            pid = rec[col["patient_id"]].strip()
            t = _parse_float(rec[col["timestamp_hours"]], rownum, "timestamp_hours")
            code = rec[col["measurement"]].strip().lower()
            if code not in MEASUREMENT_CODES:
                raise DataError(f"row {rownum}: unknown measurement {code!r}")
            kind = MEASUREMENT_CODES[code]
            v = _parse_float(rec[col["value"]], rownum, "value")
            if kind == "temperature" and not TEMPERATURE_RANGE[0] <= v <= TEMPERATURE_RANGE[1]:
                raise DataError(f"row {rownum}: temperature {v} outside {TEMPERATURE_RANGE} (expects Celsius)")
            label = _parse_label(rec[col["label"]].strip(), rownum)
            anchor_text = rec[col["anchor_hour"]].strip()
            anchor = _parse_float(anchor_text, rownum, "anchor_hour") if anchor_text else None
            key = (pid, t, kind)
            if key in seen:
                raise DataError(f"row {rownum}: duplicate measurement for patient {pid!r}, time {t}, {code}")
            seen.add(key)
            if pid not in rows:
                order.append(pid)
                rows[pid] = []
                meta[pid] = (label, anchor)
            elif meta[pid] != (label, anchor):
                raise DataError(f"row {rownum}: label/anchor_hour changes within patient {pid!r}")
            rows[pid].append((t, kind, v))

    patients = []
    for pid in order:
        times, values = {}, {}
        for kind in FEATURES:
            pts = sorted((t, v) for t, k, v in rows[pid] if k == kind)
            if pts:
                times[kind] = np.array([p[0] for p in pts])
                values[kind] = np.array([p[1] for p in pts])
        label, anchor = meta[pid]
        patients.append(PatientSeries(pid, label, anchor, times, values))
    return RawRecords(tuple(patients))


def load_wide(path) -> HourlyGrid:
    """Read pre-gridded wide-format data. Empty cells are missing.

    An optional ``anchor_hour`` column gives the grid row to snapshot.
    """
    path = Path(path)
    codes = ("sbp", "dbp", "hr", "rr", "spo2", "temp")  # canonical order
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        col = _read_header(reader, WIDE_COLUMNS, path)
        order: list[str] = []
        cells: dict[str, dict[int, list]] = {}
        meta: dict[str, tuple] = {}
        for rownum, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            pid = rec[col["patient_id"]].strip()
            hour_f = _parse_float(rec[col["hour"]], rownum, "hour")
            if hour_f < 0 or hour_f != int(hour_f):
                raise DataError(f"row {rownum}: hour must be a non-negative integer")
            hour = int(hour_f)
            label = _parse_label(rec[col["label"]].strip(), rownum)
            anchor = None
            if "anchor_hour" in col and rec[col["anchor_hour"]].strip():
                anchor = int(_parse_float(rec[col["anchor_hour"]], rownum, "anchor_hour"))
            row = []
            for c in codes:
                text = rec[col[c]].strip()
                v = _parse_float(text, rownum, c) if text else np.nan
                if c == "temp" and text and not TEMPERATURE_RANGE[0] <= v <= TEMPERATURE_RANGE[1]:
                    raise DataError(f"row {rownum}: temperature {v} outside {TEMPERATURE_RANGE}")
                row.append(v)
            if pid not in cells:
                order.append(pid)
                cells[pid] = {}
                meta[pid] = (label, anchor)
            elif meta[pid] != (label, anchor):
                raise DataError(f"row {rownum}: label/anchor_hour changes within patient {pid!r}")
            if hour in cells[pid]:
                raise DataError(f"row {rownum}: duplicate hour {hour} for patient {pid!r}")
            cells[pid][hour] = row

    patients = []
    for pid in order:
        n_hours = max(cells[pid]) + 1
        values = np.full((n_hours, len(FEATURES)), np.nan)
        for h, row in cells[pid].items():
            values[h] = row
        prov = np.where(np.isnan(values), MISSING, OBSERVED).astype(np.int8)
        label, anchor = meta[pid]
        patients.append(PatientGrid(pid, label, anchor, _freeze(values), _freeze(prov)))
    return HourlyGrid(tuple(patients))


def load_dataset_csv(path, label_column="label", id_column=None) -> Dataset:
    """Read a plain feature table: every column except label/id is a feature."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        col = _read_header(reader, [label_column] + ([id_column] if id_column else []), path)
        feats = [c for c in col if c not in (label_column, id_column)]
        X, y, ids = [], [], []
        for rownum, rec in enumerate(reader, start=2):
            if not rec:
                continue
            X.append([_parse_float(rec[col[f]], rownum, f) for f in feats])
            y.append(_parse_label(rec[col[label_column]].strip(), rownum))
            if id_column:
                ids.append(rec[col[id_column]])
    if not X:
        raise DataError(f"{path}: no data rows")
    return Dataset(np.array(X), np.array(y), tuple(feats), tuple(ids) if id_column else None)


def save_dataset_csv(data: Dataset, path, label_column="label"):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(data.feature_names) + [label_column])
        for row, label in zip(data.X, data.y):
            w.writerow([repr(float(v)) for v in row] + [int(label)])


# ---------------------------------------------------------------------------
# gridding


def hourly_segment(records: RawRecords) -> HourlyGrid:
    """Average each patient's measurements into one-hour cells."""
    patients = []
    for p in records.patients:
        t0 = p.start_time
        n_hours = 1 + max(int(math.floor(t[-1] - t0)) for t in p.times.values() if len(t))
        anchor = None
        if p.anchor_time is not None:
            anchor = int(math.floor(p.anchor_time - t0))
        sums = np.zeros((n_hours, len(FEATURES)))
        counts = np.zeros((n_hours, len(FEATURES)))
        for j, kind in enumerate(FEATURES):
            if kind not in p.times:
                continue
            hours = np.floor(p.times[kind] - t0).astype(np.int64)
            np.add.at(sums[:, j], hours, p.values[kind])
            np.add.at(counts[:, j], hours, 1.0)
        with np.errstate(invalid="ignore"):
            values = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
        prov = np.where(counts > 0, OBSERVED, MISSING).astype(np.int8)
        patients.append(PatientGrid(p.patient_id, p.label, anchor, _freeze(values), _freeze(prov)))
    return HourlyGrid(tuple(patients))


def _fill_indices(observed):
    """Index of the most recent observed row (forward) and the next one (backward).

    ``observed`` is (hours, k); -1 / hours where none exists.
    """
    n = observed.shape[0]
    idx = np.where(observed, np.arange(n)[:, None], -1)
    prev = np.maximum.accumulate(idx, axis=0)
    idx_b = np.where(observed, np.arange(n)[:, None], n)
    nxt = np.minimum.accumulate(idx_b[::-1], axis=0)[::-1]
    return prev, nxt


def impute(grid: HourlyGrid) -> HourlyGrid:
    """Carry the last observation forward, then fill leading gaps backward."""
    out = []
    for p in grid.patients:
        observed = p.provenance == OBSERVED
        empty = ~observed.any(axis=0)
        if empty.any():
            kinds = [grid.feature_names[j] for j in np.flatnonzero(empty)]
            raise DataError(f"patient {p.patient_id!r} has no {', '.join(kinds)} measurements")
        prev, nxt = _fill_indices(observed)
        cols = np.arange(observed.shape[1])[None, :]
        use_prev = prev >= 0
        src = np.where(use_prev, prev, nxt)
        values = p.values[src, np.broadcast_to(cols, src.shape)]
        prov = np.where(observed, OBSERVED, np.where(use_prev, FORWARD, BACKWARD)).astype(np.int8)
        out.append(PatientGrid(p.patient_id, p.label, p.anchor, _freeze(values), _freeze(prov)))
    return HourlyGrid(tuple(out), grid.feature_names)


def snapshot(grid: HourlyGrid, anchor=None) -> Dataset:
    """One row per patient: the feature values at the anchor hour.

    ``anchor`` is an int (same hour for all), a mapping patient id -> hour, or
    None to use each patient's stored anchor (last hour when none is stored).
    """
    rows, labels, ids = [], [], []
    for p in grid.patients:
        if anchor is None:
            h = p.anchor if p.anchor is not None else p.n_hours - 1
        elif isinstance(anchor, Mapping):
            h = anchor[p.patient_id]
        else:
            h = int(anchor)
        if not 0 <= h < p.n_hours:
            raise DataError(f"anchor {h} outside patient {p.patient_id!r} grid of {p.n_hours} hours")
        row = p.values[h]
        if np.isnan(row).any():
            raise DataError(f"patient {p.patient_id!r} has missing cells at hour {h}; impute first")
        rows.append(row)
        labels.append(p.label)
        ids.append(p.patient_id)
    return Dataset(np.array(rows), np.array(labels), grid.feature_names, tuple(ids))


def cohort_to_dataset(path) -> Dataset:
    """Load a cohort file (long or wide format) and return the anchor-hour snapshot."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        header = next(csv.reader(fh), [])
    if "measurement" in [h.strip() for h in header]:
        grid = hourly_segment(load_cohort(path))
    else:
        grid = load_wide(path)
    return snapshot(impute(grid))


# ---------------------------------------------------------------------------
# normalization


@dataclass(frozen=True)
class NormStats:
    """Per-feature mean and sample standard deviation (ddof=1)."""

    mean: np.ndarray
    std: np.ndarray
    feature_names: tuple[str, ...] = field(default=())

    def invert(self, X) -> np.ndarray:
        return np.asarray(X) * self.std + self.mean

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "feature_names": list(self.feature_names)}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["mean"], float), np.asarray(d["std"], float), tuple(d.get("feature_names", ())))


def fit_norm(data: Dataset) -> NormStats:
    if data.n < 2:
        raise DataError("normalization needs at least two rows")
    mean = data.X.mean(axis=0)
    std = data.X.std(axis=0, ddof=1)
    bad = [data.feature_names[j] for j in np.flatnonzero(~(std > 0))]
    if bad:
        raise DataError(f"zero-variance feature(s): {', '.join(bad)}")
    return NormStats(_freeze(mean), _freeze(std), data.feature_names)


def apply_norm(data: Dataset, stats: NormStats) -> Dataset:
    if stats.feature_names and stats.feature_names != data.feature_names:
        raise DataError("normalization stats were fit on different features")
    return data.with_X((data.X - stats.mean) / stats.std)


def normalize(data: Dataset) -> tuple[Dataset, NormStats]:
    stats = fit_norm(data)
    return apply_norm(data, stats), stats
