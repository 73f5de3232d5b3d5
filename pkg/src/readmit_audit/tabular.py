"""Tabular cohort data model: schemas, CSV ingestion, cohort filtering,
30-day readmission labels, preprocessing and train/test splitting.

A :class:`Dataset` is stored column-wise. Numeric and boolean columns are
float arrays with ``nan`` for missing cells; categorical columns are object
arrays of ``str`` with ``None`` for missing cells; the label column is an
``int8`` array of 0/1.
"""
from __future__ import annotations

import bisect
import csv
import json
import math
from collections import defaultdict
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (EmptyFile, MissingColumn, NegativeStay, NoStatsForColumn, SchemaError,
                     TooFewRows, TypeMismatch)

KINDS = ("numeric", "categorical", "boolean")
ROLES = ("feature", "sensitive", "label", "identifier", "timestamp")
UNKNOWN = "__unknown__"

_TRUE = {"1", "true", "t", "yes", "y"}
_FALSE = {"0", "false", "f", "no", "n"}


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str
    role: str = "feature"
    # Set on one-hot columns: the categorical column they were expanded from.
    source: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.role not in ROLES:
            raise SchemaError(f"column {self.name!r}: unknown role {self.role!r}")

    def to_dict(self):
        d = {"name": self.name, "kind": self.kind, "role": self.role}
        if self.source is not None:
            d["source"] = self.source
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d["name"], d["kind"], d.get("role", "feature"), d.get("source"))


def validate_schema(schema: Sequence[FeatureSpec]) -> tuple[FeatureSpec, ...]:
    schema = tuple(schema)
    names = [s.name for s in schema]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise SchemaError(f"duplicate column names: {dupes}")
    labels = [s for s in schema if s.role == "label"]
    if len(labels) != 1:
        raise SchemaError(f"schema needs exactly one label column, found {len(labels)}")
    if labels[0].kind != "boolean":
        raise SchemaError(f"label column {labels[0].name!r} must be boolean")
    for s in schema:
        if s.role == "sensitive" and s.kind != "categorical":
            raise SchemaError(f"sensitive column {s.name!r} must be categorical")
    return schema


def load_schema(path) -> tuple[FeatureSpec, ...]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    cols = doc["columns"] if isinstance(doc, dict) else doc
    return validate_schema(FeatureSpec.from_dict(c) for c in cols)


def save_schema(schema: Sequence[FeatureSpec], path) -> None:
    doc = {"columns": [s.to_dict() for s in schema]}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


@dataclass
class Dataset:
    schema: tuple[FeatureSpec, ...]
    columns: dict[str, np.ndarray]

    def __post_init__(self):
        self.schema = validate_schema(self.schema)
        lengths = {len(self.columns[s.name]) for s in self.schema if s.name in self.columns}
        missing = [s.name for s in self.schema if s.name not in self.columns]
        if missing:
            raise MissingColumn(missing[0])
        if len(lengths) > 1:
            raise SchemaError(f"columns have differing lengths {sorted(lengths)}")

    @property
    def n_rows(self) -> int:
        return len(self.columns[self.schema[0].name])

    def __len__(self):
        return self.n_rows

    def spec(self, name: str) -> FeatureSpec:
        for s in self.schema:
            if s.name == name:
                return s
        raise MissingColumn(name)

    def names(self, role: str | None = None) -> list[str]:
        return [s.name for s in self.schema if role is None or s.role == role]

    @property
    def label_name(self) -> str:
        return self.names("label")[0]

    @property
    def label(self) -> np.ndarray:
        return self.columns[self.label_name]

    @property
    def identifier_name(self) -> str | None:
        ids = self.names("identifier")
        return ids[0] if ids else None

    def row_ids(self) -> list[str]:
        """Identifier column as strings, or the 0-based row positions."""
        name = self.identifier_name
        if name is None:
            return [str(i) for i in range(self.n_rows)]
        return [str(v) for v in self.columns[name]]

    @property
    def feature_names(self) -> list[str]:
        return self.names("feature")

    def feature_matrix(self) -> np.ndarray:
        cols = []
        for s in self.schema:
            if s.role != "feature":
                continue
            if s.kind == "categorical":
                raise SchemaError(f"feature {s.name!r} is categorical; preprocess first")
            col = np.asarray(self.columns[s.name], dtype=float)
            if np.isnan(col).any():
                raise SchemaError(f"feature {s.name!r} has missing values; preprocess first")
            cols.append(col)
        if not cols:
            return np.zeros((self.n_rows, 0))
        return np.column_stack(cols)

    def sensitive_columns(self) -> dict[str, list[str]]:
        return {n: [UNKNOWN if v is None else str(v) for v in self.columns[n]]
                for n in self.names("sensitive")}

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=int)
        return Dataset(self.schema, {k: v[idx] for k, v in self.columns.items()})

    def rows(self) -> list[dict]:
        names = [s.name for s in self.schema]
        return [{n: self.columns[n][i] for n in names} for i in range(self.n_rows)]


def _parse_bool(text: str):
    t = text.strip().lower()
    if t in _TRUE:
        return 1.0
    if t in _FALSE:
        return 0.0
    try:
        v = float(t)
    except ValueError:
        raise ValueError(text) from None
    if v in (0.0, 1.0):
        return v
    raise ValueError(text)


def load_dataset(csv_path, schema: Sequence[FeatureSpec], strict: bool = False) -> Dataset:
    """Read a CSV into a typed :class:`Dataset`.

    Empty cells and (unless ``strict``) unparseable numeric/boolean cells become
    missing values. Rows in :class:`TypeMismatch` are 1-based data rows, the
    header excluded. The label column must always parse.
    """
    schema = validate_schema(schema)
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or not any(h.strip() for h in header):
            raise EmptyFile(f"{csv_path} has no header row")
        body = list(reader)
    header = [h.strip() for h in header]
    pos = {h: i for i, h in enumerate(header)}
    for s in schema:
        if s.name not in pos:
            raise MissingColumn(s.name)
    body = [r for r in body if any(c.strip() for c in r)]
    if not body:
        raise EmptyFile(f"{csv_path} has no data rows")

    columns = {}
    for s in schema:
        j = pos[s.name]
        if s.role == "label":
            out = np.zeros(len(body), dtype=np.int8)
        elif s.kind == "categorical":
            out = np.empty(len(body), dtype=object)
        else:
            out = np.full(len(body), np.nan)
        for i, row in enumerate(body):
            cell = row[j].strip() if j < len(row) else ""
            if s.kind == "categorical":
                out[i] = cell if cell else None
                continue
            if not cell:
                if s.role == "label":
                    raise TypeMismatch(i + 1, s.name, cell)
                continue
            try:
                out[i] = _parse_bool(cell) if s.kind == "boolean" else float(cell)
            except ValueError:
                if strict or s.role == "label":
                    raise TypeMismatch(i + 1, s.name, cell) from None
        columns[s.name] = out
    return Dataset(schema, columns)


def _format_cell(spec: FeatureSpec, value) -> str:
    if spec.kind == "categorical":
        return "" if value is None else str(value)
    v = float(value)
    if math.isnan(v):
        return ""
    if spec.kind == "boolean" or spec.role == "label":
        return str(int(v))
    return repr(v)


def write_dataset(dataset: Dataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([s.name for s in dataset.schema])
        for i in range(dataset.n_rows):
            w.writerow([_format_cell(s, dataset.columns[s.name][i]) for s in dataset.schema])


# ---------------------------------------------------------------------------
# Admission records and 30-day readmission labels

@dataclass(frozen=True)
class AdmissionRecord:
    patient_id: str
    admission_id: str
    admit_time: float
    discharge_time: float
    age_at_admission: float
    died_in_hospital: bool = False
    unit_transfer: bool = False
    is_icu_stay: bool = True

    def __post_init__(self):
        if self.age_at_admission < 0:
            raise ValueError(f"admission {self.admission_id!r}: negative age")


ADMISSION_COLUMNS = ("patient_id", "admission_id", "admit_time", "discharge_time", "age",
                     "died_in_hospital", "unit_transfer", "is_icu_stay")


def load_admissions(path) -> list[AdmissionRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise EmptyFile(f"{path} has no header row")
        fields = [f.strip() for f in reader.fieldnames]
        for c in ADMISSION_COLUMNS:
            if c not in fields:
                raise MissingColumn(c)
        out = []
        for i, row in enumerate(reader, start=1):
            row = {k.strip(): (v or "").strip() for k, v in row.items()}
            try:
                out.append(AdmissionRecord(
                    row["patient_id"], row["admission_id"],
                    float(row["admit_time"]), float(row["discharge_time"]), float(row["age"]),
                    bool(_parse_bool(row["died_in_hospital"])),
                    bool(_parse_bool(row["unit_transfer"])),
                    bool(_parse_bool(row["is_icu_stay"]))))
            except ValueError as exc:
                raise TypeMismatch(i, "admission record", str(exc)) from None
    return out


def derive_readmission_label(records: Iterable[AdmissionRecord],
                             window_days: float = 30.0) -> dict[str, bool]:
    """Map each admission id to whether the same patient is readmitted within
    ``window_days`` of its discharge.

    The gap is next admit minus this discharge; a gap in ``(0, window_days]``
    counts, so exactly 30.0 days is a readmission.
    """
    records = list(records)
    if not records:
        raise ValueError("no admission records")
    admits = defaultdict(list)
    for r in records:
        if r.discharge_time < r.admit_time:
            raise NegativeStay(r.admission_id)
        admits[r.patient_id].append(r.admit_time)
    for times in admits.values():
        times.sort()
    labels = {}
    for r in records:
        times = admits[r.patient_id]
        k = bisect.bisect_right(times, r.discharge_time)
        labels[r.admission_id] = k < len(times) and times[k] - r.discharge_time <= window_days
    return labels


def apply_cohort_filter(records: Iterable[AdmissionRecord], min_age: float = 18.0) -> list[AdmissionRecord]:
    """Keep each patient's first ICU stay, provided that stay is of an adult
    (older than ``min_age``) discharged alive without a unit transfer.

    The index stay is chosen before the exclusions: a patient whose first ICU
    stay is excluded contributes nothing, rather than a later stay.
    """
    first: dict[str, AdmissionRecord] = {}
    for r in records:
        if not r.is_icu_stay:
            continue
        cur = first.get(r.patient_id)
        if cur is None or (r.admit_time, r.admission_id) < (cur.admit_time, cur.admission_id):
            first[r.patient_id] = r
    kept = [r for r in first.values()
            if r.age_at_admission > min_age and not r.died_in_hospital and not r.unit_transfer]
    return sorted(kept, key=lambda r: (r.admit_time, r.patient_id, r.admission_id))


# ---------------------------------------------------------------------------
# Preprocessing

@dataclass
class PreprocessStats:
    numeric: dict[str, dict[str, float]] = field(default_factory=dict)
    boolean: dict[str, float] = field(default_factory=dict)
    categorical: dict[str, list[str]] = field(default_factory=dict)
    encode_sensitive: bool = True

    def to_dict(self):
        return {
            "numeric": {k: dict(v) for k, v in self.numeric.items()},
            "boolean": dict(self.boolean),
            "categorical": {k: list(v) for k, v in self.categorical.items()},
            "encode_sensitive": self.encode_sensitive,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            numeric={k: {kk: float(vv) for kk, vv in v.items()} for k, v in d["numeric"].items()},
            boolean={k: float(v) for k, v in d["boolean"].items()},
            categorical={k: list(v) for k, v in d["categorical"].items()},
            encode_sensitive=bool(d.get("encode_sensitive", True)),
        )


def _fit_stats(dataset: Dataset, encode_sensitive: bool) -> PreprocessStats:
    stats = PreprocessStats(encode_sensitive=encode_sensitive)
    for s in dataset.schema:
        col = dataset.columns[s.name]
        if s.role == "feature" and s.kind == "numeric":
            obs = col[~np.isnan(col)]
            median = float(np.median(obs)) if obs.size else 0.0
            filled = np.where(np.isnan(col), median, col)
            stats.numeric[s.name] = {"median": median, "mean": float(filled.mean()),
                                     "std": float(filled.std())}
        elif s.role == "feature" and s.kind == "boolean":
            obs = col[~np.isnan(col)]
            stats.boolean[s.name] = float(np.round(np.median(obs))) if obs.size else 0.0
        elif s.kind == "categorical" and (s.role == "feature" or (s.role == "sensitive" and encode_sensitive)):
            stats.categorical[s.name] = sorted({v for v in col if v is not None and v != UNKNOWN})
    return stats


def _one_hot(col, levels):
    pos = {lv: i for i, lv in enumerate(levels)}
    out = np.zeros((len(col), len(levels) + 1))
    for i, v in enumerate(col):
        out[i, pos.get(v, len(levels))] = 1.0
    return out


def _transform(dataset: Dataset, stats: PreprocessStats) -> Dataset:
    schema, columns = [], {}
    for s in dataset.schema:
        col = dataset.columns[s.name]
        encoded = s.role == "feature" or (s.role == "sensitive" and stats.encode_sensitive)
        if s.role in ("label", "identifier", "timestamp", "sensitive"):
            schema.append(s)
            columns[s.name] = col
        if not encoded:
            continue
        if s.kind == "numeric":
            if s.name not in stats.numeric:
                raise NoStatsForColumn(s.name)
            st = stats.numeric[s.name]
            filled = np.where(np.isnan(col), st["median"], col)
            if st["std"] > 0:
                out = (filled - st["mean"]) / st["std"]
            else:
                out = np.zeros(len(col))
            schema.append(s)
            columns[s.name] = out
        elif s.kind == "boolean":
            if s.name not in stats.boolean:
                raise NoStatsForColumn(s.name)
            schema.append(s)
            columns[s.name] = np.where(np.isnan(col), stats.boolean[s.name], col)
        else:
            if s.name not in stats.categorical:
                raise NoStatsForColumn(s.name)
            levels = stats.categorical[s.name]
            block = _one_hot(col, levels)
            for j, lv in enumerate([*levels, UNKNOWN]):
                name = f"{s.name}={lv}"
                schema.append(FeatureSpec(name, "boolean", "feature", source=s.name))
                columns[name] = block[:, j]
    for name in [*stats.numeric, *stats.boolean, *stats.categorical]:
        if name not in dataset.columns:
            raise MissingColumn(name)
    return Dataset(tuple(schema), columns)


def preprocess(dataset: Dataset, fit_statistics: PreprocessStats | None = None,
               encode_sensitive: bool = True) -> tuple[Dataset, PreprocessStats]:
    """Standardize numerics, one-hot categoricals (with an unknown bucket) and
    impute missing values.

    With ``fit_statistics`` the stored transform is replayed (test path);
    otherwise statistics are fitted on ``dataset`` first (train path).
    Sensitive columns stay as raw tokens for auditing and, when
    ``encode_sensitive``, are also one-hot encoded as model features.
    """
    if dataset.n_rows == 0:
        raise TooFewRows("cannot preprocess an empty dataset")
    stats = fit_statistics if fit_statistics is not None else _fit_stats(dataset, encode_sensitive)
    return _transform(dataset, stats), stats


# ---------------------------------------------------------------------------
# Splitting

@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.7
    seed: int = 0
    stratify_on_label: bool = True

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must be in (0, 1)")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


def split_indices(labels, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    labels = np.asarray(labels)
    n = labels.size
    if n < 10:
        raise TooFewRows(f"need at least 10 rows to split, got {n}")
    rng = np.random.default_rng(spec.seed)
    if spec.stratify_on_label:
        train = []
        for cls in np.unique(labels):
            members = np.flatnonzero(labels == cls)
            members = members[rng.permutation(members.size)]
            train.append(members[:int(round(spec.train_fraction * members.size))])
        train = np.concatenate(train)
    else:
        perm = rng.permutation(n)
        train = perm[:int(round(spec.train_fraction * n))]
    mask = np.zeros(n, dtype=bool)
    mask[train] = True
    return np.flatnonzero(mask), np.flatnonzero(~mask)


def split(dataset: Dataset, spec: SplitSpec = SplitSpec()) -> tuple[Dataset, Dataset]:
    train, test = split_indices(dataset.label, spec)
    return dataset.subset(train), dataset.subset(test)
