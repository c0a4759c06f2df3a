"""Raw tables, dataset metadata, validation and the immutable validated dataset."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Iterable, Mapping

import numpy as np

from .. import _jsonio
from ..errors import TableFormatError, ValidationError
from .dictionary import DataDictionary, DictionaryEntry

DEFAULT_MISSING = "NA"


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class RawTable:
    """Column name -> value vector. Values are untyped until validation."""

    columns: Mapping[str, np.ndarray]

    def __post_init__(self):
        cols = {}
        lengths = set()
        for name, values in self.columns.items():
            arr = values if isinstance(values, np.ndarray) else np.array(list(values), dtype=object)
            if arr.ndim != 1:
                raise TableFormatError(f"column '{name}' is not one-dimensional")
            cols[str(name)] = arr
            lengths.add(len(arr))
        if len(lengths) > 1:
            raise TableFormatError(f"columns have unequal lengths: {sorted(lengths)}")
        object.__setattr__(self, "columns", MappingProxyType(cols))

    # read-only views do not pickle; rebuild from a plain dict instead
    def __reduce__(self):
        return (RawTable, (dict(self.columns),))

    @property
    def n_rows(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0

    @property
    def names(self) -> list[str]:
        return list(self.columns)

    @classmethod
    def from_columns(cls, columns: Mapping[str, Iterable[Any]]) -> RawTable:
        return cls({k: np.array(list(v), dtype=object) for k, v in columns.items()})

    def to_dict(self) -> dict:
        return {name: [_plain(v) for v in arr] for name, arr in self.columns.items()}


def _plain(v: Any) -> Any:
    if v is None:
        return None
    if isinstance(v, np.datetime64):
        return None if np.isnat(v) else str(v.astype("datetime64[D]"))
    if isinstance(v, (float, np.floating)):
        return None if math.isnan(v) else float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def ingest_table(source: str, missing_marker: str = DEFAULT_MISSING) -> RawTable:
    """Parse RFC-4180 CSV text with a header row into a :class:`RawTable`.

    Cells equal to ``missing_marker`` (and empty cells) become ``None``.
    """
    reader = csv.reader(io.StringIO(source))
    header: list[str] | None = None
    rows: list[list[str]] = []
    for row in reader:
        if not row:
            continue
        if header is None:
            header = [h.strip() for h in row]
            if header and header[0].startswith("﻿"):
                header[0] = header[0][1:]
            dupes = {h for h in header if header.count(h) > 1}
            if dupes:
                raise TableFormatError(f"line {reader.line_num}: duplicate column names {sorted(dupes)}")
            continue
        if len(row) != len(header):
            raise TableFormatError(f"line {reader.line_num}: expected {len(header)} fields, got {len(row)}")
        rows.append(row)
    if header is None:
        raise TableFormatError("no header row found")
    cols: dict[str, list] = {h: [] for h in header}
    for row in rows:
        for h, cell in zip(header, row):
            cols[h].append(None if cell == missing_marker or cell == "" else cell)
    return RawTable.from_columns(cols)


@dataclass(frozen=True)
class DatasetMetadata:
    uid_var: str
    round_var: str | None = None
    group_var: str | None = None
    label_map: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "label_map", MappingProxyType(dict(self.label_map)))

    def __reduce__(self):
        return (DatasetMetadata, (self.uid_var, self.round_var, self.group_var, dict(self.label_map)))

    def named_columns(self) -> list[tuple[str, str]]:
        out = [("uid", self.uid_var)]
        if self.round_var:
            out.append(("round", self.round_var))
        if self.group_var:
            out.append(("group", self.group_var))
        return out

    def label(self, variable: str) -> str:
        return self.label_map.get(variable, variable)

    def to_dict(self) -> dict:
        return {
            "uid_var": self.uid_var,
            "round_var": self.round_var,
            "group_var": self.group_var,
            "label_map": dict(self.label_map),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> DatasetMetadata:
        return cls(d["uid_var"], d.get("round_var"), d.get("group_var"), d.get("label_map") or {})


def is_missing(v: Any) -> bool:
    if v is None:
        return True
    if isinstance(v, (float, np.floating)):
        return math.isnan(v)
    if isinstance(v, np.datetime64):
        return bool(np.isnat(v))
    return False


def _fmt_value(v: Any) -> str:
    if isinstance(v, float) and v.is_integer():
        return str(int(v))
    return str(v)


class _Bad(Exception):
    pass


def _coerce_integer(v: Any) -> float:
    if isinstance(v, (bool, np.bool_)):
        raise _Bad
    if isinstance(v, (int, np.integer)):
        return float(v)
    if isinstance(v, (float, np.floating)):
        if not float(v).is_integer():
            raise _Bad
        return float(v)
    text = str(v).strip()
    try:
        return float(int(text))
    except ValueError:
        try:
            x = float(text)
        except ValueError:
            raise _Bad from None
        if not x.is_integer():
            raise _Bad from None
        return x


def _coerce_double(v: Any) -> float:
    if isinstance(v, (bool, np.bool_)):
        raise _Bad
    if isinstance(v, (int, float, np.integer, np.floating)):
        x = float(v)
    else:
        try:
            x = float(str(v).strip())
        except ValueError:
            raise _Bad from None
    if math.isnan(x) or math.isinf(x):
        raise _Bad
    return x


def _coerce_date(v: Any) -> np.datetime64:
    if isinstance(v, np.datetime64):
        return v.astype("datetime64[D]")
    try:
        return np.datetime64(str(v).strip(), "D")
    except ValueError:
        raise _Bad from None


def _coerce_column(values: np.ndarray, entry: DictionaryEntry, violations: list[str]) -> np.ndarray:
    var, cls = entry.variable, entry.cls
    n = len(values)
    if cls in ("integer", "double"):
        out = np.full(n, np.nan)
        conv = _coerce_integer if cls == "integer" else _coerce_double
        for i, v in enumerate(values):
            if is_missing(v):
                continue
            try:
                x = conv(v)
            except _Bad:
                violations.append(f"{var}: value '{v}' at row {i + 1} is not a valid {cls} (permitted {entry.describe_bound()})")
                continue
            if (entry.min is not None and x < entry.min) or (entry.max is not None and x > entry.max):
                violations.append(f"{var}: value {_fmt_value(x)} at row {i + 1} outside {entry.describe_bound()}")
                continue
            out[i] = x
        return out
    if cls == "date":
        out = np.full(n, np.datetime64("NaT"), dtype="datetime64[D]")
        for i, v in enumerate(values):
            if is_missing(v):
                continue
            try:
                out[i] = _coerce_date(v)
            except _Bad:
                violations.append(f"{var}: value '{v}' at row {i + 1} is not a valid date (permitted ISO yyyy-mm-dd)")
        return out
    out = np.empty(n, dtype=object)
    allowed = set(entry.allowed_set) if cls == "categorical" else None
    for i, v in enumerate(values):
        if is_missing(v):
            out[i] = None
            continue
        s = str(v)
        if allowed is not None and s not in allowed:
            violations.append(f"{var}: value '{s}' at row {i + 1} not in {entry.describe_bound()}")
            continue
        out[i] = s
    return out


def _column_payload(arr: np.ndarray) -> list:
    return [_plain(v) for v in arr]


def compute_stamp(columns: Mapping[str, np.ndarray], dictionary: DataDictionary) -> str:
    payload = {
        "columns": [[name, _column_payload(arr)] for name, arr in columns.items()],
        "dictionary": dictionary.to_dicts(),
    }
    return _jsonio.sha256_bytes(_jsonio.canonical_bytes(payload))


@dataclass(frozen=True)
class ValidatedDataset:
    """Typed, dictionary-conforming person-round records. Immutable.

    Numeric columns are float arrays with NaN for missing; categorical and
    text columns are object arrays with ``None``; dates are
    ``datetime64[D]`` with NaT.
    """

    table: RawTable
    dictionary: DataDictionary
    metadata: DatasetMetadata
    validation_stamp: str

    @property
    def n_rows(self) -> int:
        return self.table.n_rows

    @property
    def names(self) -> list[str]:
        return self.table.names

    def column(self, name: str) -> np.ndarray:
        return self.table.columns[name]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.table.columns[name]

    def entry(self, name: str) -> DictionaryEntry:
        return self.dictionary[name]

    def numeric(self, name: str) -> np.ndarray:
        if not self.dictionary[name].is_numeric:
            raise TypeError(f"column '{name}' is {self.dictionary[name].cls}, not numeric")
        return self.table.columns[name]

    def uids(self) -> np.ndarray:
        return self.table.columns[self.metadata.uid_var]

    def to_bundle(self, extra: Mapping | None = None) -> dict:
        out = {
            "kind": "validated_dataset",
            "metadata": self.metadata.to_dict(),
            "dictionary": self.dictionary.to_dicts(),
            "columns": {name: _column_payload(arr) for name, arr in self.table.columns.items()},
            "validation_stamp": self.validation_stamp,
        }
        if extra:
            out.update(extra)
        return out

    def to_json(self, extra: Mapping | None = None) -> str:
        return _jsonio.dumps(self.to_bundle(extra), indent=1)

    @classmethod
    def from_bundle(cls, bundle: Mapping) -> ValidatedDataset:
        dictionary = DataDictionary.from_dicts(bundle["dictionary"])
        ds = validate_dataset(RawTable.from_columns(bundle["columns"]), dictionary, DatasetMetadata.from_dict(bundle["metadata"]))
        stamp = bundle.get("validation_stamp")
        if stamp is not None and stamp != ds.validation_stamp:
            raise ValidationError([f"bundle stamp {stamp[:12]} does not match its content ({ds.validation_stamp[:12]})"])
        return ds

    @classmethod
    def from_json(cls, text: str) -> ValidatedDataset:
        return cls.from_bundle(_jsonio.loads(text))

    def to_csv(self, missing_marker: str = DEFAULT_MISSING) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.names)
        cols = [_column_payload(self.table.columns[n]) for n in self.names]
        for i in range(self.n_rows):
            w.writerow([missing_marker if c[i] is None else _fmt_value(c[i]) for c in cols])
        return buf.getvalue()


def validate_dataset(table: RawTable, dictionary: DataDictionary, metadata: DatasetMetadata) -> ValidatedDataset:
    """Coerce every column to its dictionary class or raise with every violation.

    All problems are collected before raising so one run surfaces all of
    them. Rows in messages are 1-based record numbers (header excluded).
    """
    if isinstance(table, ValidatedDataset):
        table = table.table
    violations: list[str] = []
    for role, var in metadata.named_columns():
        if var not in table.columns:
            violations.append(f"{role} variable '{var}' not found in table")
    for name in table.names:
        if name not in dictionary:
            violations.append(f"no dictionary entry for column '{name}'")
    typed: dict[str, np.ndarray] = {}
    for name in table.names:
        if name in dictionary:
            typed[name] = _coerce_column(table.columns[name], dictionary[name], violations)
    if metadata.uid_var in table.columns and not violations:
        uid = typed[metadata.uid_var]
        if any(is_missing(v) for v in uid):
            violations.append(f"uid variable '{metadata.uid_var}' has missing values")
    if violations:
        raise ValidationError(violations)
    used = DataDictionary(tuple(e for e in dictionary if e.variable in typed))
    typed = {k: _frozen(v) for k, v in typed.items()}
    stamp = compute_stamp(typed, used)
    return ValidatedDataset(RawTable(typed), used, metadata, stamp)
