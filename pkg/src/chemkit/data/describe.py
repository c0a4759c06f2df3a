"""Descriptive statistics and histogram data, optionally by group and round."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .. import _jsonio
from ..errors import SpecificationError
from .table import ValidatedDataset, is_missing

MAX_BINS = 20


def n_bins(n: int) -> int:
    """Histogram bin count rule: ``min(20, ceil(sqrt(n)))``."""
    return 0 if n <= 0 else min(MAX_BINS, math.ceil(math.sqrt(n)))


@dataclass(frozen=True)
class Histogram:
    edges: tuple[float, ...]
    counts: tuple[int, ...]

    def to_dict(self) -> dict:
        return {"edges": list(self.edges), "counts": list(self.counts)}


def histogram(values: np.ndarray) -> Histogram:
    x = np.asarray(values, dtype=float)
    x = x[~np.isnan(x)]
    k = n_bins(len(x))
    if k == 0:
        return Histogram((), ())
    counts, edges = np.histogram(x, bins=k)
    return Histogram(tuple(float(e) for e in edges), tuple(int(c) for c in counts))


@dataclass(frozen=True)
class VariableSummary:
    variable: str
    cls: str
    n: int
    n_missing: int
    mean: float = math.nan
    sd: float = math.nan
    min: float = math.nan
    max: float = math.nan
    levels: dict[str, int] | None = None
    histogram: Histogram | None = None

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"variable": self.variable, "class": self.cls, "n": self.n, "n_missing": self.n_missing}
        if self.cls in ("integer", "double"):
            d.update(mean=self.mean, sd=self.sd, min=self.min, max=self.max, histogram=self.histogram.to_dict())
        if self.levels is not None:
            d["levels"] = dict(self.levels)
        return d


def summarize_numeric(name: str, cls: str, values: np.ndarray) -> VariableSummary:
    x = np.asarray(values, dtype=float)
    obs = x[~np.isnan(x)]
    n = len(obs)
    if n == 0:
        return VariableSummary(name, cls, 0, len(x), histogram=Histogram((), ()))
    mean = float(np.mean(obs))
    sd = float(np.std(obs, ddof=1)) if n > 1 else math.nan
    return VariableSummary(
        name, cls, n, len(x) - n,
        mean=mean, sd=sd, min=float(obs.min()), max=float(obs.max()),
        histogram=histogram(obs),
    )


def _summarize(ds: ValidatedDataset, name: str, rows: np.ndarray) -> VariableSummary:
    entry = ds.dictionary[name]
    col = ds.column(name)[rows]
    if entry.is_numeric:
        return summarize_numeric(name, entry.cls, col)
    missing = sum(1 for v in col if is_missing(v))
    levels = None
    if entry.cls == "categorical":
        levels = {lvl: 0 for lvl in entry.allowed_set}
        for v in col:
            if not is_missing(v):
                levels[v] += 1
    return VariableSummary(name, entry.cls, len(col) - missing, missing, levels=levels)


@dataclass(frozen=True)
class Stratum:
    key: dict[str, str]
    n_rows: int
    variables: dict[str, VariableSummary]

    def to_dict(self) -> dict:
        return {"key": dict(self.key), "n_rows": self.n_rows, "variables": [v.to_dict() for v in self.variables.values()]}


@dataclass(frozen=True)
class DescriptiveSummary:
    """Overall stratum first, then one stratum per observed group/round combination."""

    strata: tuple[Stratum, ...]
    labels: dict[str, str] = field(default_factory=dict)

    @property
    def overall(self) -> Stratum:
        return self.strata[0]

    def stratum(self, **key: str) -> Stratum:
        for s in self.strata:
            if s.key == key:
                return s
        raise KeyError(key)

    def to_dict(self) -> dict:
        return {"strata": [s.to_dict() for s in self.strata]}

    def to_json(self) -> str:
        return _jsonio.dumps(self.to_dict())

    def to_text(self) -> str:
        return summary_text(self)


def _stratum_label(v: Any) -> str:
    if isinstance(v, float) and v.is_integer():
        return str(int(v))
    return str(v)


def describe_dataset(ds, by_group: bool = False, by_round: bool = False, variables: list[str] | None = None) -> DescriptiveSummary:
    """Summarize every variable (or ``variables``) overall and per stratum.

    Accepts a scored dataset too; its score columns are summarized like any
    other double column.
    """
    if not isinstance(ds, ValidatedDataset) and hasattr(ds, "as_dataset"):
        ds = ds.as_dataset()
    md = ds.metadata
    strat_vars: list[tuple[str, str]] = []
    if by_group:
        if not md.group_var:
            raise SpecificationError("cannot stratify by group: metadata has no group_var")
        strat_vars.append(("group", md.group_var))
    if by_round:
        if not md.round_var:
            raise SpecificationError("cannot stratify by round: metadata has no round_var")
        strat_vars.append(("round", md.round_var))
    names = variables if variables is not None else ds.names
    for v in names:
        if v not in ds.table.columns:
            raise SpecificationError(f"unknown variable '{v}'")

    all_rows = np.arange(ds.n_rows)
    strata = [Stratum({}, ds.n_rows, {v: _summarize(ds, v, all_rows) for v in names})]
    if strat_vars:
        keys = [tuple(_stratum_label(ds.column(var)[i]) if not is_missing(ds.column(var)[i]) else "NA" for _, var in strat_vars) for i in range(ds.n_rows)]
        for combo in sorted(set(keys)):
            rows = np.array([i for i, k in enumerate(keys) if k == combo], dtype=int)
            key = {role: val for (role, _), val in zip(strat_vars, combo)}
            strata.append(Stratum(key, len(rows), {v: _summarize(ds, v, rows) for v in names}))
    return DescriptiveSummary(tuple(strata), {v: md.label(v) for v in names})


def depict_dataset(ds, variables: list[str] | None = None) -> dict[str, Histogram]:
    """Plot data (histogram bins) for numeric variables, as numbers only."""
    if not isinstance(ds, ValidatedDataset) and hasattr(ds, "as_dataset"):
        ds = ds.as_dataset()
    names = variables if variables is not None else [e.variable for e in ds.dictionary if e.is_numeric]
    return {v: histogram(ds.numeric(v)) for v in names}


def _num(x: float, digits: int = 3) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "NA"
    return f"{x:.{digits}f}"


def format_table(header: list[str], rows: list[list[str]]) -> str:
    """Aligned plain-text table: left-aligned first column, right-aligned rest."""
    widths = [max(len(str(r[i])) for r in [header] + rows) for i in range(len(header))]

    def line(cells):
        parts = [str(c).ljust(widths[0]) if i == 0 else str(c).rjust(widths[i]) for i, c in enumerate(cells)]
        return "  ".join(parts).rstrip()

    rule = "  ".join("-" * w for w in widths)
    return "\n".join([line(header), rule] + [line(r) for r in rows])


def summary_text(summary: DescriptiveSummary) -> str:
    blocks = []
    for s in summary.strata:
        title = "All rows" if not s.key else ", ".join(f"{k}={v}" for k, v in s.key.items())
        num_rows, cat_rows = [], []
        for v in s.variables.values():
            label = summary.labels.get(v.variable, v.variable)
            if v.cls in ("integer", "double"):
                num_rows.append([label, str(v.n), str(v.n_missing), _num(v.mean), _num(v.sd), _num(v.min), _num(v.max)])
            elif v.levels is not None:
                lv = ", ".join(f"{k}: {c}" for k, c in v.levels.items())
                cat_rows.append([label, str(v.n), str(v.n_missing), lv])
        parts = [f"{title} (n = {s.n_rows})"]
        if num_rows:
            parts.append(format_table(["variable", "n", "missing", "mean", "sd", "min", "max"], num_rows))
        if cat_rows:
            parts.append(format_table(["variable", "n", "missing", "levels"], cat_rows))
        blocks.append("\n\n".join(parts))
    return "\n\n".join(blocks) + "\n"
