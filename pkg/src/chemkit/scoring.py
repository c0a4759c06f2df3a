"""Multi-attribute instrument definitions and utility scoring engines.

Two parameter-file driven engines are provided:

* ``additive_decrement`` (EQ-5D style): ``utility = anchor - sum(decrement[item][level])``
* ``multiplicative_domain`` (AQoL style): item disutilities combine
  multiplicatively within a domain, weighted domain disutilities combine
  multiplicatively overall, and a global scale maps the result to utility.

Published value sets are not shipped; supply coefficients in the
instrument file. Custom engines can be registered with
:func:`register_scorer`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from . import _jsonio
from .data.dictionary import DictionaryEntry
from .data.table import ValidatedDataset, validate_dataset, RawTable
from .errors import InstrumentError, ScoringError

ENGINES = ("additive_decrement", "multiplicative_domain", "custom")

_CUSTOM_SCORERS: dict[str, Callable[[Sequence[int], Mapping[str, Any]], float]] = {}


def register_scorer(name: str, fn: Callable[[Sequence[int], Mapping[str, Any]], float]) -> None:
    """Register ``fn(levels, params) -> utility`` for instruments with ``engine="custom"``."""
    _CUSTOM_SCORERS[name] = fn


@dataclass(frozen=True)
class Item:
    item_id: str
    variable: str
    levels: int


@dataclass(frozen=True)
class Domain:
    domain_id: str
    item_ids: tuple[str, ...]


def _as_matrix(rows, what: str) -> tuple[np.ndarray, ...]:
    try:
        return tuple(np.asarray(r, dtype=float) for r in rows)
    except (TypeError, ValueError):
        raise InstrumentError(f"{what} must be a list of numeric vectors") from None


@dataclass(frozen=True)
class InstrumentDefinition:
    name: str
    version: str
    country: str
    items: tuple[Item, ...]
    domains: tuple[Domain, ...]
    engine: str
    params: Mapping[str, Any]
    utility_bounds: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        items = tuple(self.items)
        domains = tuple(self.domains)
        object.__setattr__(self, "items", items)
        object.__setattr__(self, "domains", domains)
        ids = [it.item_id for it in items]
        if not items:
            raise InstrumentError(f"instrument '{self.name}' has no items")
        if len(set(ids)) != len(ids):
            raise InstrumentError("item ids must be unique")
        for it in items:
            if it.levels < 2:
                raise InstrumentError(f"item {it.item_id}: needs at least 2 levels, got {it.levels}")
        owner: dict[str, str] = {}
        for d in domains:
            if not d.item_ids:
                raise InstrumentError(f"domain {d.domain_id} is empty")
            for iid in d.item_ids:
                if iid not in ids:
                    raise InstrumentError(f"domain {d.domain_id}: unknown item '{iid}'")
                if iid in owner:
                    raise InstrumentError(f"item {iid} belongs to domains {owner[iid]} and {d.domain_id}")
                owner[iid] = d.domain_id
        orphans = [i for i in ids if i not in owner]
        if orphans:
            raise InstrumentError(f"items not assigned to any domain: {', '.join(orphans)}")
        lo, hi = (float(b) for b in self.utility_bounds)
        if hi != 1.0:
            raise InstrumentError(f"upper utility bound must be 1.0 (full health), got {hi}")
        if not lo < hi:
            raise InstrumentError(f"lower utility bound {lo} must be below 1.0")
        object.__setattr__(self, "utility_bounds", (lo, hi))
        if self.engine not in ENGINES:
            raise InstrumentError(f"unknown engine '{self.engine}'; expected one of {', '.join(ENGINES)}")
        object.__setattr__(self, "params", self._checked_params(dict(self.params)))

    def _checked_params(self, p: dict) -> dict:
        n = len(self.items)
        if self.engine == "additive_decrement":
            if "decrements" not in p:
                raise InstrumentError("additive engine needs params.decrements (items x levels)")
            dec = _as_matrix(p["decrements"], "decrements")
            if len(dec) != n:
                raise InstrumentError(f"decrements has {len(dec)} rows for {n} items")
            for it, row in zip(self.items, dec):
                if len(row) != it.levels:
                    raise InstrumentError(f"item {it.item_id}: {len(row)} decrements for {it.levels} levels")
                if not np.all(np.isfinite(row)):
                    raise InstrumentError(f"item {it.item_id}: decrements must be finite")
                if row[0] != 0.0:
                    raise InstrumentError(f"item {it.item_id}: decrement at level 1 must be 0, got {row[0]}")
            return {"decrements": dec, "anchor": float(p.get("anchor", 1.0))}
        if self.engine == "multiplicative_domain":
            for key in ("item_weights", "domain_weights"):
                if key not in p:
                    raise InstrumentError(f"multiplicative engine needs params.{key}")
            w = _as_matrix(p["item_weights"], "item_weights")
            if len(w) != n:
                raise InstrumentError(f"item_weights has {len(w)} rows for {n} items")
            for it, row in zip(self.items, w):
                if len(row) != it.levels:
                    raise InstrumentError(f"item {it.item_id}: {len(row)} weights for {it.levels} levels")
                if np.any(~np.isfinite(row)) or np.any(row < 0) or np.any(row > 1):
                    raise InstrumentError(f"item {it.item_id}: disutility weights must lie in [0, 1]")
                if row[0] != 0.0:
                    raise InstrumentError(f"item {it.item_id}: weight at level 1 must be 0, got {row[0]}")
            k = np.asarray(p["domain_weights"], dtype=float)
            if k.shape != (len(self.domains),):
                raise InstrumentError(f"domain_weights needs {len(self.domains)} values, got {k.size}")
            if np.any(~np.isfinite(k)) or np.any(k < 0) or np.any(k > 1):
                raise InstrumentError("domain weights must lie in [0, 1]")
            scale = float(p.get("scale", 1.0))
            if not math.isfinite(scale) or scale < 0:
                raise InstrumentError(f"scale must be a nonnegative number, got {scale}")
            return {"item_weights": w, "domain_weights": k, "scale": scale}
        if "scorer" not in p:
            raise InstrumentError("custom engine needs params.scorer naming a registered scorer")
        return p

    @property
    def item_ids(self) -> list[str]:
        return [it.item_id for it in self.items]

    def domain_indices(self) -> list[list[int]]:
        pos = {iid: i for i, iid in enumerate(self.item_ids)}
        return [[pos[i] for i in d.item_ids] for d in self.domains]

    def best_state(self) -> tuple[int, ...]:
        return tuple(1 for _ in self.items)

    def utility(self, state: Sequence[int]) -> float:
        """Score one response vector with this instrument's engine, clamped to bounds.

        Custom scorers are not clamped: a result outside the bounds is an error.
        """
        u = self._raw_utility(state)
        if self.engine == "custom":
            lo, hi = self.utility_bounds
            if not lo <= u <= hi:
                raise ScoringError(f"custom scorer '{self.params['scorer']}' returned {u}, outside {list(self.utility_bounds)}")
            return u
        return _clamp(u, self.utility_bounds)[0]

    def _raw_utility(self, state: Sequence[int]) -> float:
        p = self.params
        if self.engine == "additive_decrement":
            return score_additive(state, p["decrements"], p["anchor"], self.item_ids)
        if self.engine == "multiplicative_domain":
            return score_multiplicative(state, p["item_weights"], self.domain_indices(), p["domain_weights"], p["scale"], item_ids=self.item_ids)
        return _custom(self, state)

    def to_dict(self) -> dict:
        p = dict(self.params)
        for key in ("decrements", "item_weights"):
            if key in p:
                p[key] = [list(map(float, r)) for r in p[key]]
        if "domain_weights" in p:
            p["domain_weights"] = [float(x) for x in p["domain_weights"]]
        return {
            "name": self.name,
            "version": self.version,
            "country": self.country,
            "items": [{"item_id": i.item_id, "variable": i.variable, "levels": i.levels} for i in self.items],
            "domains": [{"domain_id": d.domain_id, "item_ids": list(d.item_ids)} for d in self.domains],
            "engine": self.engine,
            "params": p,
            "utility_bounds": list(self.utility_bounds),
        }

    def to_json(self) -> str:
        return _jsonio.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: Mapping) -> InstrumentDefinition:
        try:
            return cls(
                name=d["name"],
                version=str(d.get("version", "")),
                country=d.get("country", ""),
                items=tuple(Item(str(i["item_id"]), i["variable"], int(i["levels"])) for i in d["items"]),
                domains=tuple(Domain(str(x["domain_id"]), tuple(str(y) for y in x["item_ids"])) for x in d["domains"]),
                engine=d["engine"],
                params=d.get("params", {}),
                utility_bounds=tuple(d.get("utility_bounds", (0.0, 1.0))),
            )
        except KeyError as exc:
            raise InstrumentError(f"instrument file missing field {exc}") from None


def load_instrument(text: str) -> InstrumentDefinition:
    return InstrumentDefinition.from_dict(_jsonio.loads(text))


def _clamp(u: float, bounds: tuple[float, float]) -> tuple[float, bool]:
    lo, hi = bounds
    if u < lo:
        return lo, True
    if u > hi:
        return hi, True
    return u, False


def _check_level(level, levels: int, item_id: str) -> int:
    if isinstance(level, float) and not level.is_integer():
        raise ScoringError(f"item {item_id}: level {level} is not an integer")
    lv = int(level)
    if lv < 1 or lv > levels:
        raise ScoringError(f"item {item_id}: level {lv} outside [1, {levels}]")
    return lv


def score_additive(state: Sequence[int], decrements, anchor: float = 1.0, item_ids: Sequence[str] | None = None) -> float:
    """``anchor`` minus the summed per-item decrements for ``state``."""
    dec = [np.asarray(r, dtype=float) for r in decrements]
    if len(state) != len(dec):
        raise ScoringError(f"state has {len(state)} items, parameters have {len(dec)}")
    ids = list(item_ids) if item_ids is not None else [str(i + 1) for i in range(len(dec))]
    total = 0.0
    for iid, level, row in zip(ids, state, dec):
        if row[0] != 0.0:
            raise ScoringError(f"item {iid}: decrement at level 1 must be 0")
        lv = _check_level(level, len(row), iid)
        total += float(row[lv - 1])
    return anchor - total


def score_multiplicative(
    state: Sequence[int],
    item_weights,
    domains: Sequence[Sequence[int]],
    domain_weights: Sequence[float],
    scale: float = 1.0,
    bounds: tuple[float, float] | None = None,
    item_ids: Sequence[str] | None = None,
) -> float:
    """Multiplicative domain model.

    ``domain_dis = 1 - prod(1 - w_item(level))``;
    ``overall = 1 - prod(1 - k_d * domain_dis)``;
    ``utility = 1 - scale * overall``, clamped to ``bounds`` when given.
    """
    w = [np.asarray(r, dtype=float) for r in item_weights]
    if len(state) != len(w):
        raise ScoringError(f"state has {len(state)} items, parameters have {len(w)}")
    ids = list(item_ids) if item_ids is not None else [str(i + 1) for i in range(len(w))]
    levels = [_check_level(lv, len(w[i]), ids[i]) for i, lv in enumerate(state)]
    q = 1.0
    for dom, k in zip(domains, domain_weights):
        p = 1.0
        for i in dom:
            p *= 1.0 - float(w[i][levels[i] - 1])
        q *= 1.0 - float(k) * (1.0 - p)
    u = 1.0 - float(scale) * (1.0 - q)
    if bounds is not None:
        u = _clamp(u, bounds)[0]
    return u


def _custom(inst: InstrumentDefinition, state: Sequence[int]) -> float:
    name = inst.params["scorer"]
    fn = _CUSTOM_SCORERS.get(name)
    if fn is None:
        raise ScoringError(f"no custom scorer registered under '{name}'")
    for it, lv in zip(inst.items, state):
        _check_level(lv, it.levels, it.item_id)
    return float(fn(tuple(int(x) for x in state), inst.params))


@dataclass(frozen=True)
class InstrumentBinding:
    dataset: ValidatedDataset
    instrument: InstrumentDefinition


def attach_instrument(ds: ValidatedDataset, inst: InstrumentDefinition) -> InstrumentBinding:
    """Check that every item maps onto an integer column with range inside ``[1, levels]``."""
    problems = []
    for it in inst.items:
        if it.variable not in ds.table.columns:
            problems.append(f"item {it.item_id}: column '{it.variable}' not found")
            continue
        e = ds.dictionary[it.variable]
        if e.cls != "integer":
            problems.append(f"item {it.item_id}: column '{it.variable}' is {e.cls}, expected integer")
            continue
        lo = "-inf" if e.min is None else f"{e.min:g}"
        hi = "inf" if e.max is None else f"{e.max:g}"
        if e.min is None or e.max is None or e.min < 1 or e.max > it.levels:
            problems.append(f"item {it.item_id}: column '{it.variable}' range [{lo},{hi}] exceeds item levels {it.levels}")
    if problems:
        raise InstrumentError("; ".join(problems))
    return InstrumentBinding(ds, inst)


@dataclass(frozen=True)
class ScoredDataset:
    """Per-row item, domain and total scores alongside the source dataset.

    ``total_unweighted`` is the mean item level rescaled so the best level
    maps to 1 and the worst to 0. ``total_utility`` is the engine utility,
    clamped to the instrument bounds (``clamp_count`` rows were clamped).
    Weighted columns are ``None`` when scoring was run with ``weighted=False``.
    """

    base: ValidatedDataset
    instrument: InstrumentDefinition
    item_scores: dict[str, np.ndarray]
    domain_scores_unweighted: dict[str, np.ndarray]
    domain_scores_weighted: dict[str, np.ndarray] | None
    total_unweighted: np.ndarray
    total_utility: np.ndarray | None
    clamp_count: int = 0

    def score_columns(self) -> dict[str, tuple[np.ndarray, DictionaryEntry]]:
        inst = self.instrument
        lo = inst.utility_bounds[0]
        out: dict[str, tuple[np.ndarray, DictionaryEntry]] = {}
        for it in inst.items:
            out[f"score_{it.item_id}"] = (self.item_scores[it.item_id], DictionaryEntry(f"score_{it.item_id}", "integer", 1, it.levels, description=f"{inst.name} item {it.item_id}"))
        for d in inst.domains:
            name = f"domain_{d.domain_id}_unweighted"
            out[name] = (self.domain_scores_unweighted[d.domain_id], DictionaryEntry(name, "double", 0.0, 1.0, description=f"{inst.name} domain {d.domain_id}, unweighted"))
            if self.domain_scores_weighted is not None:
                name = f"domain_{d.domain_id}_weighted"
                out[name] = (self.domain_scores_weighted[d.domain_id], DictionaryEntry(name, "double", None, 1.0, description=f"{inst.name} domain {d.domain_id}, weighted"))
        out["total_unweighted"] = (self.total_unweighted, DictionaryEntry("total_unweighted", "double", 0.0, 1.0, description=f"{inst.name} unweighted total"))
        if self.total_utility is not None:
            out["total_utility"] = (self.total_utility, DictionaryEntry("total_utility", "double", lo, 1.0, description=f"{inst.name} utility"))
        return out

    @cached_property
    def _dataset(self) -> ValidatedDataset:
        base = self.base
        extra = self.score_columns()
        clash = [n for n in extra if n in base.table.columns]
        if clash:
            raise ScoringError(f"score columns clash with dataset columns: {clash}")
        cols = dict(base.table.columns)
        cols.update({n: np.array(v, dtype=float) for n, (v, _) in extra.items()})
        dictionary = base.dictionary.extended(e for _, e in extra.values())
        return validate_dataset(RawTable(cols), dictionary, base.metadata)

    def as_dataset(self) -> ValidatedDataset:
        """The base dataset with score columns appended (validated, immutable)."""
        return self._dataset


def _levels_matrix(ds: ValidatedDataset, inst: InstrumentDefinition) -> np.ndarray:
    return np.column_stack([np.asarray(ds.column(it.variable), dtype=float) for it in inst.items])


def score_dataset(binding: InstrumentBinding, weighted: bool = True) -> ScoredDataset:
    """Score every row. Any missing item gives missing domain and total scores."""
    ds, inst = binding.dataset, binding.instrument
    L = _levels_matrix(ds, inst)
    missing_row = np.isnan(L).any(axis=1)
    idx = np.where(np.isnan(L), 1, L).astype(int) - 1
    doms = inst.domain_indices()

    frac = np.column_stack([(it.levels - 1 - idx[:, j]) / (it.levels - 1) for j, it in enumerate(inst.items)])
    item_scores = {it.item_id: L[:, j].copy() for j, it in enumerate(inst.items)}
    dom_unw = {}
    for d, cols in zip(inst.domains, doms):
        v = frac[:, cols].mean(axis=1)
        v[np.isnan(L[:, cols]).any(axis=1)] = np.nan
        dom_unw[d.domain_id] = v
    total_unw = frac.mean(axis=1)
    total_unw[missing_row] = np.nan

    dom_w = None
    total = None
    clamps = 0
    if weighted:
        raw, dom_w = _weighted(inst, idx, doms)
        if dom_w is not None:
            for d, cols in zip(inst.domains, doms):
                dom_w[d.domain_id][np.isnan(L[:, cols]).any(axis=1)] = np.nan
        raw[missing_row] = np.nan
        lo, hi = inst.utility_bounds
        if inst.engine == "custom":
            bad = (~np.isnan(raw)) & ((raw < lo) | (raw > hi))
            if bad.any():
                r = int(np.flatnonzero(bad)[0])
                raise ScoringError(f"custom scorer '{inst.params['scorer']}' returned {raw[r]} at row {r + 1}, outside {list(inst.utility_bounds)}")
            total = raw
        else:
            below, above = raw < lo, raw > hi
            clamps = int(below.sum() + above.sum())
            total = np.where(below, lo, np.where(above, hi, raw))
    return ScoredDataset(ds, inst, item_scores, dom_unw, dom_w, total_unw, total, clamps)


def _weighted(inst: InstrumentDefinition, idx: np.ndarray, doms: list[list[int]]):
    n = idx.shape[0]
    p = inst.params
    if inst.engine == "additive_decrement":
        dec = p["decrements"]
        contrib = [dec[j][idx[:, j]] for j in range(len(dec))]
        s = np.zeros(n)
        for c in contrib:
            s = s + c
        dom_w = {}
        for d, cols in zip(inst.domains, doms):
            ds_ = np.zeros(n)
            for j in cols:
                ds_ = ds_ + contrib[j]
            dom_w[d.domain_id] = 1.0 - ds_
        return p["anchor"] - s, dom_w
    if inst.engine == "multiplicative_domain":
        w = p["item_weights"]
        q = np.ones(n)
        dom_w = {}
        for d, cols, k in zip(inst.domains, doms, p["domain_weights"]):
            prod = np.ones(n)
            for j in cols:
                prod = prod * (1.0 - w[j][idx[:, j]])
            dom_w[d.domain_id] = prod.copy()
            q = q * (1.0 - float(k) * (1.0 - prod))
        return 1.0 - p["scale"] * (1.0 - q), dom_w
    # custom: the anchor law is checked before trusting any row
    best = _custom(inst, inst.best_state())
    if best != 1.0:
        raise ScoringError(f"custom scorer '{inst.params['scorer']}' violates the anchor law: best state scores {best}")
    raw = np.array([_custom(inst, tuple(int(x) + 1 for x in row)) for row in idx], dtype=float)
    return raw, None
