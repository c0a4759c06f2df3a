"""Out-of-sample utility prediction and QALY calculation."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .data.table import ValidatedDataset, is_missing
from .errors import CompatibilityError, QalyError
from .mapping.evaluate import design_from_terms
from .mapping.models import FittedModel, Term, default_terms

DAYS_PER_YEAR = 365.25


def default_variable_map(model: FittedModel) -> dict[str, str]:
    """Map every coefficient to the column it was trained on."""
    return {t.name: t.variable for t in _terms(model) if t.variable is not None}


def _terms(model: FittedModel) -> tuple[Term, ...]:
    return model.terms or default_terms(model.names)


@dataclass(frozen=True)
class CompatibilityReport:
    issues: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.issues


def check_compatibility(model: FittedModel, newdata: ValidatedDataset, variable_map: Mapping[str, str]) -> CompatibilityReport:
    """List every reason ``model`` cannot be applied to ``newdata`` via ``variable_map``."""
    issues = []
    for t in _terms(model):
        if t.variable is None:
            continue
        col = variable_map.get(t.name)
        if col is None:
            issues.append(f"coefficient {t.name} has no source column")
            continue
        if col not in newdata.table.columns:
            issues.append(f"coefficient {t.name}: column '{col}' not found in new data")
            continue
        cls = newdata.dictionary[col].cls
        if t.level is None and cls not in ("integer", "double"):
            issues.append(f"coefficient {t.name}: column '{col}' is {cls}, expected numeric")
        elif t.level is not None:
            if cls != "categorical":
                issues.append(f"coefficient {t.name}: column '{col}' is {cls}, expected categorical")
            elif t.level not in newdata.dictionary[col].allowed_set:
                issues.append(f"coefficient {t.name}: level '{t.level}' is not allowed in column '{col}'")
    return CompatibilityReport(tuple(issues))


@dataclass(frozen=True)
class PredictionRequest:
    model: FittedModel
    newdata: ValidatedDataset
    variable_map: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class Predictions:
    uid: np.ndarray
    round: np.ndarray | None
    predicted: np.ndarray
    clamped: np.ndarray
    bounds: tuple[float, float] | None

    @property
    def clamp_count(self) -> int:
        return int(self.clamped.sum())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["uid", "round", "predicted_utility", "clamped"])
        for i in range(len(self.predicted)):
            rnd = "" if self.round is None or is_missing(self.round[i]) else _label(self.round[i])
            p = self.predicted[i]
            w.writerow([_label(self.uid[i]), rnd, "NA" if math.isnan(p) else format(p, ".17g"), int(self.clamped[i])])
        return buf.getvalue()


def _label(v) -> str:
    if isinstance(v, (float, np.floating)) and float(v).is_integer():
        return str(int(v))
    return str(v)


def predict_utility(request: PredictionRequest, bounds: tuple[float, float] | None = None) -> Predictions:
    """Apply the model's linear predictor and inverse link/transform row by row.

    Predictions are clamped to ``bounds`` (default: the model's utility
    bounds) and every clamp is counted. Rows with a missing predictor get a
    missing prediction.
    """
    model, ds = request.model, request.newdata
    vmap = dict(request.variable_map) if request.variable_map else default_variable_map(model)
    report = check_compatibility(model, ds, vmap)
    if not report.ok:
        raise CompatibilityError(report)
    terms = _terms(model)
    columns = {}
    renamed = []
    for t in terms:
        if t.variable is None:
            renamed.append(t)
            continue
        src = vmap[t.name]
        columns[src] = ds.column(src)
        renamed.append(Term(t.name, src, t.level))
    if not columns:
        columns = {"__n__": np.zeros(ds.n_rows)}
    X, ok = design_from_terms(columns, renamed)
    pred = np.full(ds.n_rows, np.nan)
    pred[ok] = model.predict(X[ok])
    b = bounds if bounds is not None else model.utility_bounds
    clamped = np.zeros(ds.n_rows, dtype=bool)
    if b is not None:
        lo, hi = b
        clamped = ok & ((pred < lo) | (pred > hi))
        pred = np.where(clamped, np.clip(pred, lo, hi), pred)
    md = ds.metadata
    rnd = ds.column(md.round_var) if md.round_var else None
    return Predictions(ds.uids(), rnd, pred, clamped, b)


@dataclass(frozen=True)
class QalyRecord:
    uid: str
    u_start: float
    u_end: float
    t_start: float
    t_end: float
    qalys: float

    @property
    def days(self) -> float:
        return self.t_end - self.t_start


@dataclass(frozen=True)
class QalyResult:
    records: tuple[QalyRecord, ...]
    skipped: tuple[str, ...]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["uid", "u_start", "u_end", "days", "qalys"])
        for r in self.records:
            w.writerow([r.uid, format(r.u_start, ".17g"), format(r.u_end, ".17g"), format(r.days, ".17g"), format(r.qalys, ".17g")])
        return buf.getvalue()


def qalys(u_start: float, u_end: float, days: float) -> float:
    """Trapezoid QALYs between two utility measurements ``days`` apart."""
    return (u_start + u_end) / 2.0 * (days / DAYS_PER_YEAR)


def _as_day(t) -> float:
    if isinstance(t, np.datetime64):
        return math.nan if np.isnat(t) else float(t.astype("datetime64[D]").astype("int64"))
    return float(t) if t is not None else math.nan


def compute_qalys(uids: Sequence, rounds: Sequence, utilities: Sequence[float], times: Sequence, start_round, end_round) -> QalyResult:
    """QALYs per uid between ``start_round`` and ``end_round``.

    ``times`` are dates (``datetime64``) or day offsets. A uid lacking either
    round, or with a missing utility or time at either round, is skipped
    and listed in ``skipped``.
    """
    n = len(uids)
    if not (len(rounds) == len(utilities) == len(times) == n):
        raise QalyError("uids, rounds, utilities and times must have equal length")
    at: dict[str, dict[str, tuple[float, float]]] = {}
    order: list[str] = []
    s_key, e_key = _label(start_round), _label(end_round)
    for i in range(n):
        if is_missing(rounds[i]):
            continue
        uid, rnd = _label(uids[i]), _label(rounds[i])
        if rnd not in (s_key, e_key):
            continue
        if uid not in at:
            at[uid] = {}
            order.append(uid)
        if rnd in at[uid]:
            raise QalyError(f"uid {uid} has more than one record for round {rnd}")
        at[uid][rnd] = (float(utilities[i]), _as_day(times[i]))
    records, skipped = [], []
    for uid in order:
        pair = at[uid]
        if s_key not in pair or e_key not in pair:
            skipped.append(uid)
            continue
        (u0, t0), (u1, t1) = pair[s_key], pair[e_key]
        if any(math.isnan(x) for x in (u0, t0, u1, t1)):
            skipped.append(uid)
            continue
        if t1 <= t0:
            raise QalyError(f"uid {uid}: end time {t1:g} is not after start time {t0:g}")
        records.append(QalyRecord(uid, u0, u1, t0, t1, qalys(u0, u1, t1 - t0)))
    return QalyResult(tuple(records), tuple(skipped))


def qalys_from_predictions(pred: Predictions, ds: ValidatedDataset, time_var: str, start_round, end_round) -> QalyResult:
    if pred.round is None:
        raise QalyError("predictions carry no round variable; set round_var in the dataset metadata")
    return compute_qalys(pred.uid, pred.round, pred.predicted, ds.column(time_var), start_round, end_round)
