"""Candidate specification, design matrices, metrics and k-fold cross-validation."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..data.table import ValidatedDataset, is_missing
from ..errors import SpecificationError
from .fit import DEFAULT_EPSILON, fit_family
from .models import INTERCEPT, FittedModel, ModelFamily, Term


def _as_dataset(ds) -> ValidatedDataset:
    if isinstance(ds, ValidatedDataset):
        return ds
    if hasattr(ds, "as_dataset"):
        return ds.as_dataset()
    raise TypeError(f"expected a validated or scored dataset, got {type(ds).__name__}")


@dataclass(frozen=True)
class CandidateSpec:
    target: str
    predictors: tuple[str, ...]
    covariates: tuple[str, ...]
    families: tuple[ModelFamily, ...]
    folds: int = 5
    seed: int = 1
    cluster_var: str | None = None
    epsilon: float = DEFAULT_EPSILON

    def combinations(self) -> list[tuple[ModelFamily, str]]:
        """Every family crossed with every single predictor (covariates always included)."""
        return [(f, p) for f in self.families for p in self.predictors]

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "predictors": list(self.predictors),
            "covariates": list(self.covariates),
            "families": [f.to_dict() for f in self.families],
            "folds": self.folds,
            "seed": self.seed,
            "cluster_var": self.cluster_var,
            "epsilon": self.epsilon,
        }


def specify_candidates(
    ds,
    target: str,
    predictors: Sequence[str],
    covariates: Sequence[str] = (),
    families: Sequence[str | ModelFamily] = ("ols",),
    folds: int = 5,
    seed: int = 1,
    cluster_var: str | None = None,
    epsilon: float = DEFAULT_EPSILON,
) -> CandidateSpec:
    d = _as_dataset(ds)
    predictors, covariates = tuple(predictors), tuple(covariates)
    if target in predictors or target in covariates:
        raise SpecificationError("target cannot be a predictor")
    for name in (target,) + predictors + covariates:
        if name not in d.table.columns:
            raise SpecificationError(f"unknown variable '{name}'")
    if not d.dictionary[target].is_numeric:
        raise SpecificationError(f"target '{target}' must be numeric")
    for name in predictors + covariates:
        if d.dictionary[name].cls not in ("integer", "double", "categorical"):
            raise SpecificationError(f"'{name}' is {d.dictionary[name].cls}; predictors must be numeric or categorical")
    if not predictors:
        raise SpecificationError("at least one candidate predictor is required")
    dup = {v for v in predictors + covariates if (predictors + covariates).count(v) > 1}
    if dup:
        raise SpecificationError(f"variables listed more than once: {sorted(dup)}")
    if folds < 2:
        raise SpecificationError(f"folds must be at least 2, got {folds}")
    fams = tuple(f if isinstance(f, ModelFamily) else ModelFamily(f) for f in families)
    if not fams:
        raise SpecificationError("at least one model family is required")
    cluster_var = cluster_var or d.metadata.uid_var
    if cluster_var not in d.table.columns:
        raise SpecificationError(f"unknown cluster variable '{cluster_var}'")
    return CandidateSpec(target, predictors, covariates, fams, folds, seed, cluster_var, epsilon)


# -- design matrices ---------------------------------------------------------


def build_terms(ds: ValidatedDataset, variables: Sequence[str], rows: np.ndarray | None = None) -> tuple[Term, ...]:
    """Intercept, numeric terms, and treatment dummies for categorical levels.

    Only levels observed in ``rows`` get a dummy; the first observed level is
    the reference.
    """
    terms = [Term(INTERCEPT)]
    for v in variables:
        e = ds.dictionary[v]
        if e.is_numeric:
            terms.append(Term(v, v))
        elif e.cls == "categorical":
            col = ds.column(v) if rows is None else ds.column(v)[rows]
            seen = {x for x in col if not is_missing(x)}
            levels = [lvl for lvl in e.allowed_set if lvl in seen]
            terms.extend(Term(f"{v}[{lvl}]", v, lvl) for lvl in levels[1:])
        else:
            raise SpecificationError(f"'{v}' is {e.cls}; cannot enter a design matrix")
    return tuple(terms)


def design_from_terms(columns: Mapping[str, np.ndarray], terms: Sequence[Term], rows: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Build ``X`` for ``terms``; returns ``(X, complete_mask)``.

    ``columns`` maps each term's *variable* to a value vector. Rows with a
    missing value in any used variable are flagged incomplete (their X rows
    hold NaN).
    """
    n = len(next(iter(columns.values()))) if rows is None else len(rows)
    X = np.empty((n, len(terms)))
    ok = np.ones(n, dtype=bool)
    for j, t in enumerate(terms):
        if t.variable is None:
            X[:, j] = 1.0
            continue
        col = columns[t.variable]
        if rows is not None:
            col = col[rows]
        if t.level is None:
            x = np.asarray(col, dtype=float)
            X[:, j] = x
            ok &= ~np.isnan(x)
        else:
            miss = np.array([is_missing(v) for v in col], dtype=bool)
            X[:, j] = np.where(miss, np.nan, np.array([v == t.level for v in col], dtype=float))
            ok &= ~miss
    return X, ok


def complete_rows(ds: ValidatedDataset, variables: Sequence[str]) -> np.ndarray:
    ok = np.ones(ds.n_rows, dtype=bool)
    for v in variables:
        col = ds.column(v)
        if ds.dictionary[v].is_numeric:
            ok &= ~np.isnan(np.asarray(col, dtype=float))
        else:
            ok &= np.array([not is_missing(x) for x in col], dtype=bool)
    return np.flatnonzero(ok)


# -- descriptive helpers -----------------------------------------------------


def correlation_matrix(ds, variables: Sequence[str]) -> np.ndarray:
    """Pairwise-complete Pearson correlations.

    NaN marks an undefined correlation (a variable with no spread over the
    pairwise-complete rows), including on the diagonal for such a variable.
    """
    d = _as_dataset(ds)
    cols = []
    for v in variables:
        if v not in d.table.columns:
            raise SpecificationError(f"unknown variable '{v}'")
        if not d.dictionary[v].is_numeric:
            raise SpecificationError(f"'{v}' is {d.dictionary[v].cls}; correlations need numeric variables")
        cols.append(np.asarray(d.column(v), dtype=float))
    return _pairwise_corr(cols, list(variables))


def _pairwise_corr(cols: list[np.ndarray], names: list[str]) -> np.ndarray:
    k = len(cols)
    R = np.full((k, k), np.nan)
    for i in range(k):
        for j in range(i, k):
            both = ~np.isnan(cols[i]) & ~np.isnan(cols[j])
            if both.sum() < 3:
                raise SpecificationError(f"fewer than 3 complete pairs for '{names[i]}' and '{names[j]}'")
            dx = cols[i][both] - cols[i][both].mean()
            dy = cols[j][both] - cols[j][both].mean()
            sxx, syy = float(dx @ dx), float(dy @ dy)
            if sxx == 0.0 or syy == 0.0:
                r = math.nan
            elif i == j:
                r = 1.0
            else:
                r = float(np.clip((dx @ dy) / math.sqrt(sxx * syy), -1.0, 1.0))
            R[i, j] = R[j, i] = r
    return R


@dataclass(frozen=True)
class Metrics:
    r2: float
    rmse: float
    mae: float

    def to_dict(self) -> dict:
        return {"R2": self.r2, "RMSE": self.rmse, "MAE": self.mae}


def compute_metrics(observed, predicted) -> Metrics:
    """R2 = 1 - SSE/SST, RMSE, MAE. R2 is NaN when ``observed`` is constant."""
    o = np.asarray(observed, dtype=float)
    p = np.asarray(predicted, dtype=float)
    if o.shape != p.shape or o.ndim != 1:
        raise SpecificationError("observed and predicted must be equal-length vectors")
    if len(o) < 2:
        raise SpecificationError("need at least 2 observations for metrics")
    e = o - p
    sse = float(e @ e)
    sst = float(np.sum((o - o.mean()) ** 2))
    r2 = 1.0 - sse / sst if sst > 0 else math.nan
    return Metrics(r2, math.sqrt(sse / len(o)), float(np.mean(np.abs(e))))


# -- folds -------------------------------------------------------------------


def fold_assignment(n: int, k: int, seed: int) -> np.ndarray:
    """Seeded balanced partition of ``n`` rows into ``k`` folds (sizes differ by at most 1)."""
    if k < 2:
        raise SpecificationError(f"k must be at least 2, got {k}")
    if n < 2 * k:
        raise SpecificationError(f"need at least 2k = {2 * k} rows for {k} folds, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    folds = np.empty(n, dtype=int)
    folds[perm] = np.arange(n) % k
    return folds


def cluster_fold_assignment(cluster, k: int, seed: int) -> np.ndarray:
    """Folds over whole clusters: cluster counts per fold differ by at most 1."""
    cluster = np.asarray(cluster)
    keys = cluster.astype(str) if cluster.dtype == object else cluster
    uniq, inv = np.unique(keys, return_inverse=True)
    g = len(uniq)
    if g < k:
        raise SpecificationError(f"need at least {k} clusters for {k} folds, got {g}")
    perm = np.random.default_rng(seed).permutation(g)
    cf = np.empty(g, dtype=int)
    cf[perm] = np.arange(g) % k
    return cf[inv.ravel()]


# -- cross-validation --------------------------------------------------------


@dataclass(frozen=True)
class PerformanceRecord:
    family: str
    predictors: tuple[str, ...]
    covariates: tuple[str, ...]
    in_sample: Metrics
    cv: Metrics
    fold_r2: tuple[float, ...]
    fold_rmse: tuple[float, ...]
    fold_mae: tuple[float, ...]
    model: FittedModel | None = field(default=None, compare=False)

    @property
    def n_folds(self) -> int:
        return len(self.fold_rmse)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "predictors": list(self.predictors),
            "covariates": list(self.covariates),
            "r2_in": self.in_sample.r2,
            "rmse_in": self.in_sample.rmse,
            "mae_in": self.in_sample.mae,
            "r2_cv": self.cv.r2,
            "rmse_cv": self.cv.rmse,
            "mae_cv": self.cv.mae,
            "fold_r2": list(self.fold_r2),
            "fold_rmse": list(self.fold_rmse),
            "fold_mae": list(self.fold_mae),
        }

    @classmethod
    def from_dict(cls, d: Mapping, model: FittedModel | None = None) -> PerformanceRecord:
        from .._jsonio import as_float

        return cls(
            family=d["family"],
            predictors=tuple(d["predictors"]),
            covariates=tuple(d["covariates"]),
            in_sample=Metrics(as_float(d["r2_in"]), as_float(d["rmse_in"]), as_float(d["mae_in"])),
            cv=Metrics(as_float(d["r2_cv"]), as_float(d["rmse_cv"]), as_float(d["mae_cv"])),
            fold_r2=tuple(as_float(x) for x in d["fold_r2"]),
            fold_rmse=tuple(as_float(x) for x in d["fold_rmse"]),
            fold_mae=tuple(as_float(x) for x in d["fold_mae"]),
            model=model,
        )


def _target_bounds(ds: ValidatedDataset, target: str) -> tuple[float, float] | None:
    e = ds.dictionary[target]
    if e.min is None or e.max is None:
        return None
    return (float(e.min), float(e.max))


def fit_candidate(ds: ValidatedDataset, spec: CandidateSpec, family: ModelFamily, variables: Sequence[str], rows: np.ndarray) -> FittedModel:
    """Fit one family on ``rows`` of ``ds``; returns a record-free model."""
    terms = build_terms(ds, variables, rows)
    X, _ = design_from_terms(ds.table.columns, terms, rows)
    y = np.asarray(ds.column(spec.target), dtype=float)[rows]
    cluster = ds.column(spec.cluster_var)[rows] if family.kind == "lmm_random_intercept" else None
    m = fit_family(family, y, X, [t.name for t in terms], cluster=cluster, epsilon=spec.epsilon)
    return m.with_metadata(terms=terms, target=spec.target, utility_bounds=_target_bounds(ds, spec.target)).strip()


def _mean(xs: Sequence[float]) -> float:
    return float(np.mean(xs)) if not any(math.isnan(x) for x in xs) else math.nan


def cross_validate(ds, spec: CandidateSpec, threads: int = 1) -> list[PerformanceRecord]:
    """Evaluate every family x predictor combination by seeded k-fold CV.

    Rows with a missing target, predictor or covariate are dropped up front
    so every combination is scored on the same rows. Row-level folds are
    used for fixed-effect families; the mixed model is split by cluster.
    Records come back sorted by CV RMSE, ties kept in declared family and
    predictor order.
    """
    d = _as_dataset(ds)
    needed = [spec.target, *spec.predictors, *spec.covariates, spec.cluster_var]
    rows = complete_rows(d, needed)
    k = spec.folds
    n = len(rows)
    if n < 2 * k:
        raise SpecificationError(f"need at least 2k = {2 * k} complete rows for {k} folds, got {n}")
    row_folds = fold_assignment(n, k, spec.seed)
    clus_folds = None
    if any(f.kind == "lmm_random_intercept" for f in spec.families):
        clus_folds = cluster_fold_assignment(d.column(spec.cluster_var)[rows], k, spec.seed)
    y_all = np.asarray(d.column(spec.target), dtype=float)

    def evaluate(family: ModelFamily, predictor: str) -> PerformanceRecord:
        variables = [predictor, *spec.covariates]
        folds = clus_folds if family.kind == "lmm_random_intercept" else row_folds

        def one_fold(f: int) -> Metrics:
            train, test = rows[folds != f], rows[folds == f]
            m = fit_candidate(d, spec, family, variables, train)
            X, _ = design_from_terms(d.table.columns, m.terms, test)
            return compute_metrics(y_all[test], m.predict(X, clamp=True))

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                per_fold = list(pool.map(one_fold, range(k)))
        else:
            per_fold = [one_fold(f) for f in range(k)]
        full = fit_candidate(d, spec, family, variables, rows)
        X, _ = design_from_terms(d.table.columns, full.terms, rows)
        ins = compute_metrics(y_all[rows], full.predict(X, clamp=True))
        fr2 = tuple(m.r2 for m in per_fold)
        frm = tuple(m.rmse for m in per_fold)
        fma = tuple(m.mae for m in per_fold)
        return PerformanceRecord(
            family.kind, (predictor,), tuple(spec.covariates), ins,
            Metrics(_mean(fr2), _mean(frm), _mean(fma)), fr2, frm, fma, full,
        )

    records = [evaluate(f, p) for f, p in spec.combinations()]
    # stable sort keeps declared order on ties
    return sorted(records, key=lambda r: _nan_last(r.cv.rmse))


def select_models(records: Sequence[PerformanceRecord], n: int = 1, metric: str = "rmse_cv") -> list[PerformanceRecord]:
    """The ``n`` best records by ``metric`` (lower is better except for R2)."""
    key = {
        "rmse_cv": lambda r: r.cv.rmse,
        "mae_cv": lambda r: r.cv.mae,
        "r2_cv": lambda r: -r.cv.r2,
        "rmse_in": lambda r: r.in_sample.rmse,
    }.get(metric)
    if key is None:
        raise SpecificationError(f"unknown selection metric '{metric}'")
    return sorted(records, key=lambda r: _nan_last(key(r)))[:n]


def _nan_last(x: float) -> tuple[bool, float]:
    return (math.isnan(x), 0.0 if math.isnan(x) else x)
