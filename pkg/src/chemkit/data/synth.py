"""Shareable synthetic ("toy") versions of a validated dataset.

Numeric and date columns are drawn from their own empirical distribution
and then re-ordered so their ranks follow a bootstrap sample of source
rows, which carries the source's pairwise rank correlations over to the
output (rank coupling in the spirit of Iman and Conover). Categorical and
text columns are drawn from their empirical level frequencies. Only
observed values are ever emitted, so the output always re-validates.
"""

from __future__ import annotations

import numpy as np

from ..errors import SpecificationError
from .table import RawTable, ValidatedDataset, validate_dataset


def _stratified_draws(obs: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    """``m`` sorted draws from the empirical distribution of ``obs``.

    One draw per probability stratum ``[j/m, (j+1)/m)`` keeps the marginal
    much closer to the source than iid resampling does.
    """
    s = np.sort(obs)
    u = (np.arange(m) + rng.random(m)) / m
    idx = np.minimum((u * len(s)).astype(int), len(s) - 1)
    return s[idx]


def _rank_coupled(x: np.ndarray, template_rows: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    template = x[template_rows]
    present = ~np.isnan(template)
    out = np.full(len(template_rows), np.nan)
    m = int(present.sum())
    obs = x[~np.isnan(x)]
    if m == 0 or len(obs) == 0:
        return out
    draws = _stratified_draws(obs, m, rng)
    pos = np.flatnonzero(present)
    # random tie-break so tied template values do not always map to the same order
    order = np.lexsort((rng.random(m), template[pos]))
    out[pos[order]] = draws
    return out


def _fresh_uids(ds: ValidatedDataset, n_out: int, seed: int) -> np.ndarray:
    entry = ds.dictionary[ds.metadata.uid_var]
    src = ds.uids()
    if entry.is_numeric:
        used = {float(v) for v in src}
        lo = entry.min if entry.min is not None else 1.0
        hi = entry.max if entry.max is not None else np.inf
        start = max(lo, max(used) + 1.0) if used else lo
        out: list[float] = []
        taken = set(used)
        for begin in (start, lo):
            v = float(np.ceil(begin))
            while len(out) < n_out and v <= hi:
                if v not in taken:
                    out.append(v)
                    taken.add(v)
                v += 1.0
        if len(out) < n_out:
            raise SpecificationError(f"uid range {entry.describe_bound()} has no room for {n_out} fresh identifiers")
        return np.array(out)
    if entry.cls != "text":
        raise SpecificationError(f"cannot generate fresh identifiers for a {entry.cls} uid column")
    used_s = {str(v) for v in src}
    prefix = f"SYN{seed}-"
    while any(u.startswith(prefix) for u in used_s):
        prefix = "X" + prefix
    width = max(6, len(str(n_out)))
    return np.array([f"{prefix}{i + 1:0{width}d}" for i in range(n_out)], dtype=object)


def synthesize_dataset(ds: ValidatedDataset, n_out: int, seed: int) -> ValidatedDataset:
    """Generate ``n_out`` synthetic rows that validate under ``ds.dictionary``.

    Deterministic for a fixed ``seed``; no source uid appears in the output.
    """
    if n_out < 1:
        raise SpecificationError(f"n_out must be at least 1, got {n_out}")
    if ds.n_rows < 2:
        raise SpecificationError("need at least 2 source rows to synthesize")
    rng = np.random.default_rng(seed)
    template_rows = rng.integers(0, ds.n_rows, size=n_out)
    cols: dict[str, np.ndarray] = {}
    for name in ds.names:
        entry = ds.dictionary[name]
        x = ds.column(name)
        if name == ds.metadata.uid_var:
            cols[name] = _fresh_uids(ds, n_out, seed)
        elif entry.is_numeric:
            cols[name] = _rank_coupled(np.asarray(x, dtype=float), template_rows, rng)
        elif entry.cls == "date":
            days = x.astype("datetime64[D]").astype("int64").astype(float)
            days[np.isnat(x)] = np.nan
            d = _rank_coupled(days, template_rows, rng)
            out = np.full(n_out, np.datetime64("NaT"), dtype="datetime64[D]")
            ok = ~np.isnan(d)
            out[ok] = d[ok].astype("int64").astype("datetime64[D]")
            cols[name] = out
        else:
            pick = rng.integers(0, ds.n_rows, size=n_out)
            cols[name] = np.array(x[pick], dtype=object)
    return validate_dataset(RawTable(cols), ds.dictionary, ds.metadata)
