"""Acceptance suite: one test per criterion, each timed against its budget.

Run with ``pytest tests/test_acceptance.py -v``; the terminal summary ends
with one ``criterion N [PASS/FAIL]`` line per criterion.
"""

from __future__ import annotations

import json
import math
import random
import time

import numpy as np
import pytest
from oracles import (
    finite_difference_gradient,
    glm_newton,
    lmm_dense_loglik,
    lmm_grid_best,
    ols_normal_equations,
    trapezoid_qalys,
)

from chemkit import toydata
from chemkit.cli import SUBCOMMANDS, run_cli
from chemkit.core import VERBS, ModuleCollection, define_module, invoke
from chemkit.data import (
    DataDictionary,
    DatasetMetadata,
    DictionaryEntry,
    RawTable,
    ingest_table,
    load_dictionary,
    synthesize_dataset,
    validate_dataset,
)
from chemkit.errors import IntegrityError, UnsupportedVerbError, ValidationError
from chemkit.mapping import (
    FAMILY_KINDS,
    build_catalogue,
    cluster_fold_assignment,
    cross_validate,
    fit_glm_irls,
    fit_lmm_random_intercept,
    fit_ols,
    fold_assignment,
    glm_loglik,
    glm_score,
    inverse_transform,
    load_catalogue,
    specify_candidates,
)
from chemkit.predict import compute_qalys, qalys
from chemkit.registry import LocalRegistry
from chemkit.report import RUN_RECORD_NAME, load_manifest, run_manifest
from chemkit.scoring import attach_instrument, load_instrument, score_additive, score_dataset

META = DatasetMetadata("uid", "round", "group")


class Budget:
    """Context manager asserting the wrapped block finishes within ``seconds``."""

    def __init__(self, seconds: float):
        self.seconds = seconds

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, *exc):
        self.elapsed = time.perf_counter() - self.t0
        if exc_type is None:
            assert self.elapsed < self.seconds, f"took {self.elapsed:.2f} s, budget {self.seconds} s"


# -- 1 ------------------------------------------------------------------------


@pytest.mark.criterion(1, "verb/syntax: 15 verbs, CLI mapping, unsupported-verb errors")
def test_criterion_1_verbs():
    with Budget(5):
        assert len(VERBS) == 15 and len(set(VERBS)) == 15
        for sub, (module, verb) in SUBCOMMANDS.items():
            assert verb in VERBS, sub
        rng = random.Random(1)
        for i in range(100):
            supported = sorted(rng.sample(VERBS, rng.randint(1, 14)), key=VERBS.index)
            coll = ModuleCollection()
            coll.add(define_module(f"m{i}", {"x": "number"}, supported))
            verb = rng.choice([v for v in VERBS if v not in supported])
            with pytest.raises(UnsupportedVerbError) as ei:
                invoke(coll.instantiate(f"m{i}", x=1), verb)
            assert str(ei.value) == f"module 'm{i}' supports: {', '.join(supported)}"


# -- 2 ------------------------------------------------------------------------

PLANTS = [
    ("age", "99", "age: value 99 at row {r} outside [12, 25]"),
    ("age", "5", "age: value 5 at row {r} outside [12, 25]"),
    ("age", "17.5", "age: value '17.5' at row {r} is not a valid integer (permitted [12, 25])"),
    ("k6", "25", "k6: value 25 at row {r} outside [0, 24]"),
    ("k6", "-1", "k6: value -1 at row {r} outside [0, 24]"),
    ("phq9", "28", "phq9: value 28 at row {r} outside [0, 27]"),
    ("sofas", "101", "sofas: value 101 at row {r} outside [0, 100]"),
    ("eq1", "6", "eq1: value 6 at row {r} outside [1, 5]"),
    ("eq3", "0", "eq3: value 0 at row {r} outside [1, 5]"),
    ("sex", "Z", "sex: value 'Z' at row {r} not in {{F, M, X}}"),
    ("group", "placebo", "group: value 'placebo' at row {r} not in {{control, intervention}}"),
    ("date", "2024-13-40", "date: value '2024-13-40' at row {r} is not a valid date (permitted ISO yyyy-mm-dd)"),
]


@pytest.mark.criterion(2, "validation: clean toy accepted, 12 planted violations rejected, CLI exit 2")
def test_criterion_2_validation(toy_dir, capsys):
    with Budget(5):
        text = (toy_dir / "toy_records.csv").read_text()
        dictionary = load_dictionary((toy_dir / "toy_dictionary.csv").read_text())
        ds = validate_dataset(ingest_table(text), dictionary, META)
        assert ds.n_rows >= 200 and len(ds.names) >= 8
        lines = text.splitlines()
        header = lines[0].split(",")
        for i, (var, value, expected) in enumerate(PLANTS):
            row = 4 + 7 * i
            bad = list(lines)
            cells = bad[row].split(",")
            cells[header.index(var)] = value
            bad[row] = ",".join(cells)
            with pytest.raises(ValidationError) as ei:
                validate_dataset(ingest_table("\n".join(bad) + "\n"), dictionary, META)
            assert ei.value.violations == [expected.format(r=row)]
            if i in (0, 9):
                path = toy_dir / f"bad{i}.csv"
                path.write_text("\n".join(bad) + "\n")
                capsys.readouterr()
                code = run_cli(["validate", "--data", str(path), "--dict", str(toy_dir / "toy_dictionary.csv"), "--uid", "uid"])
                assert code == 2
                assert expected.format(r=row) in capsys.readouterr().err


# -- 3 ------------------------------------------------------------------------


def _random_instrument(rng: np.random.Generator, engine: str) -> dict:
    n_items = int(rng.integers(1, 8))
    levels = [int(rng.integers(2, 7)) for _ in range(n_items)]
    ids = [f"I{j + 1}" for j in range(n_items)]
    n_dom = int(rng.integers(1, n_items + 1))
    cut = sorted(rng.choice(np.arange(1, n_items), size=n_dom - 1, replace=False).tolist()) if n_dom > 1 else []
    bounds = [0, *cut, n_items]
    domains = [{"domain_id": f"D{d}", "item_ids": ids[bounds[d]:bounds[d + 1]]} for d in range(n_dom)]
    if engine == "additive_decrement":
        params = {"decrements": [[0.0, *np.cumsum(rng.uniform(0, 0.1, L - 1)).tolist()] for L in levels], "anchor": 1.0}
        ub = [float(-rng.uniform(0, 0.5)), 1.0]
    else:
        params = {
            "item_weights": [[0.0, *np.sort(rng.uniform(0, 1, L - 1)).tolist()] for L in levels],
            "domain_weights": rng.uniform(0, 1, n_dom).tolist(),
            "scale": float(rng.uniform(0.8, 1.2)),
        }
        ub = [float(-rng.uniform(0, 0.5)), 1.0]
    return {
        "name": f"R-{engine}", "version": "1", "country": "none",
        "items": [{"item_id": i, "variable": f"q{j + 1}", "levels": L} for j, (i, L) in enumerate(zip(ids, levels))],
        "domains": domains, "engine": engine, "params": params, "utility_bounds": ub,
    }


@pytest.mark.criterion(3, "scoring: anchor law, additive monotonicity, vectorized == scalar")
def test_criterion_3_scoring(toy_ds):
    with Budget(10):
        rng = np.random.default_rng(3)
        for k in range(50):
            for engine in ("additive_decrement", "multiplicative_domain"):
                inst = load_instrument(json.dumps(_random_instrument(rng, engine)))
                assert inst.utility(inst.best_state()) == 1.0
                n = 3
                cols = {"uid": [f"u{i}" for i in range(n)]}
                entries = [DictionaryEntry("uid", "text")]
                for it in inst.items:
                    cols[it.variable] = ["1"] * n
                    entries.append(DictionaryEntry(it.variable, "integer", 1, it.levels))
                ds = validate_dataset(RawTable.from_columns(cols), DataDictionary(tuple(entries)), DatasetMetadata("uid"))
                s = score_dataset(attach_instrument(ds, inst))
                assert np.all(s.total_utility == 1.0)
        for _ in range(1000):
            d = _random_instrument(rng, "additive_decrement")
            dec = d["params"]["decrements"]
            state = [int(rng.integers(1, len(r) + 1)) for r in dec]
            j = int(rng.integers(len(dec)))
            worse = list(state)
            worse[j] = min(worse[j] + int(rng.integers(1, 4)), len(dec[j]))
            assert score_additive(worse, dec) <= score_additive(state, dec)
        for name in ("toy_additive.json", "toy_multiplicative.json"):
            inst = load_instrument(toydata.path(name).read_text())
            s = score_dataset(attach_instrument(toy_ds, inst))
            levels = np.column_stack([toy_ds[it.variable] for it in inst.items]).astype(int)
            oracle = np.array([inst.utility(tuple(row)) for row in levels])
            assert np.array_equal(s.total_utility, oracle)


# -- 4 ------------------------------------------------------------------------


def _glm_case(seed: int, family: str):
    rng = np.random.default_rng(100 + seed)
    n = int(rng.integers(20, 60))
    p = int(rng.integers(2, 4))
    X = np.column_stack([np.ones(n), rng.uniform(0, 1, size=(n, p - 1))])
    beta = rng.uniform(-0.6, 0.2, size=p)
    mu = np.exp(X @ beta)
    y = rng.gamma(4.0, mu / 4.0) if family == "gamma" else np.abs(mu + 0.05 * rng.normal(size=n)) + 1e-3
    return y, X


@pytest.mark.criterion(4, "fitting: OLS orthogonality, IRLS vs Newton oracle, gradient check, LMM")
def test_criterion_4_fitting():
    with Budget(60):
        rng = np.random.default_rng(4)
        for _ in range(100):
            p = int(rng.integers(1, 7))
            n = int(rng.integers(p + 1, 201))
            X = np.column_stack([np.ones(n), rng.normal(size=(n, p - 1))])
            y = X @ rng.normal(size=p) + rng.normal(size=n)
            m = fit_ols(y, X)
            r = y - X @ m.beta
            assert np.max(np.abs(X.T @ r)) / (np.linalg.norm(X) * np.linalg.norm(y)) < 1e-8
        for family in ("gamma", "gaussian"):
            for seed in range(10):
                y, X = _glm_case(seed, family)
                m = fit_glm_irls(y, X, family)
                assert np.max(np.abs(m.beta - glm_newton(y, X, family))) < 1e-6, (family, seed)
                b = m.beta + 0.05
                fd = finite_difference_gradient(lambda t: glm_loglik(t, y, X, family), b)
                an = glm_score(b, y, X, family)
                assert np.max(np.abs(fd - an)) / max(1.0, np.max(np.abs(an))) < 1e-5
        for seed in range(5):
            g = np.random.default_rng(40 + seed)
            cl = np.repeat(np.arange(20), 4)
            e = g.normal(size=80)
            e -= np.bincount(cl, e)[cl] / 4  # zero between-cluster variance in the sample
            X = np.column_stack([np.ones(80), g.normal(size=80)])
            y = X @ np.array([0.6, 0.2]) + 0.1 * e
            m = fit_lmm_random_intercept(y, X, cl)
            assert np.max(np.abs(m.beta - ols_normal_equations(y, X))) < 1e-4
            ll = lmm_dense_loglik(m.beta, m.random_intercept_var, m.sigma**2, y, X, cl)
            assert ll >= lmm_grid_best(y, X, cl) - 1e-9
            # with a genuine random intercept the fit must still beat the grid
            y2 = y + 0.2 * g.normal(size=20)[cl] + 0.1 * g.normal(size=80)
            m2 = fit_lmm_random_intercept(y2, X, cl)
            ll2 = lmm_dense_loglik(m2.beta, m2.random_intercept_var, m2.sigma**2, y2, X, cl)
            assert ll2 >= lmm_grid_best(y2, X, cl) - 1e-9


# -- 5 ------------------------------------------------------------------------


@pytest.mark.criterion(5, "cross-validation: partition laws and double-run determinism")
def test_criterion_5_cv(toy_scored):
    with Budget(30):
        rng = random.Random(5)
        for _ in range(200):
            k = rng.randint(2, 10)
            n = rng.randint(2 * k, 500)
            seed = rng.randrange(2**32)
            f = fold_assignment(n, k, seed)
            counts = np.bincount(f, minlength=k)
            assert f.shape == (n,) and counts.sum() == n and np.all(counts > 0)
            assert counts.max() - counts.min() <= 1
            assert np.array_equal(f, fold_assignment(n, k, seed))
            n_cl = rng.randint(k, 60)
            cl = np.array([rng.randrange(n_cl) for _ in range(n)] + list(range(n_cl)))
            cf = cluster_fold_assignment(cl, k, seed)
            for c in range(n_cl):
                assert len(set(cf[cl == c].tolist())) == 1
            per = [len(set(cl[cf == j].tolist())) for j in range(k)]
            assert sum(per) == n_cl and max(per) - min(per) <= 1
        spec = specify_candidates(toy_scored, "total_utility", ["k6", "phq9", "sofas"], ["age", "sex"], FAMILY_KINDS, folds=5, seed=11)
        a = cross_validate(toy_scored, spec)
        b = cross_validate(toy_scored, spec)
        assert [r.to_dict() for r in a] == [r.to_dict() for r in b]
        assert [r.model.to_dict() for r in a] == [r.model.to_dict() for r in b]


# -- 6 ------------------------------------------------------------------------

SENTINELS = (0.7318093477129, 0.4159265358979, 0.2718281828459)


def _sentinel_dataset(n: int, seed: int):
    rng = np.random.default_rng(seed)
    x = np.round(rng.uniform(0, 10, n), 6)
    u = np.clip(0.9 - 0.05 * x + 0.05 * rng.normal(size=n), 0.01, 0.99)
    u[:3] = SENTINELS
    x[3] = 8.123456789123
    cols = {
        "uid": [f"SENTINEL-{i:05d}" for i in range(n)],
        "x": [repr(float(v)) for v in x],
        "u": [repr(float(v)) for v in u],
    }
    d = DataDictionary((DictionaryEntry("uid", "text"), DictionaryEntry("x", "double"), DictionaryEntry("u", "double", 0, 1)))
    return validate_dataset(RawTable.from_columns(cols), d, DatasetMetadata("uid"))


def _sentinel_catalogue(n: int):
    ds = _sentinel_dataset(n, 6)
    spec = specify_candidates(ds, "u", ["x"], families=FAMILY_KINDS[:5], folds=3, seed=1)
    return ds, build_catalogue(cross_validate(ds, spec), ds.validation_stamp, "none", "2024-01-01T00:00:00Z")


def _numeric_leaves(obj) -> int:
    if isinstance(obj, dict):
        return sum(_numeric_leaves(v) for v in obj.values())
    if isinstance(obj, list):
        return sum(_numeric_leaves(v) for v in obj)
    return 1


@pytest.mark.criterion(6, "catalogue: round-trip prediction, record-free scan, size independence")
def test_criterion_6_catalogue():
    with Budget(10):
        ds, cat = _sentinel_catalogue(120)
        text = cat.to_json()
        back = load_catalogue(text)
        X = np.column_stack([np.ones(50), np.linspace(0, 10, 50)])
        for a, b in zip(cat.models, back.models):
            assert np.max(np.abs(a.predict(X) - b.predict(X))) <= 1e-12
        raw = text.encode()
        for s in (*SENTINELS, 8.123456789123):
            for fmt in (repr(s), format(s, ".17g"), format(s, ".12g")):
                assert fmt.encode() not in raw, fmt
        assert b"SENTINEL-" not in raw
        _, big = _sentinel_catalogue(1200)
        small_d, big_d = json.loads(text), json.loads(big.to_json())
        assert _numeric_leaves(small_d) == _numeric_leaves(big_d)
        assert abs(len(big.to_json()) - len(text)) / len(text) < 0.05


# -- 7 ------------------------------------------------------------------------


@pytest.mark.criterion(7, "prediction/QALY: inverse-link and trapezoid hand cases, duration linearity")
def test_criterion_7_qalys():
    with Budget(5):
        assert inverse_transform(np.array([0.0]), "logit")[0] == 0.5
        assert inverse_transform(np.array([math.log(0.8)]), "log")[0] == pytest.approx(0.8, abs=1e-15)
        assert qalys(1.0, 1.0, 365.25) == 1.0
        assert abs(qalys(0.8, 0.6, 182.625) - 0.35) <= 1e-12
        rng = np.random.default_rng(7)
        n = 1000
        u0, u1 = rng.uniform(-0.2, 1, n), rng.uniform(-0.2, 1, n)
        t0 = rng.uniform(0, 100, n)
        dur = rng.uniform(1, 1000, n)
        c = rng.uniform(0.1, 5)
        uids = np.repeat([f"p{i}" for i in range(n)], 2)
        rounds = np.tile([0, 1], n)
        util = np.column_stack([u0, u1]).ravel()
        base = compute_qalys(uids, rounds, util, np.column_stack([t0, t0 + dur]).ravel(), 0, 1)
        scaled = compute_qalys(uids, rounds, util, np.column_stack([t0, t0 + c * dur]).ravel(), 0, 1)
        q, qc = np.array([r.qalys for r in base.records]), np.array([r.qalys for r in scaled.records])
        assert len(q) == n
        assert np.allclose(qc, c * q, rtol=1e-12, atol=1e-15)
        assert np.allclose(q, [trapezoid_qalys(a, b, d) for a, b, d in zip(u0, u1, dur)], rtol=1e-12, atol=1e-15)


# -- 8 ------------------------------------------------------------------------


@pytest.mark.criterion(8, "replication: toy manifest < 120 s, reruns byte-identical, corrupt cell exits 2 at validate")
def test_criterion_8_replication(toy_dir, tmp_path, capsys):
    manifest = load_manifest(toy_dir / "toy_manifest.json")
    families = {s.params.get("families") and tuple(s.params["families"]) for s in manifest.steps} - {None}
    assert families == {FAMILY_KINDS}
    with Budget(120):
        r1 = run_manifest(manifest, tmp_path / "run1")
    r2 = run_manifest(manifest, tmp_path / "run2")
    assert r1.record.status == r2.record.status == "succeeded"
    assert sum(1 for name in r1.artifacts if name.endswith(".md")) == 2
    for name, path in r1.artifacts.items():
        assert path.read_bytes() == r2.artifacts[name].read_bytes(), name
    # the run record differs only in wall-clock timings
    rec1, rec2 = (json.loads((tmp_path / d / RUN_RECORD_NAME).read_text()) for d in ("run1", "run2"))
    for rec in (rec1, rec2):
        for s in rec["steps"]:
            s.pop("duration_ms")
    assert rec1 == rec2
    lines = (toy_dir / "toy_records.csv").read_text().splitlines()
    header = lines[0].split(",")
    cells = lines[7].split(",")
    cells[header.index("age")] = "99"
    lines[7] = ",".join(cells)
    (toy_dir / "toy_records.csv").write_text("\n".join(lines) + "\n")
    capsys.readouterr()
    code = run_cli(["run", "--manifest", str(toy_dir / "toy_manifest.json"), "--out", str(tmp_path / "bad")])
    err = capsys.readouterr().err
    assert code == 2
    assert "step 's2_validate' failed" in err and "age: value 99 at row 7 outside [12, 25]" in err
    rec = json.loads((tmp_path / "bad" / RUN_RECORD_NAME).read_text())
    status = {s["step_id"]: s["status"] for s in rec["steps"]}
    assert status["s2_validate"] == "failed"
    assert [sid for sid, st in status.items() if st == "skipped"] == sorted(sid for sid in status if sid > "s2_validate")


# -- 9 ------------------------------------------------------------------------


@pytest.mark.criterion(9, "registry: identity, tamper detection, latest, search, index_version")
def test_criterion_9_registry(tmp_path):
    with Budget(10):
        reg = LocalRegistry(tmp_path / "reg")
        rng = np.random.default_rng(9)
        blobs = [rng.bytes(int(rng.integers(0, 2048))) for _ in range(100)]
        versions = [reg.read_index().index_version]
        for i, b in enumerate(blobs):
            reg.publish(b, f"Blob-{i:03d}", "1.0.0", "program", keywords=[f"Tag{i % 7}"])
            versions.append(reg.read_index().index_version)
        for i, b in enumerate(blobs):
            assert reg.fetch(f"Blob-{i:03d}")[0] == b
        e = reg.publish(b"genuine", "victim", "1.0.0", "module")
        (reg.root / e.location).write_bytes(b"forged")
        with pytest.raises(IntegrityError):
            reg.fetch("victim")
        for v in ("1.0.0", "1.9.0", "1.10.0", "2.0.0"):
            reg.publish(v.encode(), "model", v, "catalogue")
        assert reg.fetch("model")[1].version == "2.0.0"
        reg.deprecate("model", "2.0.0")
        assert reg.fetch("model")[1].version == "1.10.0"
        hits = reg.search("tag3")
        assert hits and all("Tag3" in h.keywords for h in hits)
        assert [h.identifier for h in reg.search("BLOB-00")] == [f"Blob-{i:03d}" for i in range(10)]
        versions.append(reg.read_index().index_version)
        assert all(a < b for a, b in zip(versions, versions[1:]))


# -- 10 -----------------------------------------------------------------------


@pytest.mark.criterion(10, "synthesis: re-validates, uid-disjoint, marginal means within 3 SE, deterministic")
def test_criterion_10_synthesis(toy_ds):
    with Budget(10):
        syn = synthesize_dataset(toy_ds, 1000, seed=10)
        again = validate_dataset(syn.table, toy_ds.dictionary, toy_ds.metadata)
        assert again.validation_stamp == syn.validation_stamp and syn.n_rows == 1000
        assert not set(map(str, syn.uids())) & set(map(str, toy_ds.uids()))
        for name in toy_ds.names:
            if not toy_ds.dictionary[name].is_numeric:
                continue
            src = np.asarray(toy_ds[name], dtype=float)
            out = np.asarray(syn[name], dtype=float)
            se = np.nanstd(src, ddof=1) / math.sqrt(np.sum(~np.isnan(out)))
            assert abs(np.nanmean(out) - np.nanmean(src)) <= 3 * se, name
        assert synthesize_dataset(toy_ds, 1000, seed=10).to_json() == syn.to_json()
        assert synthesize_dataset(toy_ds, 1000, seed=11).to_json() != syn.to_json()
