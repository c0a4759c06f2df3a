from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chemkit.data import DataDictionary, DatasetMetadata, DictionaryEntry, RawTable, describe_dataset, validate_dataset
from chemkit.errors import InstrumentError, ScoringError
from chemkit.scoring import (
    InstrumentDefinition,
    attach_instrument,
    load_instrument,
    register_scorer,
    score_additive,
    score_dataset,
    score_multiplicative,
)


def _additive(decrements, bounds=(0.0, 1.0), n_levels=5):
    n = len(decrements)
    return InstrumentDefinition.from_dict({
        "name": "T", "version": "1", "country": "x",
        "items": [{"item_id": f"I{i + 1}", "variable": f"q{i + 1}", "levels": n_levels} for i in range(n)],
        "domains": [{"domain_id": "all", "item_ids": [f"I{i + 1}" for i in range(n)]}],
        "engine": "additive_decrement",
        "params": {"decrements": decrements, "anchor": 1.0},
        "utility_bounds": list(bounds),
    })


def test_additive_hand_cases():
    step = [[0.0, 0.1, 0.2, 0.3, 0.4]] * 5
    assert score_additive((1, 1, 1, 1, 1), step) == 1.0
    assert score_additive((2, 1, 1, 1, 1), step) == pytest.approx(0.9, abs=1e-15)
    flat3 = [[0.0, 0.1, 0.2, 0.3, 0.4]] * 5
    assert score_additive((3, 3, 3, 3, 3), flat3) == pytest.approx(0.0, abs=1e-15)


def test_additive_level_out_of_range():
    with pytest.raises(ScoringError, match=r"item I2: level 6 outside \[1, 5\]"):
        score_additive((1, 6, 1), [[0, 0.1, 0.2, 0.3, 0.4]] * 3, item_ids=["I1", "I2", "I3"])


def test_additive_level1_must_be_zero_at_load():
    with pytest.raises(InstrumentError, match="decrement at level 1 must be 0"):
        _additive([[0.1, 0.2, 0.3, 0.4, 0.5]])


def test_multiplicative_hand_cases():
    assert score_multiplicative((1, 1), [[0, 0.5], [0, 0.5]], [[0], [1]], [1, 1]) == 1.0
    assert score_multiplicative((2,), [[0, 0.5]], [[0]], [1.0]) == 0.5
    assert score_multiplicative((2, 2), [[0, 0.5], [0, 0.5]], [[0], [1]], [1.0, 1.0]) == 0.25


def test_multiplicative_weight_outside_unit_interval_rejected():
    d = json.loads(_toy_mult_json())
    d["params"]["item_weights"][0][2] = 1.5
    with pytest.raises(InstrumentError, match=r"disutility weights must lie in \[0, 1\]"):
        InstrumentDefinition.from_dict(d)


def _toy_mult_json():
    from chemkit import toydata

    return toydata.path("toy_multiplicative.json").read_text()


def test_instrument_invariants():
    base = json.loads(_toy_mult_json())
    d = json.loads(json.dumps(base))
    d["domains"][0]["item_ids"].append("I4")
    with pytest.raises(InstrumentError, match="belongs to domains"):
        InstrumentDefinition.from_dict(d)
    d = json.loads(json.dumps(base))
    d["utility_bounds"] = [0.0, 0.9]
    with pytest.raises(InstrumentError, match="upper utility bound must be 1.0"):
        InstrumentDefinition.from_dict(d)
    d = json.loads(json.dumps(base))
    d["domains"][1]["item_ids"] = ["I4"]
    with pytest.raises(InstrumentError, match="not assigned to any domain: I5"):
        InstrumentDefinition.from_dict(d)


def test_instrument_json_roundtrip(toy_additive, toy_multiplicative):
    for inst in (toy_additive, toy_multiplicative):
        back = load_instrument(inst.to_json())
        assert back.to_json() == inst.to_json()


# -- binding -------------------------------------------------------------------


def _item_ds(cols, hi=5):
    entries = [DictionaryEntry("uid", "text")] + [DictionaryEntry(c, "integer", 1, hi) for c in cols]
    n = len(next(iter(cols.values())))
    data = {"uid": [f"u{i}" for i in range(n)], **cols}
    return validate_dataset(RawTable.from_columns(data), DataDictionary(tuple(entries)), DatasetMetadata("uid"))


def test_attach_missing_column():
    inst = _additive([[0, 0.1, 0.2, 0.3, 0.4]] * 9)
    ds = _item_ds({f"q{i}": ["1"] for i in range(1, 9)})
    with pytest.raises(InstrumentError, match="item I9: column 'q9' not found"):
        attach_instrument(ds, inst)


def test_attach_range_mismatch():
    inst = _additive([[0, 0.1, 0.2, 0.3, 0.4]])
    ds = _item_ds({"q1": ["1"]}, hi=6)
    with pytest.raises(InstrumentError, match=r"range \[1,6\] exceeds item levels 5"):
        attach_instrument(ds, inst)


# -- dataset scoring -------------------------------------------------------------


def test_best_rows_score_one(toy_additive):
    ds = _item_ds({f"q{i}": ["1", "1", "1"] for i in range(1, 4)})
    inst = _additive([[0, 0.1, 0.2, 0.3, 0.4]] * 3)
    s = score_dataset(attach_instrument(ds, inst))
    assert list(s.total_utility) == [1.0, 1.0, 1.0]
    assert list(s.total_unweighted) == [1.0, 1.0, 1.0]


def test_missing_item_propagates():
    ds = _item_ds({"q1": ["1", None], "q2": ["2", "2"]})
    inst = _additive([[0, 0.1, 0.2, 0.3, 0.4]] * 2)
    s = score_dataset(attach_instrument(ds, inst))
    assert np.isnan(s.total_utility[1]) and np.isnan(s.total_unweighted[1])
    v = describe_dataset(s).overall.variables["total_utility"]
    assert v.n_missing == 1


def test_vectorized_equals_scalar_oracle(toy_ds, toy_additive, toy_multiplicative):
    for inst in (toy_additive, toy_multiplicative):
        s = score_dataset(attach_instrument(toy_ds, inst))
        levels = np.column_stack([toy_ds[it.variable] for it in inst.items])
        for i, row in enumerate(levels):
            assert s.total_utility[i] == inst.utility(tuple(int(x) for x in row))


def test_unweighted_definition(toy_ds, toy_additive):
    s = score_dataset(attach_instrument(toy_ds, toy_additive), weighted=False)
    levels = np.column_stack([toy_ds[it.variable] for it in toy_additive.items])
    assert np.allclose(s.total_unweighted, ((5 - levels) / 4).mean(axis=1))
    assert s.total_utility is None
    assert "total_utility" not in s.score_columns()


def test_clamping_counted():
    inst = _additive([[0, 0.3, 0.6, 0.9, 1.2]] * 2, bounds=(0.0, 1.0))
    ds = _item_ds({"q1": ["5", "1"], "q2": ["5", "1"]})
    s = score_dataset(attach_instrument(ds, inst))
    assert s.clamp_count == 1
    assert list(s.total_utility) == [0.0, 1.0]


def test_scored_dataset_columns(toy_scored):
    ds = toy_scored.as_dataset()
    for c in ("score_I1", "domain_physical_unweighted", "domain_mental_weighted", "total_unweighted", "total_utility"):
        assert c in ds.names
    assert np.all((ds["total_utility"] >= 0) & (ds["total_utility"] <= 1))


def test_custom_scorer_contracts():
    register_scorer("half_off", lambda levels, p: 1.0 - 0.1 * sum(lv - 1 for lv in levels))
    register_scorer("broken_anchor", lambda levels, p: 0.95)
    base = {
        "name": "C", "version": "1", "country": "x",
        "items": [{"item_id": "I1", "variable": "q1", "levels": 5}, {"item_id": "I2", "variable": "q2", "levels": 5}],
        "domains": [{"domain_id": "d", "item_ids": ["I1", "I2"]}],
        "engine": "custom", "params": {"scorer": "half_off"}, "utility_bounds": [0.5, 1.0],
    }
    inst = InstrumentDefinition.from_dict(base)
    assert inst.utility((1, 1)) == 1.0
    with pytest.raises(ScoringError, match="outside"):
        inst.utility((5, 5))
    ds = _item_ds({"q1": ["1", "2"], "q2": ["1", "2"]})
    s = score_dataset(attach_instrument(ds, inst))
    assert list(s.total_utility) == [1.0, 0.8]
    bad = InstrumentDefinition.from_dict(dict(base, params={"scorer": "broken_anchor"}))
    with pytest.raises(ScoringError, match="anchor law"):
        score_dataset(attach_instrument(ds, bad))


@st.composite
def additive_params(draw):
    n = draw(st.integers(1, 6))
    rows = []
    for _ in range(n):
        levels = draw(st.integers(2, 6))
        incs = draw(st.lists(st.floats(0, 0.2), min_size=levels - 1, max_size=levels - 1))
        rows.append([0.0] + list(np.cumsum(incs)))
    return rows


@settings(max_examples=150, deadline=None)
@given(additive_params(), st.data())
def test_additive_monotone_in_single_item(rows, data):
    state = [data.draw(st.integers(1, len(r))) for r in rows]
    j = data.draw(st.integers(0, len(rows) - 1))
    if state[j] == len(rows[j]):
        return
    worse = list(state)
    worse[j] += 1
    assert score_additive(worse, rows) <= score_additive(state, rows)
    assert score_additive([1] * len(rows), rows) == 1.0
