from __future__ import annotations

import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chemkit import toydata
from chemkit.errors import ManifestError, StepFailedError, TemplateError
from chemkit.report import (
    DEFAULT_TEMPLATES,
    RUN_RECORD_NAME,
    ReportTemplate,
    Step,
    build_manifest,
    load_manifest,
    markdown_table,
    render_template,
    run_manifest,
)

# -- templates ------------------------------------------------------------------


def test_render_substitutes_and_formats():
    doc = render_template("n={{n}} r={{ r }} ok={{flag}} miss={{m}}", {"n": 3, "r": 0.123456, "flag": True, "m": float("nan")})
    assert doc.text == "n=3 r=0.1235 ok=yes miss=NA"
    assert doc.warnings == ()


def test_missing_keys_listed_together():
    with pytest.raises(TemplateError, match="missing keys: a, b"):
        render_template("{{b}} {{a}} {{c}}", {"c": 1})


def test_unused_keys_warn():
    doc = render_template("{{a}}", {"a": 1, "z": 2})
    assert doc.warnings == ("unused context key 'z'",)


def test_malformed_templates():
    for body in ("{{a b}}", "{{ }}", "x {{a", "{{#table:}}"):
        with pytest.raises(TemplateError):
            ReportTemplate(body)


def test_table_block():
    t = {"columns": ["a", "b"], "rows": [[1, 0.5], ["x|y", None]]}
    assert markdown_table(t) == "| a | b |\n| --- | --- |\n| 1 | 0.5000 |\n| x\\|y | NA |"
    with pytest.raises(TemplateError, match="needs a payload"):
        render_template("{{#table:t}}", {"t": 5})


def test_default_templates_parse():
    assert ReportTemplate(DEFAULT_TEMPLATES["catalogue"]).table_keys == {"performance", "coefficients"}
    assert "title" in ReportTemplate(DEFAULT_TEMPLATES["study"]).required_keys


# -- manifests ------------------------------------------------------------------


def _step(sid, inputs=(), outputs=()):
    return Step(sid, "dataset", "describe", tuple(inputs), tuple(outputs))


def test_cycle_two_steps(tmp_path):
    steps = [_step("A", ["b.json"], ["a.json"]), _step("B", ["a.json"], ["b.json"])]
    with pytest.raises(ManifestError, match="cycle between steps: A↔B"):
        build_manifest(steps, 1, base_dir=tmp_path)


def test_cycle_three_steps(tmp_path):
    steps = [_step("A", ["c"], ["a"]), _step("B", ["a"], ["b"]), _step("C", ["b"], ["c"])]
    with pytest.raises(ManifestError, match="cycle between steps: A→B→C→A"):
        build_manifest(steps, 1, base_dir=tmp_path)


def test_dangling_input(tmp_path):
    with pytest.raises(ManifestError, match="dangling input 'ghost.csv'"):
        build_manifest([_step("A", ["ghost.csv"], ["a.json"])], 1, base_dir=tmp_path)


def test_unknown_verb_and_duplicate_output(tmp_path):
    with pytest.raises(ManifestError, match="module 'predictor' supports: predict"):
        build_manifest([Step("A", "predictor", "score")], 1, base_dir=tmp_path)
    with pytest.raises(ManifestError, match="produced by both 'A' and 'B'"):
        build_manifest([_step("A", (), ["x"]), _step("B", (), ["x"])], 1, base_dir=tmp_path)
    with pytest.raises(ManifestError, match="relative path"):
        build_manifest([_step("A", (), ["../x"])], 1, base_dir=tmp_path)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 12), st.integers(0, 10**6))
def test_topological_order_respects_edges(n, seed):
    rng = random.Random(seed)
    perm = list(range(n))
    rng.shuffle(perm)  # hidden true order; edges only go forward in it
    steps = []
    for pos, node in enumerate(perm):
        ins = [f"o{perm[j]}" for j in range(pos) if rng.random() < 0.3]
        steps.append(_step(f"s{node}", ins, [f"o{node}"]))
    rng.shuffle(steps)
    m = build_manifest(steps, 0, base_dir=".")
    where = {sid: i for i, sid in enumerate(m.order)}
    assert sorted(m.order) == sorted(s.step_id for s in steps)
    for s in steps:
        for ref in s.inputs:
            assert where["s" + ref[1:]] < where[s.step_id]


def test_toy_manifest_runs_and_reruns_identically(tmp_path):
    m = load_manifest(toydata.path("toy_manifest.json"))
    r1 = run_manifest(m, tmp_path / "r1")
    r2 = run_manifest(m, tmp_path / "r2")
    assert r1.record.status == "succeeded"
    assert r1.record.record_hash() == r2.record.record_hash()
    for name, p in r1.artifacts.items():
        assert p.read_bytes() == r2.artifacts[name].read_bytes(), name
    rec = json.loads((tmp_path / "r1" / RUN_RECORD_NAME).read_text())
    assert [s["step_id"] for s in rec["steps"]] == sorted(s["step_id"] for s in rec["steps"])
    assert all("duration_ms" in s for s in rec["steps"])


def test_failed_step_halts_and_records(toy_dir, tmp_path):
    lines = (toy_dir / "toy_records.csv").read_text().splitlines()
    head = lines[0].split(",")
    cells = lines[3].split(",")
    cells[head.index("k6")] = "31"
    lines[3] = ",".join(cells)
    (toy_dir / "toy_records.csv").write_text("\n".join(lines) + "\n")
    m = load_manifest(toy_dir / "toy_manifest.json")
    with pytest.raises(StepFailedError) as ei:
        run_manifest(m, tmp_path / "w")
    rec = ei.value.record
    status = {s.step_id: s.status for s in rec.steps}
    assert status["s1_ingest"] == "succeeded" and status["s2_validate"] == "failed"
    assert all(status[s] == "skipped" for s in status if s > "s2_validate")
    assert "k6: value 31 at row 3" in ei.value.record.steps[1].error
    assert (tmp_path / "w" / RUN_RECORD_NAME).is_file()
