from __future__ import annotations

import csv
import io
import json
import subprocess
import sys


from chemkit.cli import SUBCOMMANDS, run_cli
from chemkit.core import VERBS


def _data_args(d):
    return ["--data", str(d / "toy_records.csv"), "--dict", str(d / "toy_dictionary.csv"), "--uid", "uid", "--round", "round", "--group", "group"]


def test_every_subcommand_maps_to_a_verb():
    assert set(SUBCOMMANDS) == {"validate", "describe", "synth", "score", "fit", "predict", "qalys", "report", "run", "search", "publish", "fetch"}
    for module, verb in SUBCOMMANDS.values():
        assert verb in VERBS


def test_validate_clean_and_corrupt(toy_dir, tmp_path, capsys):
    assert run_cli(["validate", *_data_args(toy_dir), "--out", str(tmp_path / "v")]) == 0
    assert (tmp_path / "v" / "validated.json").is_file()
    rows = (toy_dir / "toy_records.csv").read_text().splitlines()
    rows[5] = rows[5].replace(",F,", ",Q,", 1).replace(",M,", ",Q,", 1).replace(",X,", ",Q,", 1)
    (toy_dir / "toy_records.csv").write_text("\n".join(rows) + "\n")
    capsys.readouterr()
    assert run_cli(["validate", *_data_args(toy_dir)]) == 2
    assert "sex: value 'Q' at row 5" in capsys.readouterr().err


def test_usage_and_runtime_errors_exit_1(toy_dir, tmp_path, capsys):
    assert run_cli([]) == 1
    assert run_cli(["validate"]) == 1
    assert run_cli(["nonsense"]) == 1
    assert run_cli(["validate", "--data", str(tmp_path / "absent.csv"), "--uid", "uid"]) == 1


def test_full_chain(toy_dir, tmp_path):
    out = tmp_path / "o"
    assert run_cli(["describe", *_data_args(toy_dir), "--by-group", "--out", str(out / "d")]) == 0
    assert (out / "d" / "summary.json").is_file()
    assert run_cli(["score", *_data_args(toy_dir), "--instrument", str(toy_dir / "toy_additive.json"), "--out", str(out / "s")]) == 0
    scored = out / "s" / "scored.json"
    assert scored.is_file()
    fit = ["fit", "--data", str(scored), "--target", "total_utility", "--predictors", "k6,phq9", "--covariates", "age",
           "--families", "ols,glm_gamma_log", "--folds", "3", "--created-utc", "2024-01-01T00:00:00Z", "--out", str(out / "f")]
    assert run_cli(fit) == 0
    cat = out / "f" / "catalogue.json"
    perf = list(csv.DictReader(io.StringIO((out / "f" / "performance.csv").read_text())))
    assert len(perf) == 4
    assert run_cli(["predict", "--catalogue", str(cat), "--data", str(scored), "--out", str(out / "p")]) == 0
    preds = out / "p" / "predictions.csv"
    assert run_cli(["qalys", "--data", str(scored), "--predictions", str(preds), "--time", "date",
                    "--start", "baseline", "--end", "follow_up", "--out", str(out / "q")]) == 0
    q = list(csv.DictReader(io.StringIO((out / "q" / "qalys.csv").read_text())))
    assert len(q) > 100 and all(0 < float(r["qalys"]) < 1 for r in q)
    assert run_cli(["report", "--catalogue", str(cat), "--out", str(out / "r")]) == 0
    assert "| family |" in (out / "r" / "report.md").read_text()
    # rerun of fit is byte-identical with a pinned timestamp
    fit[-1] = str(out / "f2")
    assert run_cli(fit) == 0
    assert (out / "f2" / "catalogue.json").read_bytes() == cat.read_bytes()


def test_registry_commands(toy_dir, tmp_path, capsys):
    reg = tmp_path / "reg"
    art = toy_dir / "toy_additive.json"
    pub = ["publish", "--registry", str(reg), "--file", str(art), "--identifier", "toy-inst", "--version", "1.0.0", "--kind", "module", "--keywords", "toy,utility"]
    assert run_cli(pub) == 0
    assert run_cli(pub) == 1  # duplicate
    capsys.readouterr()
    assert run_cli(["search", "--registry", str(reg), "--query", "UTIL", "--out", str(tmp_path / "s")]) == 0
    hits = json.loads((tmp_path / "s" / "search.json").read_text())
    assert [h["identifier"] for h in hits] == ["toy-inst"]
    assert run_cli(["fetch", "--registry", str(reg), "--identifier", "toy-inst", "--out", str(tmp_path / "f")]) == 0
    fetched = list((tmp_path / "f").iterdir())
    assert len(fetched) == 1 and fetched[0].read_bytes() == art.read_bytes()
    data = ["publish", "--registry", str(reg), "--file", str(toy_dir / "toy_records.csv"), "--identifier", "toy-data", "--version", "1.0.0", "--kind", "dataset"]
    assert run_cli(data) == 1
    assert "confidential data cannot be shared" in capsys.readouterr().err


def test_run_manifest_cli(toy_dir, tmp_path):
    assert run_cli(["run", "--manifest", str(toy_dir / "toy_manifest.json"), "--out", str(tmp_path / "run")]) == 0
    assert (tmp_path / "run" / "run_record.json").is_file()


def test_console_entry_point_exit_code(toy_dir):
    r = subprocess.run([sys.executable, "-m", "chemkit", "validate", *_data_args(toy_dir)], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
