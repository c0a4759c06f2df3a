"""Write the toy files next to this module.

Persons have a latent severity that drives the distress (k6, phq9) and
functioning (sofas) scores and the five instrument items, so mapping
models have real signal to find. Nothing here describes real people.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .. import _jsonio

N_PERSONS = 120
SEED = 20240501

DICTIONARY = [
    ("uid", "text", "", "", "", "Participant identifier"),
    ("round", "categorical", "", "", "baseline|follow_up", "Measurement round"),
    ("group", "categorical", "", "", "control|intervention", "Study arm"),
    ("date", "date", "", "", "", "Date of assessment"),
    ("age", "integer", "12", "25", "", "Age in years"),
    ("sex", "categorical", "", "", "F|M|X", "Sex"),
    ("k6", "integer", "0", "24", "", "Psychological distress (K6)"),
    ("phq9", "integer", "0", "27", "", "Depressive symptoms (PHQ-9)"),
    ("sofas", "integer", "0", "100", "", "Social and occupational functioning (SOFAS)"),
    ("eq1", "integer", "1", "5", "", "Instrument item 1: mobility"),
    ("eq2", "integer", "1", "5", "", "Instrument item 2: self-care"),
    ("eq3", "integer", "1", "5", "", "Instrument item 3: usual activities"),
    ("eq4", "integer", "1", "5", "", "Instrument item 4: pain"),
    ("eq5", "integer", "1", "5", "", "Instrument item 5: mood"),
]

ITEMS = ["eq1", "eq2", "eq3", "eq4", "eq5"]
# how strongly each item tracks the latent severity
ITEM_LOAD = [0.6, 0.4, 0.9, 0.7, 1.2]


def _records(rng: np.random.Generator) -> list[list[str]]:
    start = np.datetime64("2021-02-01")
    rows = []
    for i in range(N_PERSONS):
        uid = f"P{i + 1:03d}"
        group = "intervention" if i % 2 else "control"
        sex = rng.choice(["F", "M", "X"], p=[0.55, 0.4, 0.05])
        age = int(rng.integers(12, 25))
        sev0 = rng.normal(0.0, 1.0)
        d0 = start + np.timedelta64(int(rng.integers(0, 180)), "D")
        gap = int(rng.integers(85, 125))
        effect = -0.45 if group == "intervention" else -0.1
        for rnd, sev, date in (("baseline", sev0, d0), ("follow_up", sev0 + effect + rng.normal(0, 0.5), d0 + np.timedelta64(gap, "D"))):
            k6 = int(np.clip(round(10 + 4.5 * sev + rng.normal(0, 2.0)), 0, 24))
            phq9 = int(np.clip(round(11 + 5.0 * sev + rng.normal(0, 2.5)), 0, 27))
            sofas = int(np.clip(round(62 - 11 * sev + rng.normal(0, 6.0)), 0, 100))
            items = [int(np.clip(round(2.0 + load * sev + rng.normal(0, 0.6)), 1, 5)) for load in ITEM_LOAD]
            row = [uid, rnd, group, str(date), str(age), sex, str(k6), str(phq9), str(sofas), *map(str, items)]
            rows.append(row)
    # a few unrecorded functioning scores, as real data would have
    for idx in rng.choice(len(rows), size=4, replace=False):
        rows[idx][8] = "NA"
    return rows


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def additive_instrument() -> dict:
    step = [0.0, 0.04, 0.09, 0.14, 0.19]
    return {
        "name": "TOY-5D-additive",
        "version": "1.0",
        "country": "none",
        "items": [{"item_id": f"I{j + 1}", "variable": v, "levels": 5} for j, v in enumerate(ITEMS)],
        "domains": [
            {"domain_id": "physical", "item_ids": ["I1", "I2", "I3"]},
            {"domain_id": "mental", "item_ids": ["I4", "I5"]},
        ],
        "engine": "additive_decrement",
        "params": {"anchor": 1.0, "decrements": [step] * 5},
        "utility_bounds": [0.0, 1.0],
    }


def multiplicative_instrument() -> dict:
    w = [0.0, 0.08, 0.2, 0.35, 0.5]
    return {
        "name": "TOY-5D-multiplicative",
        "version": "1.0",
        "country": "none",
        "items": [{"item_id": f"I{j + 1}", "variable": v, "levels": 5} for j, v in enumerate(ITEMS)],
        "domains": [
            {"domain_id": "physical", "item_ids": ["I1", "I2", "I3"]},
            {"domain_id": "mental", "item_ids": ["I4", "I5"]},
        ],
        "engine": "multiplicative_domain",
        "params": {"item_weights": [w] * 5, "domain_weights": [0.9, 0.8], "scale": 1.04},
        "utility_bounds": [-0.04, 1.0],
    }


def manifest() -> dict:
    ds = {"uid": "uid", "round": "round", "group": "group"}
    return {
        "seed": 20240501,
        "toolkit_version": "0.1.0",
        "created_utc": "1970-01-01T00:00:00Z",
        "steps": [
            {"step_id": "s1_ingest", "module": "dataset", "verb": "ingest",
             "inputs": ["toy_records.csv", "toy_dictionary.csv"], "outputs": ["raw.json"], "params": ds,
             "note": "Parse records and dictionary; no type checks yet."},
            {"step_id": "s2_validate", "module": "dataset", "verb": "validate",
             "inputs": ["raw.json"], "outputs": ["validated.json"], "params": {},
             "note": "Every cell checked against the dictionary; any violation halts the run."},
            {"step_id": "s3_describe", "module": "dataset", "verb": "describe",
             "inputs": ["validated.json"], "outputs": ["descriptives.json", "descriptives.txt"], "params": {"by_round": True}},
            {"step_id": "s4_score", "module": "instrument", "verb": "score",
             "inputs": ["validated.json", "toy_additive.json"], "outputs": ["scored.json"], "params": {}},
            {"step_id": "s5_fit", "module": "mapping", "verb": "evaluate",
             "inputs": ["scored.json"], "outputs": ["evaluation.json"],
             "params": {"target": "total_utility", "predictors": ["k6", "phq9", "sofas"], "covariates": ["age", "sex"],
                        "families": ["ols", "glm_gaussian_log", "glm_gamma_log", "ols_logit_transform",
                                     "ols_cloglog_transform", "lmm_random_intercept"], "folds": 5},
             "note": "Six model families crossed with three candidate predictors, 5-fold cross-validation."},
            {"step_id": "s6_catalogue", "module": "mapping", "verb": "export",
             "inputs": ["evaluation.json"], "outputs": ["catalogue.json", "performance.csv"],
             "params": {"identifier": "toy-utility-mapping"}},
            {"step_id": "s7_report_catalogue", "module": "reporter", "verb": "report",
             "inputs": ["catalogue.json"], "outputs": ["catalogue_report.md"], "params": {"template": "catalogue"}},
            {"step_id": "s8_report_study", "module": "reporter", "verb": "report",
             "inputs": ["catalogue.json", "scored.json"], "outputs": ["study_report.md"],
             "params": {"template": "study", "title": "Toy utility mapping study", "authors": "Toy Data Team",
                        "variables": ["age", "k6", "phq9", "sofas", "total_utility"]}},
        ],
    }


def write_all(directory: Path | None = None) -> None:
    d = Path(directory) if directory is not None else Path(__file__).resolve().parent
    rng = np.random.default_rng(SEED)
    header = [row[0] for row in DICTIONARY]
    (d / "toy_records.csv").write_text(_csv(header, _records(rng)), encoding="utf-8")
    (d / "toy_dictionary.csv").write_text(_csv(["variable", "class", "min", "max", "allowed_set", "description"], DICTIONARY), encoding="utf-8")
    (d / "toy_additive.json").write_text(_jsonio.dumps(additive_instrument()), encoding="utf-8")
    (d / "toy_multiplicative.json").write_text(_jsonio.dumps(multiplicative_instrument()), encoding="utf-8")
    (d / "toy_manifest.json").write_text(_jsonio.dumps(manifest()), encoding="utf-8")


if __name__ == "__main__":
    write_all()
