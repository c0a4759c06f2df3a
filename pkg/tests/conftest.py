from __future__ import annotations

import shutil
from pathlib import Path

import pytest

from chemkit import toydata
from chemkit.data import ingest_table, load_dictionary, validate_dataset
from chemkit.data.table import DatasetMetadata
from chemkit.scoring import attach_instrument, load_instrument, score_dataset

TOY_META = DatasetMetadata("uid", "round", "group")

# acceptance results collected for the end-of-run summary
_ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    crit = getattr(report, "_criterion", None)
    if crit is None:
        return
    num, title = crit
    outcome = "PASS" if report.outcome == "passed" else "FAIL"
    prev = _ACCEPTANCE.get(num)
    if prev is None or prev[1] == "PASS":
        _ACCEPTANCE[num] = (title, outcome)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is not None:
        rep._criterion = (m.args[0], m.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_ACCEPTANCE):
        title, outcome = _ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:2d} [{outcome}] {title}")


@pytest.fixture(scope="session")
def toy_text():
    return {
        "records": toydata.path("toy_records.csv").read_text(encoding="utf-8"),
        "dictionary": toydata.path("toy_dictionary.csv").read_text(encoding="utf-8"),
        "additive": toydata.path("toy_additive.json").read_text(encoding="utf-8"),
        "multiplicative": toydata.path("toy_multiplicative.json").read_text(encoding="utf-8"),
    }


@pytest.fixture(scope="session")
def toy_ds(toy_text):
    return validate_dataset(ingest_table(toy_text["records"]), load_dictionary(toy_text["dictionary"]), TOY_META)


@pytest.fixture(scope="session")
def toy_additive(toy_text):
    return load_instrument(toy_text["additive"])


@pytest.fixture(scope="session")
def toy_multiplicative(toy_text):
    return load_instrument(toy_text["multiplicative"])


@pytest.fixture(scope="session")
def toy_scored(toy_ds, toy_additive):
    return score_dataset(attach_instrument(toy_ds, toy_additive))


@pytest.fixture()
def toy_dir(tmp_path) -> Path:
    """A writable copy of the shipped toy files."""
    d = tmp_path / "toy"
    d.mkdir()
    for name in toydata.FILES:
        shutil.copy(toydata.path(name), d / name)
    return d
