from __future__ import annotations

import functools
import hashlib
import http.server
import json
import threading

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from chemkit.errors import (
    ConfidentialDataError,
    DuplicateEntryError,
    EntryNotFoundError,
    IntegrityError,
    RegistryError,
)
from chemkit.registry import REGISTRY_ENV, HttpRegistry, LocalRegistry, open_registry


@pytest.fixture()
def reg(tmp_path):
    return LocalRegistry(tmp_path / "reg")


def test_publish_fetch_identity_and_hash(reg):
    e = reg.publish(b"hello", "toy-model", "1.0.0", "module", ["Utility"], "a toy")
    assert e.content_hash == hashlib.sha256(b"hello").hexdigest()
    data, got = reg.fetch("toy-model", "1.0.0")
    assert data == b"hello" and got == e


@settings(max_examples=50, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.lists(st.binary(max_size=300), min_size=1, max_size=4))
def test_publish_fetch_random_blobs(tmp_path_factory, blobs):
    reg = LocalRegistry(tmp_path_factory.mktemp("r"))
    for i, b in enumerate(blobs):
        reg.publish(b, f"blob{i}", "1.0.0", "program")
    for i, b in enumerate(blobs):
        assert reg.fetch(f"blob{i}")[0] == b


def test_tamper_detected(reg):
    e = reg.publish(b"original", "m", "1.0.0", "module")
    (reg.root / e.location).write_bytes(b"tampered")
    with pytest.raises(IntegrityError, match="hash to"):
        reg.fetch("m")


def test_latest_skips_deprecated(reg):
    for v in ("1.0.0", "1.2.0", "1.10.0"):
        reg.publish(v.encode(), "m", v, "module")
    assert reg.fetch("m")[1].version == "1.10.0"
    reg.deprecate("m", "1.10.0")
    assert reg.fetch("m")[1].version == "1.2.0"
    assert reg.fetch("m", "1.10.0")[0] == b"1.10.0"
    reg.deprecate("m", "1.2.0")
    reg.deprecate("m", "1.0.0")
    with pytest.raises(EntryNotFoundError, match="deprecated"):
        reg.fetch("m")


def test_search_case_insensitive_and_sorted(reg):
    reg.publish(b"1", "b-model", "1.0.0", "module", ["EQ-5D"])
    reg.publish(b"2", "a-model", "1.0.0", "catalogue", description="eq-5d mapping")
    reg.publish(b"3", "a-model", "2.0.0", "catalogue", description="eq-5d mapping")
    reg.publish(b"4", "other", "1.0.0", "program")
    hits = reg.search("Eq-5D")
    assert [(e.identifier, e.version) for e in hits] == [("a-model", "2.0.0"), ("a-model", "1.0.0"), ("b-model", "1.0.0")]
    assert [e.identifier for e in reg.search("eq", kind="module")] == ["b-model"]


def test_index_version_monotone_and_append_only(reg):
    seen = [reg.read_index().index_version]
    for i in range(5):
        reg.publish(bytes([i]), f"m{i}", "1.0.0", "module")
        seen.append(reg.read_index().index_version)
    reg.deprecate("m0", "1.0.0")
    seen.append(reg.read_index().index_version)
    assert seen == sorted(seen) and len(set(seen)) == len(seen)
    with pytest.raises(DuplicateEntryError):
        reg.publish(b"x", "m1", "1.0.0", "module")
    assert len(reg.read_index().entries) == 5


def test_confidential_datasets_refused(reg):
    with pytest.raises(ConfidentialDataError, match="confidential data cannot be shared"):
        reg.publish(b"rows", "d", "1.0.0", "dataset")
    with pytest.raises(ConfidentialDataError):
        reg.publish(b"rows", "d", "1.0.0", "dataset", confidential=True)
    assert reg.publish(b"rows", "d", "1.0.0", "dataset", confidential=False).kind == "dataset"


def test_bad_publish_arguments(reg):
    with pytest.raises(RegistryError, match="unknown kind"):
        reg.publish(b"", "m", "1.0.0", "blob")
    with pytest.raises(RegistryError, match="not a valid slug"):
        reg.publish(b"", "bad id", "1.0.0", "module")


def test_open_registry_env(tmp_path, monkeypatch):
    monkeypatch.delenv(REGISTRY_ENV, raising=False)
    with pytest.raises(RegistryError, match=REGISTRY_ENV):
        open_registry()
    monkeypatch.setenv(REGISTRY_ENV, str(tmp_path))
    assert isinstance(open_registry(), LocalRegistry)
    assert isinstance(open_registry("https://example.org/reg"), HttpRegistry)


def test_http_backend_reads_local_layout(reg):
    reg.publish(b"served", "m", "1.0.0", "module", ["web"])
    handler = functools.partial(_Quiet, directory=str(reg.root))
    server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), handler)
    t = threading.Thread(target=server.serve_forever, daemon=True)
    t.start()
    try:
        h = open_registry(f"http://127.0.0.1:{server.server_address[1]}/")
        assert [e.identifier for e in h.search("WEB")] == ["m"]
        assert h.fetch("m")[0] == b"served"
        with pytest.raises(EntryNotFoundError):
            h.fetch("absent")
        with pytest.raises(RegistryError, match="read-only"):
            h.publish(b"", "x", "1.0.0", "module")
    finally:
        server.shutdown()
        server.server_close()


class _Quiet(http.server.SimpleHTTPRequestHandler):
    def log_message(self, *args):
        pass


def test_index_is_plain_json(reg):
    reg.publish(b"x", "m", "1.0.0", "module")
    d = json.loads((reg.root / "index.json").read_text())
    assert d["index_version"] == 1 and d["entries"][0]["identifier"] == "m"
