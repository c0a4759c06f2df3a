"""Append-only, content-addressed artifact registry.

A registry is a directory (or an HTTP server exposing the same layout)::

    index.json                   {"index_version": N, "entries": [...]}
    blobs/<hash[:2]>/<hash>      stored bytes, named by their SHA-256

Local publishes are serialised with an exclusive lock file. The HTTP
backend only reads.
"""

from __future__ import annotations

import os
import re
import urllib.error
import urllib.parse
import urllib.request
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

from filelock import FileLock

from . import _jsonio
from .core import parse_version
from .errors import (
    ConfidentialDataError,
    DuplicateEntryError,
    EntryNotFoundError,
    IntegrityError,
    RegistryError,
)

KINDS = ("module", "dataset", "program", "catalogue")
REGISTRY_ENV = "READY_REGISTRY_URL"
INDEX_NAME = "index.json"
_SLUG = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._:/-]*$")


@dataclass(frozen=True)
class RegistryEntry:
    identifier: str
    kind: str
    version: str
    content_hash: str
    location: str
    keywords: tuple[str, ...] = ()
    description: str = ""
    deprecated: bool = False
    citation: str = ""
    confidential: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        d["keywords"] = list(self.keywords)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> RegistryEntry:
        return cls(
            identifier=d["identifier"],
            kind=d["kind"],
            version=d["version"],
            content_hash=d["content_hash"],
            location=d["location"],
            keywords=tuple(d.get("keywords", ())),
            description=d.get("description", ""),
            deprecated=bool(d.get("deprecated", False)),
            citation=d.get("citation", ""),
            confidential=bool(d.get("confidential", False)),
        )

    def matches(self, query: str) -> bool:
        q = query.lower()
        hay = [self.identifier, self.description, *self.keywords]
        return any(q in h.lower() for h in hay)


@dataclass(frozen=True)
class RegistryIndex:
    entries: tuple[RegistryEntry, ...] = ()
    index_version: int = 0

    def to_dict(self) -> dict:
        return {"index_version": self.index_version, "entries": [e.to_dict() for e in self.entries]}

    def to_json(self) -> str:
        return _jsonio.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: Mapping) -> RegistryIndex:
        return cls(tuple(RegistryEntry.from_dict(e) for e in d.get("entries", [])), int(d.get("index_version", 0)))

    def find(self, identifier: str, version: str) -> RegistryEntry | None:
        for e in self.entries:
            if e.identifier == identifier and e.version == version:
                return e
        return None


def search_entries(index: RegistryIndex, query: str, kind: str | None = None, include_deprecated: bool = False) -> list[RegistryEntry]:
    """Case-insensitive substring search; results sorted by identifier, newest version first."""
    hits = [
        e
        for e in index.entries
        if e.matches(query) and (kind is None or e.kind == kind) and (include_deprecated or not e.deprecated)
    ]
    hits.sort(key=lambda e: parse_version(e.version), reverse=True)
    hits.sort(key=lambda e: e.identifier)
    return hits


def resolve_entry(index: RegistryIndex, identifier: str, version: str = "latest") -> RegistryEntry:
    """Exact version, or ``"latest"`` = highest non-deprecated version."""
    cands = [e for e in index.entries if e.identifier == identifier]
    if not cands:
        raise EntryNotFoundError(f"no entry with identifier '{identifier}'")
    if version == "latest":
        live = [e for e in cands if not e.deprecated]
        if not live:
            raise EntryNotFoundError(f"every version of '{identifier}' is deprecated")
        return max(live, key=lambda e: parse_version(e.version))
    for e in cands:
        if e.version == version:
            return e
    raise EntryNotFoundError(f"'{identifier}' has no version {version}; available: {', '.join(e.version for e in cands)}")


def _blob_location(h: str) -> str:
    return f"blobs/{h[:2]}/{h}"


def _verified(entry: RegistryEntry, data: bytes) -> bytes:
    got = _jsonio.sha256_bytes(data)
    if got != entry.content_hash:
        raise IntegrityError(f"{entry.identifier} {entry.version}: stored bytes hash to {got}, index says {entry.content_hash}")
    return data


class LocalRegistry:
    """Registry rooted at a local directory; publish and deprecate take a lock."""

    writable = True

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        self._lock = FileLock(str(self.root / ".index.lock"))

    def _ensure(self) -> None:
        self.root.mkdir(parents=True, exist_ok=True)

    def read_index(self) -> RegistryIndex:
        p = self.root / INDEX_NAME
        if not p.is_file():
            return RegistryIndex()
        return RegistryIndex.from_dict(_jsonio.loads(p.read_text(encoding="utf-8")))

    def _write_index(self, index: RegistryIndex) -> None:
        tmp = self.root / (INDEX_NAME + ".tmp")
        tmp.write_text(index.to_json(), encoding="utf-8")
        os.replace(tmp, self.root / INDEX_NAME)

    def publish(
        self,
        data: bytes,
        identifier: str,
        version: str,
        kind: str,
        keywords: Sequence[str] = (),
        description: str = "",
        citation: str = "",
        confidential: bool | None = None,
    ) -> RegistryEntry:
        """Store ``data`` and append an index entry.

        Datasets must be explicitly marked non-confidential
        (``confidential=False``); anything else is refused.
        """
        if kind not in KINDS:
            raise RegistryError(f"unknown kind '{kind}'; expected one of {', '.join(KINDS)}")
        if not _SLUG.match(identifier):
            raise RegistryError(f"identifier '{identifier}' is not a valid slug")
        parse_version(version)
        if kind == "dataset" and confidential is not False:
            raise ConfidentialDataError("confidential data cannot be shared")
        data = bytes(data)
        h = _jsonio.sha256_bytes(data)
        self._ensure()
        with self._lock:
            index = self.read_index()
            if index.find(identifier, version) is not None:
                raise DuplicateEntryError(f"{identifier} {version} is already published")
            blob = self.root / _blob_location(h)
            if not blob.is_file():
                blob.parent.mkdir(parents=True, exist_ok=True)
                blob.write_bytes(data)
            entry = RegistryEntry(identifier, kind, version, h, _blob_location(h), tuple(keywords), description, False, citation, bool(confidential))
            self._write_index(RegistryIndex(index.entries + (entry,), index.index_version + 1))
        return entry

    def search(self, query: str, kind: str | None = None, include_deprecated: bool = False) -> list[RegistryEntry]:
        return search_entries(self.read_index(), query, kind, include_deprecated)

    def fetch(self, identifier: str, version: str = "latest") -> tuple[bytes, RegistryEntry]:
        entry = resolve_entry(self.read_index(), identifier, version)
        p = self.root / entry.location
        if not p.is_file():
            raise IntegrityError(f"{identifier} {entry.version}: blob missing at {entry.location}")
        return _verified(entry, p.read_bytes()), entry

    def deprecate(self, identifier: str, version: str) -> RegistryEntry:
        with self._lock:
            index = self.read_index()
            target = index.find(identifier, version)
            if target is None:
                raise EntryNotFoundError(f"{identifier} {version} is not published")
            new = replace(target, deprecated=True)
            entries = tuple(new if e is target else e for e in index.entries)
            self._write_index(RegistryIndex(entries, index.index_version + 1))
        return new


@dataclass
class HttpRegistry:
    """Read-only registry served over HTTP GET with the local layout."""

    base_url: str
    timeout: float = 30.0
    writable: bool = field(default=False, init=False)

    def _get(self, rel: str) -> bytes:
        url = urllib.parse.urljoin(self.base_url.rstrip("/") + "/", rel)
        try:
            with urllib.request.urlopen(url, timeout=self.timeout) as resp:
                return resp.read()
        except urllib.error.HTTPError as exc:
            if exc.code == 404:
                raise EntryNotFoundError(f"not found: {url}") from None
            raise RegistryError(f"GET {url} failed: HTTP {exc.code}") from None
        except urllib.error.URLError as exc:
            raise RegistryError(f"GET {url} failed: {exc.reason}") from None

    def read_index(self) -> RegistryIndex:
        return RegistryIndex.from_dict(_jsonio.loads(self._get(INDEX_NAME).decode("utf-8")))

    def search(self, query: str, kind: str | None = None, include_deprecated: bool = False) -> list[RegistryEntry]:
        return search_entries(self.read_index(), query, kind, include_deprecated)

    def fetch(self, identifier: str, version: str = "latest") -> tuple[bytes, RegistryEntry]:
        entry = resolve_entry(self.read_index(), identifier, version)
        return _verified(entry, self._get(entry.location)), entry

    def publish(self, *args, **kwargs):
        raise RegistryError("HTTP registries are read-only; publish to a local directory instead")

    def deprecate(self, *args, **kwargs):
        raise RegistryError("HTTP registries are read-only")


def open_registry(location: str | os.PathLike | None = None) -> LocalRegistry | HttpRegistry:
    """Local directory or ``http(s)://`` URL; falls back to ``$READY_REGISTRY_URL``."""
    loc = location if location is not None else os.environ.get(REGISTRY_ENV)
    if not loc:
        raise RegistryError(f"no registry given and {REGISTRY_ENV} is not set")
    loc = str(loc)
    if loc.startswith(("http://", "https://")):
        return HttpRegistry(loc)
    if loc.startswith("file://"):
        loc = urllib.parse.urlparse(loc).path
    return LocalRegistry(loc)
