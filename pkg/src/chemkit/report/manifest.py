"""Replication manifests: an ordered, seeded step graph executed with content hashing."""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from pathlib import Path, PurePosixPath
from typing import Any, Mapping, Sequence

from .. import _jsonio
from .._version import __version__
from ..errors import ManifestError, StepFailedError, root_cause

DEFAULT_CREATED_UTC = "1970-01-01T00:00:00Z"
RUN_RECORD_NAME = "run_record.json"


@dataclass(frozen=True)
class Step:
    step_id: str
    module: str
    verb: str
    inputs: tuple[str, ...] = ()
    outputs: tuple[str, ...] = ()
    params: Mapping[str, Any] = field(default_factory=dict)
    note: str = ""

    def to_dict(self) -> dict:
        d = {
            "step_id": self.step_id,
            "module": self.module,
            "verb": self.verb,
            "inputs": list(self.inputs),
            "outputs": list(self.outputs),
            "params": dict(self.params),
        }
        if self.note:
            d["note"] = self.note
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> Step:
        try:
            return cls(
                step_id=str(d["step_id"]),
                module=d["module"],
                verb=d["verb"],
                inputs=tuple(d.get("inputs", ())),
                outputs=tuple(d.get("outputs", ())),
                params=dict(d.get("params", {})),
                note=d.get("note", ""),
            )
        except KeyError as exc:
            raise ManifestError(f"manifest step missing field {exc}") from None


@dataclass(frozen=True)
class PipelineManifest:
    steps: tuple[Step, ...]
    seed: int
    toolkit_version: str = __version__
    created_utc: str = DEFAULT_CREATED_UTC
    base_dir: Path = field(default=Path("."), compare=False)
    order: tuple[str, ...] = field(default=(), compare=False)

    def step(self, step_id: str) -> Step:
        for s in self.steps:
            if s.step_id == step_id:
                return s
        raise KeyError(step_id)

    def producers(self) -> dict[str, str]:
        return {out: s.step_id for s in self.steps for out in s.outputs}

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "toolkit_version": self.toolkit_version,
            "created_utc": self.created_utc,
            "steps": [s.to_dict() for s in self.steps],
        }

    def to_json(self) -> str:
        return _jsonio.dumps(self.to_dict())


def _safe_name(name: str, step_id: str) -> None:
    p = PurePosixPath(name)
    if not name or p.is_absolute() or ".." in p.parts or "\\" in name:
        raise ManifestError(f"step '{step_id}': output '{name}' must be a relative path inside the work directory")


def _find_cycle(ids: list[str], deps: dict[str, list[str]]) -> list[str] | None:
    state: dict[str, int] = {}
    stack: list[str] = []

    def visit(u: str) -> list[str] | None:
        state[u] = 1
        stack.append(u)
        for v in deps[u]:
            if state.get(v) == 1:
                return stack[stack.index(v):] + [v]
            if v not in state:
                found = visit(v)
                if found:
                    return found
        stack.pop()
        state[u] = 2
        return None

    for u in ids:
        if u not in state:
            found = visit(u)
            if found:
                return found
    return None


def _topological(ids: list[str], deps: dict[str, list[str]]) -> list[str]:
    """Kahn's algorithm; among ready steps, declaration order wins."""
    remaining = {u: set(deps[u]) for u in ids}
    order: list[str] = []
    while remaining:
        ready = [u for u in ids if u in remaining and not remaining[u]]
        u = ready[0]
        order.append(u)
        del remaining[u]
        for v in remaining.values():
            v.discard(u)
    return order


def build_manifest(
    steps: Sequence[Step | Mapping],
    seed: int,
    toolkit_version: str = __version__,
    created_utc: str = DEFAULT_CREATED_UTC,
    base_dir: str | os.PathLike | None = None,
    collection=None,
) -> PipelineManifest:
    """Validate a step list into an acyclic, fully-resolved manifest.

    Every input must be another step's output or an existing file under
    ``base_dir``. ``collection`` (default: the built-in modules) is used to
    check that each step's module supports its verb.
    """
    from ..modules import builtin_collection

    coll = collection or builtin_collection()
    base = Path(base_dir) if base_dir is not None else Path(".")
    steps = tuple(s if isinstance(s, Step) else Step.from_dict(s) for s in steps)
    ids = [s.step_id for s in steps]
    dup = sorted({i for i in ids if ids.count(i) > 1})
    if dup:
        raise ManifestError(f"duplicate step ids: {', '.join(dup)}")
    producers: dict[str, str] = {}
    for s in steps:
        if s.module not in coll:
            raise ManifestError(f"step '{s.step_id}': unknown module '{s.module}'")
        desc = coll[s.module]
        if s.verb not in desc.supported_verbs:
            raise ManifestError(f"step '{s.step_id}': module '{s.module}' supports: {', '.join(desc.supported_verbs)}")
        for out in s.outputs:
            _safe_name(out, s.step_id)
            if out in producers:
                raise ManifestError(f"output '{out}' produced by both '{producers[out]}' and '{s.step_id}'")
            producers[out] = s.step_id
    deps = {s.step_id: sorted({producers[i] for i in s.inputs if i in producers}, key=ids.index) for s in steps}
    cycle = _find_cycle(ids, deps)
    if cycle:
        # deps point from consumer to producer; report in data-flow direction
        flow = list(reversed(cycle))
        label = f"{flow[0]}↔{flow[1]}" if len(flow) == 3 else "→".join(flow)
        raise ManifestError(f"cycle between steps: {label}")
    for s in steps:
        for ref in s.inputs:
            if ref not in producers and not (base / ref).is_file():
                raise ManifestError(f"step '{s.step_id}': dangling input '{ref}' is neither an existing file nor a step output")
    return PipelineManifest(steps, int(seed), toolkit_version, created_utc, base, tuple(_topological(ids, deps)))


def load_manifest(path: str | os.PathLike, collection=None) -> PipelineManifest:
    path = Path(path)
    d = _jsonio.loads(path.read_text(encoding="utf-8"))
    try:
        return build_manifest(
            d["steps"],
            d["seed"],
            d.get("toolkit_version", __version__),
            d.get("created_utc", DEFAULT_CREATED_UTC),
            base_dir=path.parent,
            collection=collection,
        )
    except KeyError as exc:
        raise ManifestError(f"manifest missing field {exc}") from None


@dataclass(frozen=True)
class StepPayload:
    """What a step implementation receives when run from a manifest or the CLI."""

    inputs: tuple[Path, ...]
    outputs: tuple[Path, ...]
    params: Mapping[str, Any]
    seed: int = 0
    created_utc: str = DEFAULT_CREATED_UTC
    step_id: str = ""


@dataclass
class StepRecord:
    step_id: str
    status: str
    input_hashes: dict[str, str] = field(default_factory=dict)
    output_hashes: dict[str, str] = field(default_factory=dict)
    duration_ms: int = 0
    error: str | None = None

    def to_dict(self) -> dict:
        d = {
            "step_id": self.step_id,
            "status": self.status,
            "input_hashes": dict(self.input_hashes),
            "output_hashes": dict(self.output_hashes),
            "duration_ms": self.duration_ms,
        }
        if self.error is not None:
            d["error"] = self.error
        return d


@dataclass
class RunRecord:
    seed: int
    toolkit_version: str
    steps: list[StepRecord]

    @property
    def status(self) -> str:
        return "failed" if any(s.status == "failed" for s in self.steps) else "succeeded"

    @property
    def failed_step(self) -> str | None:
        for s in self.steps:
            if s.status == "failed":
                return s.step_id
        return None

    def record_hash(self) -> str:
        """SHA-256 over everything except timings, so identical reruns hash identically."""
        core = {
            "seed": self.seed,
            "toolkit_version": self.toolkit_version,
            "steps": [{k: v for k, v in s.to_dict().items() if k != "duration_ms"} for s in self.steps],
        }
        return _jsonio.sha256_bytes(_jsonio.canonical_bytes(core))

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "toolkit_version": self.toolkit_version,
            "status": self.status,
            "record_hash": self.record_hash(),
            "steps": [s.to_dict() for s in self.steps],
        }

    def to_json(self) -> str:
        return _jsonio.dumps(self.to_dict())


@dataclass(frozen=True)
class RunResult:
    artifacts: dict[str, Path]
    record: RunRecord
    outputs: dict[str, Any] = field(default_factory=dict)


def run_manifest(m: PipelineManifest, workdir: str | os.PathLike, collection=None, raise_on_failure: bool = True) -> RunResult:
    """Execute steps in topological order, writing every output under ``workdir``.

    A failing step halts the run: it is marked ``failed``, later steps are
    marked ``skipped``, the run record is still written, and (by default)
    :class:`~chemkit.errors.StepFailedError` is raised.
    """
    from ..core import invoke
    from ..modules import builtin_collection

    coll = collection or builtin_collection()
    work = Path(workdir)
    work.mkdir(parents=True, exist_ok=True)
    producers = m.producers()
    order = m.order or tuple(s.step_id for s in m.steps)
    records: dict[str, StepRecord] = {}
    artifacts: dict[str, Path] = {}
    outputs: dict[str, Any] = {}
    failure: tuple[str, BaseException] | None = None
    for sid in order:
        step = m.step(sid)
        if failure is not None:
            records[sid] = StepRecord(sid, "skipped")
            continue
        in_paths = tuple(work / ref if ref in producers else m.base_dir / ref for ref in step.inputs)
        out_paths = tuple(work / name for name in step.outputs)
        for p in out_paths:
            p.parent.mkdir(parents=True, exist_ok=True)
        rec = StepRecord(sid, "running", {ref: _jsonio.sha256_file(p) for ref, p in zip(step.inputs, in_paths)})
        payload = StepPayload(in_paths, out_paths, dict(step.params), int(step.params.get("seed", m.seed)), m.created_utc, sid)
        t0 = time.perf_counter()
        try:
            inst = coll.instantiate(step.module)
            outputs[sid], _ = invoke(inst, step.verb, payload, coll)
            missing = [str(n) for n, p in zip(step.outputs, out_paths) if not p.is_file()]
            if missing:
                raise ManifestError(f"step '{sid}' did not write declared outputs: {', '.join(missing)}")
        except Exception as exc:
            rec.status = "failed"
            rec.error = str(root_cause(exc))
            failure = (sid, exc)
        else:
            rec.status = "succeeded"
            rec.output_hashes = {name: _jsonio.sha256_file(p) for name, p in zip(step.outputs, out_paths)}
            artifacts.update(zip(step.outputs, out_paths))
        rec.duration_ms = int(round((time.perf_counter() - t0) * 1000))
        records[sid] = rec
    record = RunRecord(m.seed, m.toolkit_version, [records[s.step_id] for s in sorted(m.steps, key=lambda s: s.step_id)])
    (work / RUN_RECORD_NAME).write_text(record.to_json(), encoding="utf-8")
    if failure is not None and raise_on_failure:
        raise StepFailedError(failure[0], failure[1], record)
    return RunResult(artifacts, record, outputs)
