"""Module template, verb vocabulary and verb dispatch.

Every public operation in chemkit is reachable through one of fifteen verbs.
A :class:`ModuleDescriptor` declares which verbs a module supports and what
state slots it carries; a :class:`ModuleCollection` maps ``(module, verb)``
pairs to implementations; :func:`invoke` runs one verb on a
:class:`ModuleInstance` with all-or-nothing state semantics.
"""

from __future__ import annotations

import copy
import pickle
import re
from dataclasses import dataclass, replace
from typing import Any, Callable, Iterable, Mapping

from . import _jsonio
from .errors import DefinitionError, InvocationError, LifecycleError, UnsupportedVerbError

VERBS: tuple[str, ...] = (
    "ingest",
    "validate",
    "describe",
    "depict",
    "transform",
    "score",
    "specify",
    "evaluate",
    "select",
    "predict",
    "report",
    "export",
    "share",
    "renew",
    "search",
)

LIFECYCLES = ("experimental", "stable", "deprecated")

SLOT_TYPES: dict[str, tuple[type, ...] | None] = {
    "number": (int, float),
    "integer": (int,),
    "text": (str,),
    "flag": (bool,),
    "table": None,
    "dataset": None,
    "model": None,
    "mapping": (dict,),
    "list": (list, tuple),
    "any": None,
}

_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\-]*$")
_SEMVER = re.compile(r"^(0|[1-9]\d*)\.(0|[1-9]\d*)\.(0|[1-9]\d*)$")


def parse_version(version: str) -> tuple[int, int, int]:
    m = _SEMVER.match(str(version))
    if not m:
        raise DefinitionError(f"version '{version}' is not of the form major.minor.patch")
    return int(m.group(1)), int(m.group(2)), int(m.group(3))


def _check_verbs(verbs: Iterable[str]) -> tuple[str, ...]:
    out: list[str] = []
    for v in verbs:
        if v not in VERBS:
            raise DefinitionError(f"unknown verb '{v}'; legal verbs: {', '.join(VERBS)}")
        if v not in out:
            out.append(v)
    return tuple(out)


def _check_slots(slots) -> tuple[tuple[str, str], ...]:
    pairs = list(slots.items()) if isinstance(slots, Mapping) else [tuple(s) for s in slots]
    seen: set[str] = set()
    for name, kind in pairs:
        if name in seen:
            raise DefinitionError(f"duplicate slot '{name}'")
        if kind not in SLOT_TYPES:
            raise DefinitionError(f"slot '{name}': unknown type '{kind}'; known types: {', '.join(SLOT_TYPES)}")
        seen.add(name)
    return tuple((str(n), str(k)) for n, k in pairs)


@dataclass(frozen=True)
class ModuleDescriptor:
    """Immutable description of a module: identity, state slots and verbs."""

    name: str
    version: str
    parent: str | None
    slots: tuple[tuple[str, str], ...]
    supported_verbs: tuple[str, ...]
    lifecycle: str = "experimental"
    citation: str = ""

    def __post_init__(self):
        if not self.name or not _IDENT.match(self.name):
            raise DefinitionError(f"invalid module name '{self.name}'")
        parse_version(self.version)
        if self.lifecycle not in LIFECYCLES:
            raise DefinitionError(f"lifecycle must be one of {LIFECYCLES}, got '{self.lifecycle}'")
        object.__setattr__(self, "slots", _check_slots(self.slots))
        object.__setattr__(self, "supported_verbs", _check_verbs(self.supported_verbs))

    @property
    def slot_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.slots)

    @property
    def slot_types(self) -> dict[str, str]:
        return dict(self.slots)

    def supports(self, verb: str) -> bool:
        return verb in self.supported_verbs

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "version": self.version,
            "parent": self.parent,
            "slots": dict(self.slots),
            "supported_verbs": list(self.supported_verbs),
            "lifecycle": self.lifecycle,
            "citation": self.citation,
        }

    def to_json(self) -> str:
        return _jsonio.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> ModuleDescriptor:
        return cls(
            name=d["name"],
            version=d["version"],
            parent=d.get("parent"),
            slots=tuple((k, v) for k, v in d.get("slots", {}).items()),
            supported_verbs=tuple(d.get("supported_verbs", ())),
            lifecycle=d.get("lifecycle", "experimental"),
            citation=d.get("citation", ""),
        )

    @classmethod
    def from_json(cls, text: str) -> ModuleDescriptor:
        return cls.from_dict(_jsonio.loads(text))


def define_module(name: str, slots, verbs: Iterable[str], version: str = "0.1.0", citation: str = "") -> ModuleDescriptor:
    """Create a fresh, experimental descriptor with no parent.

    ``slots`` is either a mapping or a sequence of ``(name, type)`` pairs;
    pass pairs when you want duplicate names to be caught.
    """
    return ModuleDescriptor(
        name=name,
        version=version,
        parent=None,
        slots=_check_slots(slots),
        supported_verbs=_check_verbs(verbs),
        lifecycle="experimental",
        citation=citation,
    )


def inherit_module(parent: ModuleDescriptor, name: str, slot_overrides=(), extra_verbs: Iterable[str] = (), version: str | None = None) -> ModuleDescriptor:
    if parent.lifecycle == "deprecated":
        raise LifecycleError(f"parent '{parent.name}' is deprecated")
    overrides = dict(_check_slots(slot_overrides))
    slots = [(n, overrides.pop(n, t)) for n, t in parent.slots]
    slots.extend(overrides.items())
    return ModuleDescriptor(
        name=name,
        version=version or "0.1.0",
        parent=parent.name,
        slots=tuple(slots),
        supported_verbs=_check_verbs(list(parent.supported_verbs) + list(extra_verbs)),
        lifecycle="experimental",
        citation=parent.citation,
    )


def renew(descriptor: ModuleDescriptor, bump: str, lifecycle: str | None = None) -> ModuleDescriptor:
    """Bump the semantic version; lower components reset to zero.

    Deprecation is one-way: a deprecated descriptor can be bumped again but
    never moved back to ``experimental`` or ``stable``.
    """
    major, minor, patch = parse_version(descriptor.version)
    if bump == "major":
        major, minor, patch = major + 1, 0, 0
    elif bump == "minor":
        minor, patch = minor + 1, 0
    elif bump == "patch":
        patch += 1
    else:
        raise DefinitionError(f"bump must be major, minor or patch, got '{bump}'")
    new_life = descriptor.lifecycle if lifecycle is None else lifecycle
    if descriptor.lifecycle == "deprecated" and new_life != "deprecated":
        raise LifecycleError(f"cannot un-deprecate module '{descriptor.name}'")
    return replace(descriptor, version=f"{major}.{minor}.{patch}", lifecycle=new_life)


def _conforms(value: Any, kind: str) -> bool:
    types = SLOT_TYPES[kind]
    if value is None or types is None:
        return True
    if kind in ("number", "integer") and isinstance(value, bool):
        return False
    return isinstance(value, types)


Implementation = Callable[[dict, Any], Any]


class ModuleCollection:
    """Loaded descriptors plus the dispatch table of verb implementations.

    Implementations are looked up by ``(descriptor name, verb)``; a child
    descriptor falls back to its parent's implementation for verbs it does
    not override, so inheriting with no overrides reproduces the parent.
    """

    def __init__(self):
        self._descriptors: dict[str, ModuleDescriptor] = {}
        self._impls: dict[tuple[str, str], Implementation] = {}

    def add(self, descriptor: ModuleDescriptor) -> ModuleDescriptor:
        if descriptor.name in self._descriptors and self._descriptors[descriptor.name] != descriptor:
            raise DefinitionError(f"module name '{descriptor.name}' already loaded")
        if descriptor.parent is not None and descriptor.parent in self._descriptors:
            parent = self._descriptors[descriptor.parent]
            missing = set(parent.slot_names) - set(descriptor.slot_names)
            if missing:
                raise DefinitionError(f"'{descriptor.name}' drops parent slots: {sorted(missing)}")
            dropped = set(parent.supported_verbs) - set(descriptor.supported_verbs)
            if dropped:
                raise DefinitionError(f"'{descriptor.name}' drops parent verbs: {sorted(dropped)}")
        self._descriptors[descriptor.name] = descriptor
        return descriptor

    def __contains__(self, name: str) -> bool:
        return name in self._descriptors

    def __getitem__(self, name: str) -> ModuleDescriptor:
        return self._descriptors[name]

    def names(self) -> list[str]:
        return list(self._descriptors)

    def implement(self, module: str, verb: str):
        """Decorator registering ``fn(state, payload) -> output`` for a verb."""
        _check_verbs([verb])

        def deco(fn: Implementation) -> Implementation:
            self._impls[(module, verb)] = fn
            return fn

        return deco

    def resolve(self, module: str, verb: str) -> Implementation | None:
        name: str | None = module
        hops = 0
        while name is not None and hops < 64:
            fn = self._impls.get((name, verb))
            if fn is not None:
                return fn
            desc = self._descriptors.get(name)
            name = desc.parent if desc is not None else None
            hops += 1
        return None

    def instantiate(self, name: str, **state) -> ModuleInstance:
        return ModuleInstance(self._descriptors[name], state, self)


class ModuleInstance:
    """A descriptor plus private state. State is only changed through :func:`invoke`."""

    __slots__ = ("_descriptor", "_state", "_collection")

    def __init__(self, descriptor: ModuleDescriptor, state: Mapping[str, Any] | None = None, collection: ModuleCollection | None = None):
        state = dict(state or {})
        types = descriptor.slot_types
        for key, value in state.items():
            if key not in types:
                raise DefinitionError(f"module '{descriptor.name}' has no slot '{key}'")
            if not _conforms(value, types[key]):
                raise DefinitionError(f"slot '{key}' expects {types[key]}, got {type(value).__name__}")
        self._descriptor = descriptor
        self._state = copy.deepcopy(state)
        self._collection = collection

    @property
    def descriptor(self) -> ModuleDescriptor:
        return self._descriptor

    def get(self, slot: str) -> Any:
        """Return a copy of a slot value (callers cannot mutate the instance)."""
        if slot not in self._descriptor.slot_types:
            raise KeyError(slot)
        return copy.deepcopy(self._state.get(slot))

    def snapshot(self) -> bytes:
        return pickle.dumps((self._descriptor.to_dict(), sorted(self._state.items(), key=lambda kv: kv[0])))

    def __repr__(self):
        return f"ModuleInstance({self._descriptor.name}@{self._descriptor.version})"


def invoke(instance: ModuleInstance, verb: str, payload: Any = None, collection: ModuleCollection | None = None) -> tuple[Any, ModuleInstance]:
    """Run ``verb`` on ``instance``.

    Returns ``(output, new_instance)``. The implementation works on a deep
    copy of the state; the input instance is never touched, so a failure
    leaves it exactly as it was.
    """
    desc = instance.descriptor
    if verb not in desc.supported_verbs:
        raise UnsupportedVerbError(desc.name, verb, desc.supported_verbs)
    coll = collection or instance._collection or default_collection
    fn = coll.resolve(desc.name, verb)
    if fn is None:
        raise UnsupportedVerbError(desc.name, verb, desc.supported_verbs)
    work = copy.deepcopy(instance._state)
    try:
        output = fn(work, payload)
    except Exception as exc:
        raise InvocationError(desc.name, verb, exc) from exc
    try:
        updated = ModuleInstance(desc, work, coll)
    except DefinitionError as exc:
        raise InvocationError(desc.name, verb, exc) from exc
    return output, updated


default_collection = ModuleCollection()
