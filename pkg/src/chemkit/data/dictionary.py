"""Data dictionaries: per-variable class and allowable values."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from ..errors import DictionaryError

CLASSES = ("integer", "double", "categorical", "date", "text")
NUMERIC_CLASSES = ("integer", "double")
DICTIONARY_COLUMNS = ("variable", "class", "min", "max", "allowed_set", "description")


def _fmt_bound(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


@dataclass(frozen=True)
class DictionaryEntry:
    variable: str
    cls: str
    min: float | None = None
    max: float | None = None
    allowed_set: tuple[str, ...] | None = None
    description: str = ""

    def __post_init__(self):
        v = self.variable
        if not v:
            raise DictionaryError("dictionary entry with empty variable name")
        if self.cls not in CLASSES:
            raise DictionaryError(f"{v}: unknown class '{self.cls}'; expected one of {', '.join(CLASSES)}")
        if self.cls in NUMERIC_CLASSES:
            if self.allowed_set is not None:
                raise DictionaryError(f"{v}: allowed_set is only valid for categorical variables")
            for b in (self.min, self.max):
                if b is not None and (not isinstance(b, (int, float)) or math.isnan(b)):
                    raise DictionaryError(f"{v}: bound {b!r} is not a number")
            if self.min is not None and self.max is not None and self.min > self.max:
                raise DictionaryError(f"{v}: min {_fmt_bound(self.min)} > max {_fmt_bound(self.max)}")
        elif self.cls == "categorical":
            if not self.allowed_set:
                raise DictionaryError(f"{v}: categorical variables need a nonempty allowed_set")
            if self.min is not None or self.max is not None:
                raise DictionaryError(f"{v}: min/max are not valid for categorical variables")
            if len(set(self.allowed_set)) != len(self.allowed_set):
                raise DictionaryError(f"{v}: allowed_set has duplicate levels")
            object.__setattr__(self, "allowed_set", tuple(str(a) for a in self.allowed_set))
        else:
            if self.min is not None or self.max is not None or self.allowed_set is not None:
                raise DictionaryError(f"{v}: {self.cls} variables take no bounds or allowed_set")

    @property
    def is_numeric(self) -> bool:
        return self.cls in NUMERIC_CLASSES

    def describe_bound(self) -> str:
        """Human-readable permitted range or set, used in error messages."""
        if self.cls == "categorical":
            return "{" + ", ".join(self.allowed_set) + "}"
        if self.is_numeric:
            lo = "-inf" if self.min is None else _fmt_bound(self.min)
            hi = "inf" if self.max is None else _fmt_bound(self.max)
            return f"[{lo}, {hi}]"
        return self.cls

    def to_dict(self) -> dict:
        return {
            "variable": self.variable,
            "class": self.cls,
            "min": self.min,
            "max": self.max,
            "allowed_set": list(self.allowed_set) if self.allowed_set is not None else None,
            "description": self.description,
        }

    @classmethod
    def from_dict(cls, d: dict) -> DictionaryEntry:
        allowed = d.get("allowed_set")
        return cls(
            variable=d["variable"],
            cls=d["class"],
            min=d.get("min"),
            max=d.get("max"),
            allowed_set=tuple(allowed) if allowed is not None else None,
            description=d.get("description", "") or "",
        )


@dataclass(frozen=True)
class DataDictionary:
    entries: tuple[DictionaryEntry, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        seen: set[str] = set()
        for e in self.entries:
            if e.variable in seen:
                raise DictionaryError(f"duplicate dictionary entry for '{e.variable}'")
            seen.add(e.variable)

    def __contains__(self, variable: str) -> bool:
        return any(e.variable == variable for e in self.entries)

    def __getitem__(self, variable: str) -> DictionaryEntry:
        for e in self.entries:
            if e.variable == variable:
                return e
        raise KeyError(variable)

    def __iter__(self) -> Iterator[DictionaryEntry]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def variables(self) -> list[str]:
        return [e.variable for e in self.entries]

    def extended(self, extra: Iterable[DictionaryEntry]) -> DataDictionary:
        return DataDictionary(self.entries + tuple(extra))

    def to_dicts(self) -> list[dict]:
        return [e.to_dict() for e in self.entries]

    @classmethod
    def from_dicts(cls, rows: Iterable[dict]) -> DataDictionary:
        return cls(tuple(DictionaryEntry.from_dict(r) for r in rows))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(DICTIONARY_COLUMNS)
        for e in self.entries:
            w.writerow([
                e.variable,
                e.cls,
                "" if e.min is None else _fmt_bound(e.min),
                "" if e.max is None else _fmt_bound(e.max),
                "|".join(e.allowed_set) if e.allowed_set else "",
                e.description,
            ])
        return buf.getvalue()


def _parse_number(text: str, variable: str, line: int, what: str) -> float | None:
    text = text.strip()
    if text == "":
        return None
    try:
        return float(text)
    except ValueError:
        raise DictionaryError(f"line {line}: {variable}: {what} '{text}' is not a number") from None


def load_dictionary(source: str) -> DataDictionary:
    """Parse dictionary CSV text.

    Columns are ``variable,class,min,max,allowed_set,description``; the
    header row is optional. ``allowed_set`` is pipe-delimited.
    """
    reader = csv.reader(io.StringIO(source))
    entries: list[DictionaryEntry] = []
    first = True
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if first:
            first = False
            if [c.strip().lower() for c in row] == list(DICTIONARY_COLUMNS):
                continue
        if len(row) == 5:
            row = row + [""]
        if len(row) != 6:
            raise DictionaryError(f"line {line}: expected 6 fields, got {len(row)}")
        variable, cls, lo, hi, allowed, desc = (c.strip() for c in row)
        try:
            entries.append(DictionaryEntry(
                variable=variable,
                cls=cls,
                min=_parse_number(lo, variable, line, "min"),
                max=_parse_number(hi, variable, line, "max"),
                allowed_set=tuple(a.strip() for a in allowed.split("|")) if allowed else None,
                description=desc,
            ))
        except DictionaryError as exc:
            msg = str(exc)
            if not msg.startswith("line "):
                # keep the variable-first message readable, add the location after it
                msg = f"{msg} (line {line})"
            raise DictionaryError(msg) from None
    try:
        return DataDictionary(tuple(entries))
    except DictionaryError as exc:
        raise DictionaryError(str(exc)) from None
