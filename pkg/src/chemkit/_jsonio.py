"""Deterministic JSON encoding and content hashing.

Floats are written with 17 significant digits so every double survives a
round trip bit-for-bit; NaN is written as ``null``. Key order is the
insertion order of the mapping, which lets callers fix field order.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Any

import numpy as np


def _float(x: float) -> str:
    if math.isnan(x):
        return "null"
    if math.isinf(x):
        raise ValueError("cannot serialize infinite value")
    s = format(x, ".17g")
    if "." not in s and "e" not in s:
        # keep a decimal point so the value reads back as float
        s += ".0"
    return s


def _encode(obj: Any, indent: int | None, level: int) -> str:
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist(), indent, level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{json.dumps(str(k), ensure_ascii=False)}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return _wrap("{", "}", items, indent, level)
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [_encode(v, indent, level + 1) for v in obj]
        return _wrap("[", "]", items, indent, level)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _wrap(open_: str, close: str, items: list[str], indent: int | None, level: int) -> str:
    if indent is None:
        return open_ + ", ".join(items) + close
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    return open_ + "\n" + ",\n".join(pad + it for it in items) + "\n" + end + close


def dumps(obj: Any, indent: int | None = 2) -> str:
    return _encode(obj, indent, 0)


def loads(text: str) -> Any:
    return json.loads(text)


def canonical_bytes(obj: Any) -> bytes:
    return dumps(obj, indent=None).encode("utf-8")


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def as_float(value: Any) -> float:
    """Inverse of the encoder for numbers: ``null`` reads back as NaN."""
    return math.nan if value is None else float(value)
