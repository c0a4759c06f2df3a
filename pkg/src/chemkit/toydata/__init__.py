"""Shipped toy data: fake two-round records, dictionary, instruments, manifest.

Regenerate with ``python3 -m chemkit.toydata.generate`` (deterministic).
"""

from __future__ import annotations

from pathlib import Path

HERE = Path(__file__).resolve().parent

FILES = (
    "toy_records.csv",
    "toy_dictionary.csv",
    "toy_additive.json",
    "toy_multiplicative.json",
    "toy_manifest.json",
)


def path(name: str) -> Path:
    """Absolute path of a shipped toy file."""
    p = HERE / name
    if not p.is_file():
        raise FileNotFoundError(f"no toy file '{name}'; available: {', '.join(FILES)}")
    return p
