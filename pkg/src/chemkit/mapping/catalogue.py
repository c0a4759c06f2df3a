"""Record-free model catalogues: build, serialize, load, and tabulate."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Mapping, Sequence

from .. import _jsonio
from .._version import __version__
from ..errors import CatalogueError
from .evaluate import PerformanceRecord
from .models import FittedModel

PERFORMANCE_COLUMNS = ("family", "predictors", "covariates", "r2_cv", "rmse_cv", "mae_cv", "r2_in", "rmse_in", "mae_in")


@dataclass(frozen=True)
class ModelCatalogue:
    records: tuple[PerformanceRecord, ...]
    dataset_fingerprint: str
    instrument: str
    created_utc: str
    toolkit_version: str = __version__
    identifier: str | None = None

    @property
    def models(self) -> list[FittedModel]:
        return [r.model for r in self.records]

    def to_dict(self) -> dict:
        return {
            "toolkit_version": self.toolkit_version,
            "dataset_fingerprint": self.dataset_fingerprint,
            "instrument": self.instrument,
            "created_utc": self.created_utc,
            "identifier": self.identifier,
            "models": [{"model": r.model.to_dict(), "performance": r.to_dict()} for r in self.records],
        }

    def to_json(self) -> str:
        return _jsonio.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: Mapping) -> ModelCatalogue:
        recs = tuple(PerformanceRecord.from_dict(m["performance"], FittedModel.from_dict(m["model"])) for m in d["models"])
        return cls(recs, d["dataset_fingerprint"], d["instrument"], d["created_utc"], d.get("toolkit_version", __version__), d.get("identifier"))

    def performance_csv(self) -> str:
        return performance_csv(self.records)


def _utc_now() -> str:
    return datetime.now(timezone.utc).replace(microsecond=0).strftime("%Y-%m-%dT%H:%M:%SZ")


def build_catalogue(
    records: Sequence[PerformanceRecord],
    dataset_fingerprint: str,
    instrument: str,
    created_utc: str | None = None,
    identifier: str | None = None,
) -> ModelCatalogue:
    """Bundle fitted models and their performance for sharing.

    Every record must carry a model, and no model may carry row-level
    payloads (strip them with :meth:`FittedModel.strip` first).
    """
    if not records:
        raise CatalogueError("a catalogue needs at least one model")
    for i, r in enumerate(records):
        if r.model is None:
            raise CatalogueError(f"record {i} has no fitted model")
        if r.model.fitted_values is not None:
            raise CatalogueError(f"record-free invariant violated: model {i} ({r.family}) carries row-level fitted values")
    return ModelCatalogue(tuple(records), dataset_fingerprint, instrument, created_utc or _utc_now(), __version__, identifier)


def load_catalogue(text: str) -> ModelCatalogue:
    return ModelCatalogue.from_dict(_jsonio.loads(text))


def _num(x: float) -> str:
    return "NA" if x != x else format(x, ".17g")


def performance_csv(records: Sequence[PerformanceRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PERFORMANCE_COLUMNS)
    for r in records:
        w.writerow([
            r.family, "|".join(r.predictors), "|".join(r.covariates),
            _num(r.cv.r2), _num(r.cv.rmse), _num(r.cv.mae),
            _num(r.in_sample.r2), _num(r.in_sample.rmse), _num(r.in_sample.mae),
        ])
    return buf.getvalue()
