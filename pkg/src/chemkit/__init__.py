"""chemkit: modular toolkit for utility mapping studies.

Validate person-level records against a data dictionary, score
multi-attribute instruments, fit and cross-validate utility mapping models,
share record-free model catalogues, predict utilities and QALYs, and rerun
whole studies from a seeded manifest.
"""

from ._version import __version__
from .core import (
    VERBS,
    ModuleCollection,
    ModuleDescriptor,
    ModuleInstance,
    define_module,
    inherit_module,
    invoke,
    renew,
)
from .data import (
    DataDictionary,
    DatasetMetadata,
    ValidatedDataset,
    describe_dataset,
    ingest_table,
    load_dictionary,
    synthesize_dataset,
    validate_dataset,
)
from .errors import ChemkitError, ValidationError
from .mapping import build_catalogue, cross_validate, load_catalogue, specify_candidates
from .predict import PredictionRequest, compute_qalys, predict_utility, qalys
from .registry import open_registry
from .report import build_manifest, load_manifest, render_template, run_manifest
from .scoring import InstrumentDefinition, attach_instrument, load_instrument, score_dataset

__all__ = [name for name in dir() if not name.startswith("_")]
