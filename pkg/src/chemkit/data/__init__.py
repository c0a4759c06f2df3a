"""Ingest, validate, describe and synthesize person-level records."""

from .describe import (
    DescriptiveSummary,
    Histogram,
    Stratum,
    VariableSummary,
    depict_dataset,
    describe_dataset,
    format_table,
    histogram,
    n_bins,
)
from .dictionary import CLASSES, DataDictionary, DictionaryEntry, load_dictionary
from .synth import synthesize_dataset
from .table import (
    DEFAULT_MISSING,
    DatasetMetadata,
    RawTable,
    ValidatedDataset,
    ingest_table,
    is_missing,
    validate_dataset,
)

__all__ = [
    "CLASSES",
    "DEFAULT_MISSING",
    "DataDictionary",
    "DatasetMetadata",
    "DescriptiveSummary",
    "DictionaryEntry",
    "Histogram",
    "RawTable",
    "Stratum",
    "ValidatedDataset",
    "VariableSummary",
    "depict_dataset",
    "describe_dataset",
    "format_table",
    "histogram",
    "ingest_table",
    "is_missing",
    "load_dictionary",
    "n_bins",
    "synthesize_dataset",
    "validate_dataset",
]
