"""Report templates and replication manifests."""

from .manifest import (
    DEFAULT_CREATED_UTC,
    RUN_RECORD_NAME,
    PipelineManifest,
    RunRecord,
    RunResult,
    Step,
    StepPayload,
    StepRecord,
    build_manifest,
    load_manifest,
    run_manifest,
)
from .templates import (
    CATALOGUE_TEMPLATE,
    DEFAULT_TEMPLATES,
    STUDY_TEMPLATE,
    RenderedDocument,
    ReportTemplate,
    catalogue_context,
    format_value,
    markdown_table,
    performance_table,
    render_template,
    study_context,
)

__all__ = [name for name in dir() if not name.startswith("_")]
