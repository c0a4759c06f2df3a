"""Minimal report templates: ``{{key}}`` placeholders and ``{{#table:name}}`` blocks.

There is no logic in templates; anything computed belongs in the code that
builds the render context.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Any, Mapping

from ..errors import TemplateError

_TOKEN = re.compile(r"\{\{(.*?)\}\}", re.S)
_KEY = re.compile(r"^[A-Za-z_][A-Za-z0-9_.]*$")


@dataclass(frozen=True)
class ReportTemplate:
    body: str
    required_keys: frozenset[str] = field(init=False)
    table_keys: frozenset[str] = field(init=False)

    def __post_init__(self):
        keys, tables = set(), set()
        for m in _TOKEN.finditer(self.body):
            inner = m.group(1).strip()
            if inner.startswith("#table:"):
                name = inner[len("#table:"):].strip()
                if not _KEY.match(name):
                    raise TemplateError(f"malformed table block '{m.group(0)}'")
                tables.add(name)
            elif _KEY.match(inner):
                keys.add(inner)
            else:
                raise TemplateError(f"malformed placeholder '{m.group(0)}'")
        # a lone '{{' or '}}' left after removing tokens means an unbalanced placeholder
        rest = _TOKEN.sub("", self.body)
        if "{{" in rest or "}}" in rest:
            raise TemplateError("unbalanced '{{' or '}}' in template")
        object.__setattr__(self, "required_keys", frozenset(keys | tables))
        object.__setattr__(self, "table_keys", frozenset(tables))


@dataclass(frozen=True)
class RenderedDocument:
    text: str
    warnings: tuple[str, ...] = ()

    def __str__(self):
        return self.text


def format_value(v: Any) -> str:
    if v is None:
        return "NA"
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return "NA" if math.isnan(v) else f"{v:.4f}"
    return str(v)


def _is_table(v: Any) -> bool:
    return isinstance(v, Mapping) and "columns" in v and "rows" in v


def markdown_table(payload: Mapping) -> str:
    """Pipe-delimited Markdown table: header, rule, one line per row."""
    cols = [str(c) for c in payload["columns"]]
    if not cols:
        raise TemplateError("table payload has no columns")

    def cell(x):
        return format_value(x).replace("|", "\\|").replace("\n", " ")

    lines = ["| " + " | ".join(cell(c) for c in cols) + " |", "| " + " | ".join("---" for _ in cols) + " |"]
    for row in payload["rows"]:
        if len(row) != len(cols):
            raise TemplateError(f"table row has {len(row)} cells for {len(cols)} columns")
        lines.append("| " + " | ".join(cell(x) for x in row) + " |")
    return "\n".join(lines)


def render_template(template: ReportTemplate | str, ctx: Mapping[str, Any]) -> RenderedDocument:
    """Substitute every placeholder; raise listing all missing keys.

    Context keys the template never uses come back as warnings.
    """
    t = template if isinstance(template, ReportTemplate) else ReportTemplate(template)
    missing = sorted(k for k in t.required_keys if k not in ctx)
    if missing:
        raise TemplateError(f"missing keys: {', '.join(missing)}")
    for k in t.table_keys:
        if not _is_table(ctx[k]):
            raise TemplateError(f"table block '{k}' needs a payload with 'columns' and 'rows'")

    def sub(m: re.Match) -> str:
        inner = m.group(1).strip()
        key = inner[len("#table:"):].strip() if inner.startswith("#table:") else inner
        v = ctx[key]
        return markdown_table(v) if _is_table(v) else format_value(v)

    text = _TOKEN.sub(sub, t.body)
    unused = sorted(k for k in ctx if k not in t.required_keys)
    return RenderedDocument(text, tuple(f"unused context key '{k}'" for k in unused))


CATALOGUE_TEMPLATE = """\
# Utility mapping model catalogue: {{instrument}}

- Catalogue identifier: {{identifier}}
- Dataset fingerprint: {{dataset_fingerprint}}
- Toolkit version: {{toolkit_version}}
- Created (UTC): {{created_utc}}
- Models catalogued: {{n_models}}

## Predictive performance

Metrics are means over cross-validation folds (cv) and in-sample fits (in).

{{#table:performance}}

## Best model: {{best_model}}

{{#table:coefficients}}

Models contain coefficients and summary statistics only; no individual
records are included.
"""

STUDY_TEMPLATE = """\
# {{title}}

Authors: {{authors}}

## Sample

The analysis dataset holds {{n_rows}} records from {{n_persons}} participants.

{{#table:descriptives}}

## Utility mapping models

Target utility: {{target}} ({{instrument}}). {{n_models}} candidate models were
compared by {{folds}}-fold cross-validation.

{{#table:performance}}

The best-performing model was {{best_model}}, with cross-validated RMSE
{{best_rmse}} and R2 {{best_r2}}.
"""

DEFAULT_TEMPLATES = {"catalogue": CATALOGUE_TEMPLATE, "study": STUDY_TEMPLATE}


def _model_label(rec) -> str:
    covs = f" + {' + '.join(rec.covariates)}" if rec.covariates else ""
    return f"{rec.family}: {' + '.join(rec.predictors)}{covs}"


def performance_table(records) -> dict:
    return {
        "columns": ["family", "predictors", "covariates", "R2 (cv)", "RMSE (cv)", "MAE (cv)", "R2 (in)", "RMSE (in)", "MAE (in)"],
        "rows": [
            [r.family, ", ".join(r.predictors), ", ".join(r.covariates), r.cv.r2, r.cv.rmse, r.cv.mae, r.in_sample.r2, r.in_sample.rmse, r.in_sample.mae]
            for r in records
        ],
    }


def catalogue_context(catalogue) -> dict:
    best = catalogue.records[0]
    m = best.model
    return {
        "instrument": catalogue.instrument,
        "identifier": catalogue.identifier or "unassigned",
        "dataset_fingerprint": catalogue.dataset_fingerprint,
        "toolkit_version": catalogue.toolkit_version,
        "created_utc": catalogue.created_utc,
        "n_models": len(catalogue.records),
        "performance": performance_table(catalogue.records),
        "best_model": _model_label(best),
        "coefficients": {
            "columns": ["term", "estimate", "std. error"],
            "rows": [[k, v, m.coefficient_se.get(k, math.nan)] for k, v in m.coefficients.items()],
        },
    }


def study_context(catalogue, summary, dataset, title: str, authors: str, folds: int | None = None) -> dict:
    best = catalogue.records[0]
    rows = []
    for v in summary.overall.variables.values():
        if v.cls in ("integer", "double"):
            rows.append([summary.labels.get(v.variable, v.variable), v.n, v.n_missing, v.mean, v.sd, v.min, v.max])
    uids = {str(u) for u in dataset.uids()}
    return {
        "title": title,
        "authors": authors,
        "n_rows": dataset.n_rows,
        "n_persons": len(uids),
        "descriptives": {"columns": ["variable", "n", "missing", "mean", "sd", "min", "max"], "rows": rows},
        "target": best.model.target or "utility",
        "instrument": catalogue.instrument,
        "n_models": len(catalogue.records),
        "folds": folds if folds is not None else best.n_folds,
        "performance": performance_table(catalogue.records),
        "best_model": _model_label(best),
        "best_rmse": best.cv.rmse,
        "best_r2": best.cv.r2,
    }
