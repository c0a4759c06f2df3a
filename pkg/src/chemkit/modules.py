"""Built-in modules: descriptors plus file-based verb implementations.

Each implementation receives a :class:`~chemkit.report.manifest.StepPayload`
(input paths, output paths, params, seed) and writes its outputs to disk.
The manifest runner and the command line both dispatch through these, so a
pipeline step and the equivalent CLI call do the same work.
"""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from . import _jsonio
from .core import ModuleCollection, ModuleDescriptor, define_module, renew
from .data import (
    DEFAULT_MISSING,
    DatasetMetadata,
    RawTable,
    ValidatedDataset,
    depict_dataset,
    describe_dataset,
    ingest_table,
    load_dictionary,
    synthesize_dataset,
    validate_dataset,
)
from .data.dictionary import DataDictionary
from .errors import ChemkitError, QalyError
from .mapping import FAMILY_KINDS, ModelCatalogue, build_catalogue, cross_validate, load_catalogue, select_models, specify_candidates
from .mapping.evaluate import PerformanceRecord
from .mapping.models import FittedModel
from .predict import PredictionRequest, compute_qalys, predict_utility
from .registry import RegistryEntry, open_registry
from .report.templates import DEFAULT_TEMPLATES, ReportTemplate, catalogue_context, render_template, study_context
from .scoring import attach_instrument, load_instrument, score_dataset

TEMPLATE_SUFFIXES = (".md", ".tmpl", ".txt")


# -- descriptors -------------------------------------------------------------

BUILTIN_DESCRIPTORS: tuple[ModuleDescriptor, ...] = (
    define_module("dataset", {"dataset": "dataset"}, ["ingest", "validate", "describe", "depict", "transform", "export"]),
    define_module("instrument", {"instrument": "any"}, ["ingest", "validate", "score"]),
    define_module("mapping", {"spec": "mapping"}, ["specify", "evaluate", "select", "export"]),
    define_module("predictor", {"model": "model"}, ["predict"]),
    define_module("qalys", {}, ["predict"]),
    define_module("reporter", {"template": "text"}, ["report"]),
    define_module("registry", {"location": "text"}, ["share", "search", "ingest"]),
    define_module("descriptor", {"descriptor": "mapping"}, ["renew", "export"]),
)


# -- shared file helpers -----------------------------------------------------


def _read(p: Path) -> str:
    return Path(p).read_text(encoding="utf-8")


def _write(p: Path, text: str) -> None:
    Path(p).write_text(text, encoding="utf-8")


def _need(payload, n_in: int, n_out: int, what: str) -> None:
    if len(payload.inputs) < n_in:
        raise ChemkitError(f"{what} needs at least {n_in} input(s), got {len(payload.inputs)}")
    if len(payload.outputs) < n_out:
        raise ChemkitError(f"{what} needs at least {n_out} output(s), got {len(payload.outputs)}")


def metadata_from_params(params: Mapping[str, Any]) -> DatasetMetadata:
    uid = params.get("uid")
    if not uid:
        raise ChemkitError("a uid variable is required (param 'uid')")
    return DatasetMetadata(uid, params.get("round"), params.get("group"), params.get("labels") or {})


def _raw_bundle(table: RawTable, dictionary: DataDictionary, metadata: DatasetMetadata) -> dict:
    return {
        "kind": "raw_table",
        "metadata": metadata.to_dict(),
        "dictionary": dictionary.to_dicts(),
        "columns": table.to_dict(),
    }


def _raw_from_csv(paths, params) -> tuple[RawTable, DataDictionary, DatasetMetadata, int]:
    """Read ``data.csv, dictionary.csv`` from the front of ``paths``."""
    if len(paths) < 2:
        raise ChemkitError("CSV data needs a dictionary CSV as the next input")
    table = ingest_table(_read(paths[0]), params.get("missing", DEFAULT_MISSING))
    dictionary = load_dictionary(_read(paths[1]))
    return table, dictionary, metadata_from_params(params), 2


def load_dataset(paths, params: Mapping[str, Any]) -> tuple[ValidatedDataset, int]:
    """A validated dataset from a bundle JSON, a raw bundle, or a CSV pair.

    Returns the dataset and how many of ``paths`` were consumed.
    """
    first = Path(paths[0])
    if first.suffix.lower() == ".json":
        d = _jsonio.loads(_read(first))
        kind = d.get("kind")
        if kind == "validated_dataset":
            return ValidatedDataset.from_bundle(d), 1
        if kind == "raw_table":
            table = RawTable.from_columns(d["columns"])
            return validate_dataset(table, DataDictionary.from_dicts(d["dictionary"]), DatasetMetadata.from_dict(d["metadata"])), 1
        raise ChemkitError(f"{first.name}: not a dataset bundle (kind={kind!r})")
    table, dictionary, md, used = _raw_from_csv(paths, params)
    return validate_dataset(table, dictionary, md), used


def _write_dataset(ds: ValidatedDataset, out: Path, extra: Mapping | None = None) -> None:
    _write(out, ds.to_csv() if Path(out).suffix.lower() == ".csv" else ds.to_json(extra))


# -- dataset -----------------------------------------------------------------


def dataset_ingest(state: dict, payload) -> dict:
    """CSV pair -> raw bundle. Checks table shape and dictionary syntax only."""
    _need(payload, 2, 1, "dataset.ingest")
    table, dictionary, md, _ = _raw_from_csv(payload.inputs, payload.params)
    _write(payload.outputs[0], _jsonio.dumps(_raw_bundle(table, dictionary, md), indent=1))
    return {"rows": table.n_rows, "columns": len(table.names)}


def dataset_validate(state: dict, payload) -> ValidatedDataset:
    _need(payload, 1, 0, "dataset.validate")
    ds, _ = load_dataset(payload.inputs, payload.params)
    state["dataset"] = ds
    if payload.outputs:
        _write_dataset(ds, payload.outputs[0])
    return ds


def dataset_describe(state: dict, payload):
    _need(payload, 1, 1, "dataset.describe")
    ds, _ = load_dataset(payload.inputs, payload.params)
    p = payload.params
    summary = describe_dataset(ds, by_group=bool(p.get("by_group")), by_round=bool(p.get("by_round")), variables=p.get("variables"))
    for out in payload.outputs:
        _write(out, summary.to_json() if Path(out).suffix.lower() == ".json" else summary.to_text())
    return summary


def dataset_depict(state: dict, payload):
    _need(payload, 1, 1, "dataset.depict")
    ds, _ = load_dataset(payload.inputs, payload.params)
    hists = depict_dataset(ds, payload.params.get("variables"))
    _write(payload.outputs[0], _jsonio.dumps({k: h.to_dict() for k, h in hists.items()}))
    return hists


def dataset_transform(state: dict, payload) -> ValidatedDataset:
    """Synthesize ``n_out`` toy records from a validated dataset."""
    _need(payload, 1, 1, "dataset.transform")
    ds, _ = load_dataset(payload.inputs, payload.params)
    n_out = int(payload.params.get("n_out", ds.n_rows))
    syn = synthesize_dataset(ds, n_out, payload.seed)
    _write_dataset(syn, payload.outputs[0])
    return syn


def dataset_export(state: dict, payload) -> None:
    _need(payload, 1, 1, "dataset.export")
    ds, _ = load_dataset(payload.inputs, payload.params)
    _write_dataset(ds, payload.outputs[0])


# -- instrument ----------------------------------------------------------------


def instrument_ingest(state: dict, payload):
    _need(payload, 1, 0, "instrument.ingest")
    inst = load_instrument(_read(payload.inputs[0]))
    state["instrument"] = inst
    if payload.outputs:
        _write(payload.outputs[0], inst.to_json())
    return inst


def instrument_score(state: dict, payload):
    """Inputs: dataset (bundle or CSV pair), then the instrument JSON."""
    _need(payload, 2, 1, "instrument.score")
    ds, used = load_dataset(payload.inputs, payload.params)
    if len(payload.inputs) <= used:
        raise ChemkitError("instrument.score needs an instrument JSON after the dataset input(s)")
    inst = load_instrument(_read(payload.inputs[used]))
    scored = score_dataset(attach_instrument(ds, inst), weighted=bool(payload.params.get("weighted", True)))
    extra = {"instrument": f"{inst.name} {inst.version}", "clamp_count": scored.clamp_count}
    _write_dataset(scored.as_dataset(), payload.outputs[0], extra)
    return scored


# -- mapping -------------------------------------------------------------------


def _spec_from_params(ds: ValidatedDataset, p: Mapping[str, Any], seed: int):
    if "target" not in p or "predictors" not in p:
        raise ChemkitError("mapping needs params 'target' and 'predictors'")
    return specify_candidates(
        ds,
        p["target"],
        p["predictors"],
        p.get("covariates", ()),
        p.get("families", FAMILY_KINDS),
        int(p.get("folds", 5)),
        seed,
        p.get("cluster_var"),
        float(p.get("epsilon", 0.005)),
    )


def mapping_specify(state: dict, payload):
    _need(payload, 1, 1, "mapping.specify")
    ds, _ = load_dataset(payload.inputs, payload.params)
    spec = _spec_from_params(ds, payload.params, payload.seed)
    state["spec"] = spec.to_dict()
    _write(payload.outputs[0], _jsonio.dumps(spec.to_dict()))
    return spec


def _evaluation_doc(records, ds: ValidatedDataset, instrument: str, spec) -> dict:
    return {
        "kind": "evaluation",
        "dataset_fingerprint": ds.validation_stamp,
        "instrument": instrument,
        "spec": spec.to_dict() if spec is not None else None,
        "models": [{"model": r.model.to_dict(), "performance": r.to_dict()} for r in records],
    }


def _records_of(doc: Mapping) -> list[PerformanceRecord]:
    return [PerformanceRecord.from_dict(m["performance"], FittedModel.from_dict(m["model"])) for m in doc["models"]]


def mapping_evaluate(state: dict, payload):
    """Fit and cross-validate every family x predictor candidate.

    Output 1 is the evaluation (record-free models plus metrics); an
    optional output 2 receives the catalogue directly.
    """
    _need(payload, 1, 1, "mapping.evaluate")
    bundle_path = Path(payload.inputs[0])
    instrument = payload.params.get("instrument", "")
    if bundle_path.suffix.lower() == ".json":
        instrument = instrument or _jsonio.loads(_read(bundle_path)).get("instrument", "")
    ds, _ = load_dataset(payload.inputs, payload.params)
    spec = _spec_from_params(ds, payload.params, payload.seed)
    records = cross_validate(ds, spec, threads=int(payload.params.get("threads", 1)))
    doc = _evaluation_doc(records, ds, instrument or "unspecified", spec)
    _write(payload.outputs[0], _jsonio.dumps(doc))
    if len(payload.outputs) > 1:
        cat = build_catalogue(records, doc["dataset_fingerprint"], doc["instrument"], payload.created_utc, payload.params.get("identifier"))
        _write(payload.outputs[1], cat.to_json())
    return records


def mapping_select(state: dict, payload):
    _need(payload, 1, 1, "mapping.select")
    doc = _jsonio.loads(_read(payload.inputs[0]))
    chosen = select_models(_records_of(doc), int(payload.params.get("n", 1)), payload.params.get("metric", "rmse_cv"))
    out = dict(doc)
    out["models"] = [{"model": r.model.to_dict(), "performance": r.to_dict()} for r in chosen]
    _write(payload.outputs[0], _jsonio.dumps(out))
    return chosen


def mapping_export(state: dict, payload) -> ModelCatalogue:
    """Evaluation -> catalogue JSON, plus an optional performance CSV."""
    _need(payload, 1, 1, "mapping.export")
    doc = _jsonio.loads(_read(payload.inputs[0]))
    cat = build_catalogue(_records_of(doc), doc["dataset_fingerprint"], doc["instrument"], payload.created_utc, payload.params.get("identifier"))
    _write(payload.outputs[0], cat.to_json())
    if len(payload.outputs) > 1:
        _write(payload.outputs[1], cat.performance_csv())
    return cat


# -- prediction and QALYs ------------------------------------------------------


def _pick_model(cat: ModelCatalogue, params: Mapping[str, Any]) -> FittedModel:
    i = int(params.get("model", 0))
    if not 0 <= i < len(cat.records):
        raise ChemkitError(f"model index {i} out of range; catalogue holds {len(cat.records)} models")
    return cat.records[i].model


def predictor_predict(state: dict, payload):
    """Inputs: catalogue JSON, then new data (bundle or CSV pair)."""
    _need(payload, 2, 1, "predictor.predict")
    cat = load_catalogue(_read(payload.inputs[0]))
    model = _pick_model(cat, payload.params)
    ds, _ = load_dataset(payload.inputs[1:], payload.params)
    pred = predict_utility(PredictionRequest(model, ds, payload.params.get("variable_map") or {}))
    state["model"] = model
    _write(payload.outputs[0], pred.to_csv())
    return pred


def _read_predictions(p: Path) -> tuple[list[str], list[str], np.ndarray]:
    rows = list(csv.DictReader(io.StringIO(_read(p))))
    if rows and "predicted_utility" not in rows[0]:
        raise QalyError(f"{Path(p).name}: no predicted_utility column")
    u = np.array([math.nan if r["predicted_utility"] in ("", "NA") else float(r["predicted_utility"]) for r in rows])
    return [r["uid"] for r in rows], [r["round"] for r in rows], u


def qalys_predict(state: dict, payload):
    """QALYs between two rounds.

    Inputs: a dataset carrying the time variable, optionally followed by a
    predictions CSV that is row-aligned with it. Without predictions the
    utility comes from the ``utility_var`` column.
    """
    _need(payload, 1, 1, "qalys.predict")
    p = payload.params
    for key in ("time_var", "start_round", "end_round"):
        if key not in p:
            raise QalyError(f"qalys needs param '{key}'")
    ds, used = load_dataset(payload.inputs, p)
    md = ds.metadata
    if not md.round_var:
        raise QalyError("dataset metadata has no round variable")
    times = ds.column(p["time_var"])
    if len(payload.inputs) > used:
        uids, rounds, u = _read_predictions(payload.inputs[used])
        if len(u) != ds.n_rows:
            raise QalyError(f"predictions have {len(u)} rows, dataset has {ds.n_rows}")
    else:
        if "utility_var" not in p:
            raise QalyError("give a predictions CSV or param 'utility_var'")
        uids, rounds, u = ds.uids(), ds.column(md.round_var), ds.column(p["utility_var"])
    res = compute_qalys(uids, rounds, u, times, p["start_round"], p["end_round"])
    _write(payload.outputs[0], res.to_csv())
    return res


# -- reporting -----------------------------------------------------------------


def reporter_report(state: dict, payload):
    """Render a report from a catalogue (and, for the study template, a dataset).

    ``params.template`` names a shipped template (``catalogue`` or
    ``study``); an input file ending in .md/.tmpl/.txt overrides it.
    ``params.context`` adds or overrides render keys.
    """
    _need(payload, 1, 1, "reporter.report")
    p = payload.params
    ins = list(payload.inputs)
    body = None
    for path in list(ins):
        if Path(path).suffix.lower() in TEMPLATE_SUFFIXES:
            body = _read(path)
            ins.remove(path)
    cat = load_catalogue(_read(ins[0]))
    ctx = catalogue_context(cat)
    kind = p.get("template", "catalogue")
    if len(ins) > 1:
        ds, _ = load_dataset(ins[1:], p)
        summary = describe_dataset(ds, variables=p.get("variables"))
        ctx.update(study_context(cat, summary, ds, p.get("title", "Utility mapping study"), p.get("authors", "")))
    if body is None:
        if kind not in DEFAULT_TEMPLATES:
            raise ChemkitError(f"unknown template '{kind}'; shipped templates: {', '.join(DEFAULT_TEMPLATES)}")
        body = DEFAULT_TEMPLATES[kind]
    ctx.update(p.get("context") or {})
    t = ReportTemplate(body)
    # only pass keys the template uses; extra defaults are not user mistakes
    user_keys = set((p.get("context") or {}).keys())
    doc = render_template(t, {k: v for k, v in ctx.items() if k in t.required_keys or k in user_keys})
    state["template"] = kind
    _write(payload.outputs[0], doc.text)
    return doc


# -- registry ------------------------------------------------------------------


def _registry(params: Mapping[str, Any]):
    return open_registry(params.get("registry"))


def registry_share(state: dict, payload) -> RegistryEntry:
    _need(payload, 1, 0, "registry.share")
    p = payload.params
    for key in ("identifier", "version", "kind"):
        if key not in p:
            raise ChemkitError(f"publish needs param '{key}'")
    conf = p.get("confidential")
    entry = _registry(p).publish(
        Path(payload.inputs[0]).read_bytes(),
        p["identifier"],
        p["version"],
        p["kind"],
        p.get("keywords", ()),
        p.get("description", ""),
        p.get("citation", ""),
        None if conf is None else bool(conf),
    )
    if payload.outputs:
        _write(payload.outputs[0], _jsonio.dumps(entry.to_dict()))
    return entry


def registry_search(state: dict, payload) -> list[RegistryEntry]:
    p = payload.params
    hits = _registry(p).search(p.get("query", ""), p.get("kind"), bool(p.get("include_deprecated", False)))
    if payload.outputs:
        _write(payload.outputs[0], _jsonio.dumps([e.to_dict() for e in hits]))
    return hits


def registry_ingest(state: dict, payload):
    """Fetch an artifact; bytes are hash-checked before anything is written."""
    _need(payload, 0, 1, "registry.ingest")
    p = payload.params
    if "identifier" not in p:
        raise ChemkitError("fetch needs param 'identifier'")
    data, entry = _registry(p).fetch(p["identifier"], p.get("version", "latest"))
    Path(payload.outputs[0]).write_bytes(data)
    return entry


# -- descriptors ---------------------------------------------------------------


def descriptor_renew(state: dict, payload) -> ModuleDescriptor:
    _need(payload, 1, 1, "descriptor.renew")
    d = ModuleDescriptor.from_json(_read(payload.inputs[0]))
    new = renew(d, payload.params.get("bump", "patch"), payload.params.get("lifecycle"))
    state["descriptor"] = new.to_dict()
    _write(payload.outputs[0], new.to_json())
    return new


def descriptor_export(state: dict, payload) -> ModuleDescriptor:
    _need(payload, 0, 1, "descriptor.export")
    coll = builtin_collection()
    name = payload.params.get("module")
    if name not in coll:
        raise ChemkitError(f"unknown module '{name}'; built-in modules: {', '.join(coll.names())}")
    _write(payload.outputs[0], coll[name].to_json())
    return coll[name]


IMPLEMENTATIONS = {
    ("dataset", "ingest"): dataset_ingest,
    ("dataset", "validate"): dataset_validate,
    ("dataset", "describe"): dataset_describe,
    ("dataset", "depict"): dataset_depict,
    ("dataset", "transform"): dataset_transform,
    ("dataset", "export"): dataset_export,
    ("instrument", "ingest"): instrument_ingest,
    ("instrument", "validate"): instrument_ingest,
    ("instrument", "score"): instrument_score,
    ("mapping", "specify"): mapping_specify,
    ("mapping", "evaluate"): mapping_evaluate,
    ("mapping", "select"): mapping_select,
    ("mapping", "export"): mapping_export,
    ("predictor", "predict"): predictor_predict,
    ("qalys", "predict"): qalys_predict,
    ("reporter", "report"): reporter_report,
    ("registry", "share"): registry_share,
    ("registry", "search"): registry_search,
    ("registry", "ingest"): registry_ingest,
    ("descriptor", "renew"): descriptor_renew,
    ("descriptor", "export"): descriptor_export,
}

_BUILTIN: ModuleCollection | None = None


def builtin_collection() -> ModuleCollection:
    """The shared collection of built-in modules (built once)."""
    global _BUILTIN
    if _BUILTIN is None:
        coll = ModuleCollection()
        for d in BUILTIN_DESCRIPTORS:
            coll.add(d)
        for (module, verb), fn in IMPLEMENTATIONS.items():
            coll.implement(module, verb)(fn)
        _BUILTIN = coll
    return _BUILTIN
