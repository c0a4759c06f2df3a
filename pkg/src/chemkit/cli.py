"""Command-line entry point.

Every subcommand dispatches one verb on a built-in module, and every file
it writes goes under ``--out``. Exit codes: 0 success, 2 validation
failure, 1 anything else.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence

from ._version import __version__
from .core import invoke
from .errors import StepFailedError, ValidationError, root_cause
from .modules import builtin_collection
from .registry import REGISTRY_ENV
from .report.manifest import DEFAULT_CREATED_UTC, RUN_RECORD_NAME, StepPayload, load_manifest, run_manifest

EXIT_OK, EXIT_ERROR, EXIT_INVALID = 0, 1, 2

# subcommand -> (module, verb); the verb is shown in --help
SUBCOMMANDS: dict[str, tuple[str, str]] = {
    "validate": ("dataset", "validate"),
    "describe": ("dataset", "describe"),
    "synth": ("dataset", "transform"),
    "score": ("instrument", "score"),
    "fit": ("mapping", "evaluate"),
    "predict": ("predictor", "predict"),
    "qalys": ("qalys", "predict"),
    "report": ("reporter", "report"),
    "run": ("reporter", "report"),
    "search": ("registry", "search"),
    "publish": ("registry", "share"),
    "fetch": ("registry", "ingest"),
}

_HELP = {
    "validate": "check records against a data dictionary",
    "describe": "summary statistics overall and by group/round",
    "synth": "generate a shareable synthetic dataset",
    "score": "score instrument items into domain and utility columns",
    "fit": "fit and cross-validate mapping models; write a catalogue",
    "predict": "predict utilities for new data from a catalogue model",
    "qalys": "QALYs between two rounds by the trapezoid rule",
    "report": "render a Markdown report from a catalogue",
    "run": "execute a replication manifest",
    "search": "search a registry index",
    "publish": "publish an artifact to a local registry",
    "fetch": "fetch an artifact from a registry (hash-checked)",
}


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; 2 is reserved for validation failures."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _csv_list(s: str) -> list[str]:
    return [x.strip() for x in s.split(",") if x.strip()]


def _kv_list(items: Sequence[str] | None) -> dict[str, str]:
    out = {}
    for it in items or ():
        if "=" not in it:
            raise ValueError(f"expected key=value, got '{it}'")
        k, v = it.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _add_data(p: argparse.ArgumentParser, required: bool = True) -> None:
    g = p.add_argument_group("dataset")
    g.add_argument("--data", required=required, help="records CSV, or a dataset bundle JSON")
    g.add_argument("--dict", dest="dictionary", help="data dictionary CSV (required with CSV data)")
    g.add_argument("--uid", help="uid variable (required with CSV data)")
    g.add_argument("--round", dest="round_var", help="round variable")
    g.add_argument("--group", dest="group_var", help="group variable")
    g.add_argument("--missing", default="NA", help="missing-value marker (default NA)")
    g.add_argument("--label", action="append", metavar="VAR=LABEL", help="human-readable label (repeatable)")


def _add_out(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--out", required=required, help="output directory; nothing is written elsewhere")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="chemkit", description="Utility mapping toolkit: validate, score, fit, predict, report, replicate.")
    parser.add_argument("--version", action="version", version=f"chemkit {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND", parser_class=_Parser)
    ps = {}
    for name, (module, verb) in SUBCOMMANDS.items():
        ps[name] = sub.add_parser(name, help=f"[verb: {verb}] {_HELP[name]}", description=f"{_HELP[name]} (verb: {verb}, module: {module})")

    p = ps["validate"]
    _add_data(p)
    _add_out(p, required=False)

    p = ps["describe"]
    _add_data(p)
    p.add_argument("--by-group", action="store_true")
    p.add_argument("--by-round", action="store_true")
    p.add_argument("--variables", type=_csv_list)
    _add_out(p, required=False)

    p = ps["synth"]
    _add_data(p)
    p.add_argument("--n-out", type=int, required=True)
    p.add_argument("--seed", type=int, default=1)
    _add_out(p)

    p = ps["score"]
    _add_data(p)
    p.add_argument("--instrument", required=True, help="instrument definition JSON")
    p.add_argument("--unweighted", action="store_true", help="skip weighted/utility scores")
    _add_out(p)

    p = ps["fit"]
    _add_data(p)
    p.add_argument("--target", required=True)
    p.add_argument("--predictors", type=_csv_list, required=True)
    p.add_argument("--covariates", type=_csv_list, default=[])
    p.add_argument("--families", type=_csv_list, help="default: all six families")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--cluster", help="cluster variable for the mixed model (default: uid)")
    p.add_argument("--instrument-name", default="")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--created-utc", default=None, help="pin the catalogue timestamp")
    _add_out(p)

    p = ps["predict"]
    p.add_argument("--catalogue", required=True)
    _add_data(p)
    p.add_argument("--model", type=int, default=0, help="catalogue index (0 = best)")
    p.add_argument("--map", action="append", metavar="COEF=COLUMN", help="variable map entry (repeatable)")
    _add_out(p)

    p = ps["qalys"]
    _add_data(p)
    p.add_argument("--predictions", help="row-aligned predictions CSV from 'predict'")
    p.add_argument("--utility", help="utility column (when no predictions are given)")
    p.add_argument("--time", required=True, help="date or day-offset column")
    p.add_argument("--start", required=True, help="start round")
    p.add_argument("--end", required=True, help="end round")
    _add_out(p)

    p = ps["report"]
    p.add_argument("--catalogue", required=True)
    _add_data(p, required=False)
    p.add_argument("--template", default="catalogue", help="'catalogue', 'study', or a template file")
    p.add_argument("--title", default="Utility mapping study")
    p.add_argument("--authors", default="")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="extra render key (repeatable)")
    _add_out(p)

    p = ps["run"]
    p.add_argument("--manifest", required=True)
    p.add_argument("--threads", type=int, default=1, help="accepted for interface parity; steps run in order")
    _add_out(p)

    for name in ("search", "publish", "fetch"):
        ps[name].add_argument("--registry", help=f"registry directory or URL (default: ${REGISTRY_ENV})")
    p = ps["search"]
    p.add_argument("--query", default="")
    p.add_argument("--kind")
    p.add_argument("--include-deprecated", action="store_true")
    _add_out(p, required=False)

    p = ps["publish"]
    p.add_argument("--file", required=True)
    p.add_argument("--identifier", required=True)
    p.add_argument("--version", dest="artifact_version", required=True)
    p.add_argument("--kind", required=True, choices=("module", "dataset", "program", "catalogue"))
    p.add_argument("--keywords", type=_csv_list, default=[])
    p.add_argument("--description", default="")
    p.add_argument("--citation", default="")
    conf = p.add_mutually_exclusive_group()
    conf.add_argument("--confidential", dest="confidential", action="store_true", default=None)
    conf.add_argument("--non-confidential", dest="confidential", action="store_false")
    _add_out(p, required=False)

    p = ps["fetch"]
    p.add_argument("--identifier", required=True)
    p.add_argument("--version", dest="artifact_version", default="latest")
    p.add_argument("--name", help="output file name (default: identifier-version)")
    _add_out(p)
    return parser


def _data_inputs(a) -> list[Path]:
    ins = [Path(a.data)]
    if Path(a.data).suffix.lower() != ".json":
        if not a.dictionary:
            raise ValueError("--dict is required when --data is a CSV file")
        ins.append(Path(a.dictionary))
    return ins


def _data_params(a) -> dict:
    p = {"uid": a.uid, "missing": a.missing, "labels": _kv_list(a.label)}
    if a.round_var:
        p["round"] = a.round_var
    if a.group_var:
        p["group"] = a.group_var
    return p


def _outdir(a) -> Path | None:
    if getattr(a, "out", None) is None:
        return None
    d = Path(a.out)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _payload(inputs, outputs, params, seed: int = 0) -> StepPayload:
    return StepPayload(tuple(Path(i) for i in inputs), tuple(outputs), params, seed, DEFAULT_CREATED_UTC, "cli")


def _dispatch(command: str, payload: StepPayload):
    module, verb = SUBCOMMANDS[command]
    coll = builtin_collection()
    out, _ = invoke(coll.instantiate(module), verb, payload, coll)
    return out


def _cmd(a) -> int:
    out = _outdir(a)
    c = a.command
    if c == "validate":
        ds = _dispatch(c, _payload(_data_inputs(a), [out / "validated.json"] if out else [], _data_params(a)))
        print(f"ok: {ds.n_rows} rows, {len(ds.names)} variables, stamp {ds.validation_stamp[:12]}")
    elif c == "describe":
        params = dict(_data_params(a), by_group=a.by_group, by_round=a.by_round, variables=a.variables)
        outs = [out / "summary.json", out / "summary.txt"] if out else []
        if not outs:
            from .data import describe_dataset
            from .modules import load_dataset

            # nothing to write: go through validate, then print
            ds, _ = load_dataset(_data_inputs(a), _data_params(a))
            print(describe_dataset(ds, a.by_group, a.by_round, a.variables).to_text())
            return EXIT_OK
        summary = _dispatch(c, _payload(_data_inputs(a), outs, params))
        print(summary.to_text())
    elif c == "synth":
        syn = _dispatch(c, _payload(_data_inputs(a), [out / "synthetic.csv"], dict(_data_params(a), n_out=a.n_out), a.seed))
        (out / "synthetic.json").write_text(syn.to_json(), encoding="utf-8")
        (out / "synthetic_dictionary.csv").write_text(syn.dictionary.to_csv(), encoding="utf-8")
        print(f"wrote {syn.n_rows} synthetic rows to {out / 'synthetic.csv'}")
    elif c == "score":
        ins = _data_inputs(a) + [Path(a.instrument)]
        scored = _dispatch(c, _payload(ins, [out / "scored.json"], dict(_data_params(a), weighted=not a.unweighted)))
        ds = scored.as_dataset()
        (out / "scored.csv").write_text(ds.to_csv(), encoding="utf-8")
        (out / "scored_dictionary.csv").write_text(ds.dictionary.to_csv(), encoding="utf-8")
        print(f"scored {ds.n_rows} rows; {scored.clamp_count} utilities clamped")
    elif c == "fit":
        params = dict(
            _data_params(a),
            target=a.target,
            predictors=a.predictors,
            covariates=a.covariates,
            folds=a.folds,
            threads=a.threads,
            instrument=a.instrument_name,
        )
        if a.families:
            params["families"] = a.families
        if a.cluster:
            params["cluster_var"] = a.cluster
        p = _payload(_data_inputs(a), [out / "evaluation.json", out / "catalogue.json"], params, a.seed)
        if a.created_utc:
            p = StepPayload(p.inputs, p.outputs, p.params, p.seed, a.created_utc, p.step_id)
        records = _dispatch(c, p)
        from .mapping import performance_csv

        (out / "performance.csv").write_text(performance_csv(records), encoding="utf-8")
        for r in records:
            print(f"{r.family:24s} {'+'.join(r.predictors):12s} rmse_cv={r.cv.rmse:.4f} r2_cv={r.cv.r2:.4f}")
    elif c == "predict":
        ins = [Path(a.catalogue)] + _data_inputs(a)
        pred = _dispatch(c, _payload(ins, [out / "predictions.csv"], dict(_data_params(a), model=a.model, variable_map=_kv_list(a.map))))
        print(f"predicted {len(pred.predicted)} rows; {pred.clamp_count} clamped")
    elif c == "qalys":
        ins = _data_inputs(a) + ([Path(a.predictions)] if a.predictions else [])
        params = dict(_data_params(a), time_var=a.time, start_round=a.start, end_round=a.end)
        if a.utility:
            params["utility_var"] = a.utility
        res = _dispatch(c, _payload(ins, [out / "qalys.csv"], params))
        print(f"{len(res.records)} QALY records; {len(res.skipped)} uids skipped")
    elif c == "report":
        ins = [Path(a.catalogue)]
        params = {"title": a.title, "authors": a.authors, "context": _kv_list(a.set)}
        if a.data:
            ins += _data_inputs(a)
            params.update(_data_params(a))
        if a.template in ("catalogue", "study"):
            params["template"] = a.template
        else:
            ins.append(Path(a.template))
        doc = _dispatch(c, _payload(ins, [out / "report.md"], params))
        for w in doc.warnings:
            print(f"warning: {w}", file=sys.stderr)
        print(f"wrote {out / 'report.md'}")
    elif c == "run":
        m = load_manifest(a.manifest)
        res = run_manifest(m, out)
        print(f"run succeeded; record hash {res.record.record_hash()}")
        print(f"run record: {out / RUN_RECORD_NAME}")
    elif c == "search":
        params = {"registry": a.registry, "query": a.query, "kind": a.kind, "include_deprecated": a.include_deprecated}
        hits = _dispatch(c, _payload([], [out / "search.json"] if out else [], params))
        for e in hits:
            flag = " (deprecated)" if e.deprecated else ""
            print(f"{e.identifier}\t{e.version}\t{e.kind}\t{e.description}{flag}")
    elif c == "publish":
        params = {
            "registry": a.registry,
            "identifier": a.identifier,
            "version": a.artifact_version,
            "kind": a.kind,
            "keywords": a.keywords,
            "description": a.description,
            "citation": a.citation,
            "confidential": a.confidential,
        }
        entry = _dispatch(c, _payload([Path(a.file)], [out / "entry.json"] if out else [], params))
        print(f"published {entry.identifier} {entry.version} sha256 {entry.content_hash}")
    elif c == "fetch":
        name = a.name or f"{a.identifier.replace('/', '_')}-{a.artifact_version}"
        params = {"registry": a.registry, "identifier": a.identifier, "version": a.artifact_version}
        entry = _dispatch(c, _payload([], [out / name], params))
        print(f"fetched {entry.identifier} {entry.version} -> {out / name}")
    return EXIT_OK


def _exit_code(exc: BaseException) -> int:
    return EXIT_INVALID if isinstance(root_cause(exc), ValidationError) else EXIT_ERROR


def run_cli(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_ERROR
    try:
        return _cmd(args)
    except StepFailedError as exc:
        cause = root_cause(exc)
        print(f"error: step '{exc.step_id}' failed: {cause}", file=sys.stderr)
        return _exit_code(exc)
    except Exception as exc:
        print(f"error: {root_cause(exc) if _exit_code(exc) == EXIT_INVALID else exc}", file=sys.stderr)
        return _exit_code(exc)


def main(argv: Sequence[str] | None = None) -> None:
    sys.exit(run_cli(argv))


if __name__ == "__main__":
    main()
