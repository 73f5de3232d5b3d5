"""Command-line interface.

Exit status: 0 success (audit: every parity test passes), 2 at least one
parity failure, 3 only indeterminate results, 1 execution error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from .cohortgen import CohortConfig, generate_cohort, write_cohort
from .errors import AuditError
from .fairaudit import EXIT_CODES, AuditConfig
from .learners import DEFAULT_GRIDS, grid_search_cv, load_model, save_model, train
from .learners.search import derive_seed
from .pipeline import (PipelineConfig, align_predictions, build_report, evaluate_model,
                       file_sha256, now_utc, read_predictions, run_pipeline, write_predictions)
from .report import FORMATS, load_report, make_metadata, render
from .tabular import (apply_cohort_filter, derive_readmission_label, load_admissions,
                      load_dataset, load_schema, preprocess)

CONFIG_ENV = "READMIT_AUDIT_CONFIG"

log = logging.getLogger("readmit_audit")


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _parse_reference(text: str | None):
    if not text:
        return "largest_group"
    mapping = {}
    for item in text.split(","):
        attr, _, group = item.partition("=")
        if not group:
            raise argparse.ArgumentTypeError(f"reference {item!r} is not attribute=group")
        mapping[attr.strip()] = group.strip()
    return mapping


def cmd_synth(args) -> int:
    cfg = CohortConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    dataset, manifest = generate_cohort(cfg)
    paths = write_cohort(dataset, manifest, args.out or ".")
    log.info("wrote %d rows to %s", dataset.n_rows, paths["data"])
    return 0


def cmd_derive_label(args) -> int:
    records = load_admissions(args.admissions)
    labels = derive_readmission_label(records, args.window)
    if not args.all_admissions:
        keep = {r.admission_id for r in apply_cohort_filter(records)}
        labels = {k: v for k, v in labels.items() if k in keep}
    lines = ["admission_id,readmitted"] + [f"{k},{int(v)}" for k, v in sorted(labels.items())]
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def cmd_train(args) -> int:
    dataset = load_dataset(args.data, load_schema(args.schema))
    train_set, stats = preprocess(dataset)
    grid = DEFAULT_GRIDS[args.family]
    if args.grid:
        grid = json.loads(Path(args.grid).read_text(encoding="utf-8"))
    seed = args.seed or 0
    cv = grid_search_cv(args.family, grid, train_set, seed, n_jobs=args.n_jobs)
    model = train(cv.best_spec, train_set, derive_seed(seed, 10**6), stats=stats)
    save_model(model, args.out or "model.json")
    if args.cv_out:
        Path(args.cv_out).write_text(json.dumps(cv.to_dict(), indent=2) + "\n", encoding="utf-8")
    log.info("best %s: %s", args.family, cv.best_spec.hyperparameters)
    return 0


def cmd_evaluate(args) -> int:
    model = load_model(args.model)
    dataset = load_dataset(args.data, load_schema(args.schema))
    processed, proba, pred = evaluate_model(model, dataset, args.threshold)
    if args.predictions_out:
        write_predictions(args.predictions_out, processed.row_ids(), proba, pred)
    config = AuditConfig(sensitive_attributes=[])
    meta = make_metadata(file_sha256(args.data), str(args.model), model.seed,
                         None if args.no_timestamp else now_utc())
    report = build_report(processed, pred, config, meta)
    fmt = args.format or "json"
    if fmt == "json":
        doc = {"model": str(args.model), "threshold": args.threshold,
               "scores": report.scores.to_dict(), "confusion": report.confusion.to_dict()}
        _emit(json.dumps(doc, indent=2, sort_keys=True) + "\n", args.out)
    else:
        _emit(render(report, fmt), args.out)
    return 0


def cmd_audit(args) -> int:
    schema = load_schema(args.schema)
    dataset = load_dataset(args.data, schema)
    ids, _, pred = read_predictions(args.predictions)
    pred = align_predictions(dataset, ids, pred)
    attributes = ([a.strip() for a in args.attributes.split(",") if a.strip()]
                  if args.attributes else dataset.names("sensitive"))
    config = AuditConfig(sensitive_attributes=attributes,
                         reference_rule=_parse_reference(args.reference),
                         tau=args.tau, min_group_size=args.min_group_size,
                         error_rate_mode=args.error_rate_mode)
    meta = make_metadata(file_sha256(args.data), str(args.predictions), args.seed,
                         None if args.no_timestamp else now_utc())
    report = build_report(dataset, pred, config, meta)
    _emit(render(report, args.format or "text"), args.out)
    return EXIT_CODES[report.verdict]


def cmd_pipeline(args) -> int:
    path = args.config or os.environ.get(CONFIG_ENV)
    if not path:
        raise AuditError(f"no pipeline config: pass --config or set {CONFIG_ENV}")
    config = PipelineConfig.load(path)
    if args.out:
        config.out_dir = args.out
    if args.seed is not None:
        config.seed = args.seed
    if args.no_timestamp:
        config.timestamp = False
    report = run_pipeline(config)
    if not args.quiet:
        sys.stdout.write(render(report, args.format or "text"))
    return EXIT_CODES[report.verdict]


def cmd_report(args) -> int:
    report = load_report(args.input)
    _emit(render(report, args.format or "text"), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--format", choices=FORMATS, default=None)
    common.add_argument("--out", default=None)
    common.add_argument("--quiet", action="store_true")

    parser = argparse.ArgumentParser(prog="readmit-audit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic cohort")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("derive-label", parents=[common], help="30-day readmission labels")
    p.add_argument("--admissions", required=True)
    p.add_argument("--window", type=float, default=30.0)
    p.add_argument("--all-admissions", action="store_true",
                   help="label every admission instead of only cohort index stays")
    p.set_defaults(func=cmd_derive_label)

    p = sub.add_parser("train", parents=[common], help="grid-search and fit a model")
    p.add_argument("--family", required=True, choices=sorted(DEFAULT_GRIDS))
    p.add_argument("--grid")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--cv-out")
    p.add_argument("--n-jobs", type=int, default=1)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="precision / recall / F1 of a model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--predictions-out")
    p.add_argument("--no-timestamp", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("audit", parents=[common], help="fairness audit of saved predictions")
    p.add_argument("--predictions", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--attributes")
    p.add_argument("--reference", help="comma list of attribute=group")
    p.add_argument("--tau", type=float, default=0.8)
    p.add_argument("--min-group-size", type=int, default=10)
    p.add_argument("--error-rate-mode", choices=("symmetric", "one_sided"), default="symmetric")
    p.add_argument("--no-timestamp", action="store_true")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("pipeline", parents=[common], help="run the end-to-end pipeline")
    p.add_argument("--config", help=f"pipeline config JSON (default: ${CONFIG_ENV})")
    p.add_argument("--no-timestamp", action="store_true")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("report", parents=[common], help="re-render a saved report")
    p.add_argument("--input", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (AuditError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
