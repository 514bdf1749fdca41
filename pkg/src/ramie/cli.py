"""``ramie`` command line.

Exit codes: 0 success, 1 pipeline error, 2 configuration, schema, label or I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from .dataset import (
    SPLITS,
    TrainingExportConfig,
    export_training_config,
    load_corpus,
    read_jsonl,
    record_from_json,
    save_corpus,
    split_records,
    validate_splits,
)
from .errors import ConfigError, CorpusIOError, LabelError, PipelineError, RamieError, SchemaError
from .fixtures import write_fixtures
from .model import TASKS, TaskKind
from .pipeline import STAGES, Pipeline, load_config

EXIT_OK, EXIT_PIPELINE, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("ramie")


def _cmd_fixtures(args) -> int:
    path = write_fixtures(args.out_dir, seed=args.seed)
    print(f"wrote fixtures and config to {path}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    config = load_config(args.config)
    reports = []
    for task in TASKS:
        paths = config.corpora[task]
        absent = [s for s in SPLITS if s not in paths]
        if absent:
            raise ConfigError(f"corpora.{task.value} has no {', '.join(absent)} split")
        train, dev, test = (load_corpus(paths[s], task, s) for s in SPLITS)
        report = validate_splits(train, dev, test, tolerance=args.tolerance)
        reports.append(report)
        print(report.describe())
    if args.json:
        Path(args.json).write_text(json.dumps([r.to_json() for r in reports], indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


def _cmd_run(args) -> int:
    config = load_config(args.config, output_dir=args.output_dir)
    if args.endpoint_kind:
        config.endpoint = dataclasses.replace(config.endpoint, kind=args.endpoint_kind)
    if args.retrieval_phase:
        config.retrieval = dataclasses.replace(config.retrieval, phase=args.retrieval_phase)
    if args.seed is not None:
        config.seed = args.seed
    stages = args.stages.split(",") if args.stages else None
    for entry in Pipeline(config).run(stages, force=args.force):
        state = "skipped" if entry.get("skipped") else "wrote"
        print(f"{entry['stage']:<9} {state:<7} {entry['artifact']}  {entry['content_hash'][:16]}")
    report = Path(config.output_dir) / "report.txt"
    if args.show and report.exists():
        print()
        print(report.read_text(encoding="utf-8"), end="")
    return EXIT_OK


def _cmd_split(args) -> int:
    task = TaskKind.parse(args.task)
    try:
        rows = read_jsonl(args.input)
    except OSError as exc:
        raise CorpusIOError(f"cannot read {args.input}: {exc.strerror or exc}") from exc
    records = []
    for lineno, obj in enumerate(rows, 1):
        try:
            records.append(record_from_json(obj, task))
        except (SchemaError, LabelError) as exc:
            raise SchemaError(exc.detail, line=lineno, field=exc.field, path=str(args.input)) from None
    out = Path(args.out_dir)
    for split, part in zip(SPLITS, split_records(records, args.seed)):
        path = save_corpus(part, out / f"{task.value.lower()}_{split}.jsonl")
        print(f"{split:<5} {len(part):>6}  {path}")
    return EXIT_OK


def _cmd_train_config(args) -> int:
    path = export_training_config(args.out, TrainingExportConfig())
    print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ramie",
        description="Retrieval-augmented multi-task extraction of supplement information from clinical text.",
        epilog="exit codes: 0 ok, 1 pipeline error, 2 config/schema/label/IO error",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log stage progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fixtures", help="write the synthetic fixture corpora and a ready-to-run config")
    p.add_argument("out_dir", help="directory to write corpora/ and config.json into")
    p.add_argument("--seed", type=int, default=7, help="generator seed (default: 7)")
    p.set_defaults(func=_cmd_fixtures)

    p = sub.add_parser("validate", help="check every corpus file and the train/dev/test ratios")
    p.add_argument("config", help="pipeline config (JSON)")
    p.add_argument("--tolerance", type=float, default=0.10, help="allowed relative ratio deviation (default: 0.10)")
    p.add_argument("--json", metavar="PATH", help="also write the split reports as JSON")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("run", help="run pipeline stages; unchanged stages are skipped")
    p.add_argument("config", help="pipeline config (JSON)")
    p.add_argument("--stages", help=f"comma-separated subset of: {','.join(STAGES)} (default: all)")
    p.add_argument("--output-dir", help="override the config's output_dir")
    p.add_argument("--endpoint-kind", choices=("chat", "mock-oracle", "mock-copy"), help="override endpoint.kind")
    p.add_argument("--retrieval-phase", choices=("train", "test"), help="override retrieval.phase for evaluation prompts")
    p.add_argument("--seed", type=int, help="override the global seed")
    p.add_argument("--force", action="store_true", help="rerun stages even when the manifest says they are current")
    p.add_argument("--show", action="store_true", help="print report.txt when done")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("split", help="cut one unsplit task corpus into train/dev/test at 8:1:1")
    p.add_argument("task", choices=[t.value for t in TASKS])
    p.add_argument("input", help="JSONL corpus to split")
    p.add_argument("out_dir")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("train-config", help="write the fine-tuning hyperparameter file")
    p.add_argument("out", help="output path")
    p.set_defaults(func=_cmd_train_config)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, SchemaError, LabelError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PipelineError, RamieError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
