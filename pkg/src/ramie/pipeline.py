"""Config-driven pipeline: each stage reads earlier artifacts and writes exactly one file.

Stages, in order, with the artifact each writes under ``output_dir``:

========  ========================  ==========================================
blend     blend.jsonl               shuffled multi-task training corpus
index     index.json                example index over the blend
export    train_export.jsonl        instruction-tuning rows (train-mode retrieval)
prompts   prompts.jsonl             evaluation prompts
generate  generations.jsonl         raw model output
parse     predictions.jsonl         structured predictions
score     scores.json               metrics, error breakdown, optional drops
report    report.txt                plain-text tables
========  ========================  ==========================================

Every completed stage appends a line to ``manifest.jsonl`` with the artifact hash,
input hashes, config hash, seed and timestamp. A stage whose inputs, config and
artifact all match its latest manifest line is skipped.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from .dataset import (
    SPLITS,
    Corpus,
    blend,
    blended_id,
    export_training_file,
    load_blend,
    load_corpus,
    read_jsonl,
    save_corpus,
    write_jsonl,
)
from .embedding import EmbedderSpec
from .errors import ConfigError, PipelineError
from .evaluation import aggregate_report, classify_errors, load_report, render_table, score_task
from .generation import GenerationRecord, ModelEndpointSpec, generate
from .model import TASKS, Record, TaskKind
from .parsing import ParsePolicy, Prediction, parse_generation
from .prompting import Prompt, build_prompt, load_templates
from .retrieval import RetrievalMode, Retriever, build_index, corpus_fingerprint, load_index, save_index

log = logging.getLogger(__name__)

STAGES = ("blend", "index", "export", "prompts", "generate", "parse", "score", "report")
ARTIFACTS = {
    "blend": "blend.jsonl",
    "index": "index.json",
    "export": "train_export.jsonl",
    "prompts": "prompts.jsonl",
    "generate": "generations.jsonl",
    "parse": "predictions.jsonl",
    "score": "scores.json",
    "report": "report.txt",
}
MANIFEST = "manifest.jsonl"


@dataclass(frozen=True)
class RetrievalConfig:
    phase: str = "test"
    k: int = 1
    baseline: str = "similarity"
    with_question: bool = True
    rag: bool = True
    key_mode: str = "sentence+response"


@dataclass
class PipelineConfig:
    corpora: dict[TaskKind, dict[str, Path]]
    output_dir: Path
    seed: int = 0
    label: str = ""
    eval_split: str = "test"
    embedder: EmbedderSpec = field(default_factory=EmbedderSpec)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    endpoint: ModelEndpointSpec = field(default_factory=lambda: ModelEndpointSpec(kind="mock-oracle"))
    parse: ParsePolicy = field(default_factory=ParsePolicy)
    template_dir: Path | None = None
    baseline_report: Path | None = None

    def mode(self, phase: str | None = None) -> RetrievalMode:
        r = self.retrieval
        return RetrievalMode(phase or r.phase, r.k, r.baseline, self.seed)

    def fingerprint(self) -> str:
        """Hash of everything that shapes artifacts; the output location is excluded."""
        doc = {
            "corpora": {t.value: {s: str(p) for s, p in sp.items()} for t, sp in self.corpora.items()},
            "seed": self.seed,
            "label": self.label,
            "eval_split": self.eval_split,
            "embedder": self.embedder.to_json(),
            "retrieval": asdict(self.retrieval),
            "endpoint": self.endpoint.to_json(),
            "parse": asdict(self.parse),
            "template_dir": str(self.template_dir) if self.template_dir else None,
            "baseline_report": str(self.baseline_report) if self.baseline_report else None,
        }
        return _sha256(json.dumps(doc, sort_keys=True).encode("utf-8"))


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def file_hash(path: Path) -> str:
    return _sha256(Path(path).read_bytes())


def _section(raw: dict, key: str, cls, **defaults):
    obj = raw.get(key) or {}
    if not isinstance(obj, dict):
        raise ConfigError(f"config section {key!r} must be an object")
    try:
        return cls(**{**defaults, **obj})
    except TypeError as exc:
        raise ConfigError(f"config section {key!r}: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"config section {key!r}: {exc}") from None


def load_config(path: str | Path, *, output_dir: str | Path | None = None, check_paths: bool = True) -> PipelineConfig:
    """Read a JSON config; relative paths resolve against the config file's directory."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    base = path.resolve().parent

    def resolve(p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else base / q

    corpora: dict[TaskKind, dict[str, Path]] = {}
    raw_corpora = raw.get("corpora")
    if not isinstance(raw_corpora, dict):
        raise ConfigError("config needs a 'corpora' object mapping task -> split -> path")
    for name, splits in raw_corpora.items():
        try:
            task = TaskKind.parse(name)
        except ValueError:
            raise ConfigError(f"unknown task {name!r} in corpora") from None
        if not isinstance(splits, dict) or set(splits) - set(SPLITS):
            raise ConfigError(f"corpora.{name} must map some of {SPLITS} to paths")
        corpora[task] = {s: resolve(p) for s, p in splits.items()}
    missing_tasks = [t.value for t in TASKS if t not in corpora]
    if missing_tasks:
        raise ConfigError(f"corpora missing for {', '.join(missing_tasks)}")

    eval_split = raw.get("eval_split", "test")
    if eval_split not in SPLITS:
        raise ConfigError(f"eval_split must be one of {SPLITS}")
    out = Path(output_dir) if output_dir is not None else resolve(raw.get("output_dir", "out"))
    config = PipelineConfig(
        corpora=corpora,
        output_dir=out,
        seed=int(raw.get("seed", 0)),
        label=str(raw.get("label", "")),
        eval_split=eval_split,
        embedder=_section(raw, "embedder", EmbedderSpec),
        retrieval=_section(raw, "retrieval", RetrievalConfig),
        endpoint=_section(raw, "endpoint", ModelEndpointSpec),
        parse=_section(raw, "parse", ParsePolicy),
        template_dir=resolve(raw["template_dir"]) if raw.get("template_dir") else None,
        baseline_report=resolve(raw["baseline_report"]) if raw.get("baseline_report") else None,
    )
    try:
        config.mode()
    except ValueError as exc:
        raise ConfigError(f"config section 'retrieval': {exc}") from None
    if check_paths:
        check_config_paths(config)
    return config


def check_config_paths(config: PipelineConfig) -> None:
    missing = []
    for task, splits in config.corpora.items():
        for split in ("train", config.eval_split):
            if split not in splits:
                missing.append(f"corpora.{task.value}.{split} (not configured)")
            elif not splits[split].is_file():
                missing.append(str(splits[split]))
    for p in (config.template_dir, config.baseline_report):
        if p is not None and not p.exists():
            missing.append(str(p))
    if missing:
        raise ConfigError("missing paths:\n  " + "\n  ".join(missing))


# -- stages ---------------------------------------------------------------------------------


class Pipeline:
    def __init__(self, config: PipelineConfig, *, client=None, clock: Callable[[], float] = time.time):
        self.config = config
        self.out = Path(config.output_dir)
        self.client = client
        self.clock = clock
        self._corpora: dict[tuple[TaskKind, str], Corpus] = {}

    # helpers

    def artifact(self, stage: str) -> Path:
        return self.out / ARTIFACTS[stage]

    def corpus(self, task: TaskKind, split: str) -> Corpus:
        key = (task, split)
        if key not in self._corpora:
            self._corpora[key] = load_corpus(self.config.corpora[task][split], task, split)
        return self._corpora[key]

    def eval_records(self) -> list[Record]:
        """Evaluation records for all tasks, ids prefixed like blended ids."""
        out = []
        for task in TASKS:
            out.extend(r.with_id(blended_id(task, r.id)) for r in self.corpus(task, self.config.eval_split))
        return out

    def inputs(self, stage: str) -> list[Path]:
        c = self.config
        train = [c.corpora[t]["train"] for t in TASKS]
        evals = [c.corpora[t][c.eval_split] for t in TASKS]
        extra = [c.template_dir / f"{t.value}.txt" for t in TASKS] if c.template_dir else []
        return {
            "blend": train,
            "index": [self.artifact("blend")],
            "export": [self.artifact("blend"), self.artifact("index"), *extra],
            "prompts": [self.artifact("index"), *evals, *extra],
            "generate": [self.artifact("prompts"), *evals],
            "parse": [self.artifact("generate")],
            "score": [self.artifact("parse"), *evals, *([c.baseline_report] if c.baseline_report else [])],
            "report": [self.artifact("score")],
        }[stage]

    def _retrieval_prompts(self, queries: Sequence[Record], phase: str) -> list[Prompt]:
        c = self.config
        templates = load_templates(c.template_dir)
        if not c.retrieval.rag:
            return [build_prompt(templates[q.task], None, q, with_question=c.retrieval.with_question) for q in queries]
        blend_corpus = load_blend(self.artifact("blend"))
        index = load_index(self.artifact("index"), expected_fingerprint=corpus_fingerprint(blend_corpus.records))
        retriever = Retriever(index, self.client)
        hits = retriever.retrieve_many(queries, c.mode(phase))
        return [
            build_prompt(
                templates[q.task],
                [index.records[rid] for rid, _ in h],
                q,
                with_question=c.retrieval.with_question,
            )
            for q, h in zip(queries, hits)
        ]

    # stage bodies

    def _blend(self, path: Path) -> None:
        corpora = [self.corpus(t, "train") for t in TASKS]
        save_corpus(blend(corpora, self.config.seed).records, path)

    def _index(self, path: Path) -> None:
        c = self.config
        blended = load_blend(self.artifact("blend"))
        index = build_index(
            blended, c.embedder, with_question=c.retrieval.with_question, key_mode=c.retrieval.key_mode, client=self.client
        )
        save_index(index, path)

    def _export(self, path: Path) -> None:
        blended = load_blend(self.artifact("blend"))
        prompts = self._retrieval_prompts(blended.records, "train")
        export_training_file(blended, prompts, path)

    def _prompts(self, path: Path) -> None:
        prompts = self._retrieval_prompts(self.eval_records(), self.config.retrieval.phase)
        write_jsonl(path, (p.to_json() for p in prompts))

    def _generate(self, path: Path) -> None:
        prompts = [Prompt.from_json(o) for o in read_jsonl(self.artifact("prompts"))]
        records = {r.id: r for r in self.eval_records()}
        gens = generate(self.config.endpoint, prompts, records=records, client=self.client)
        failed = sum(g.error is not None for g in gens)
        if failed:
            log.warning("%d of %d generations failed; recorded with error tags", failed, len(gens))
        write_jsonl(path, (g.to_json() for g in gens))

    def _parse(self, path: Path) -> None:
        gens = [GenerationRecord.from_json(o) for o in read_jsonl(self.artifact("generate"))]
        preds = [parse_generation(g.task, g.raw_generation, self.config.parse, record_id=g.record_id) for g in gens]
        write_jsonl(path, (p.to_json() for p in preds))

    def _score(self, path: Path) -> None:
        preds = [Prediction.from_json(o) for o in read_jsonl(self.artifact("parse"))]
        records = self.eval_records()
        metrics, errors = [], {}
        for task in TASKS:
            gold = [r for r in records if r.task is task]
            task_preds = [p for p in preds if p.task is task]
            metrics.append(score_task(gold, task_preds))
            errors[task] = classify_errors(gold, task_preds)
        baseline = load_report(self.config.baseline_report) if self.config.baseline_report else None
        aggregate_report(metrics, baseline, label=self.config.label, errors=errors).save(path)

    def _report(self, path: Path) -> None:
        path.write_text(render_table(load_report(self.artifact("score"))), encoding="utf-8")

    # manifest

    def manifest(self) -> list[dict]:
        path = self.out / MANIFEST
        if not path.exists():
            return []
        return read_jsonl(path)

    def _latest(self, stage: str) -> dict | None:
        entries = [e for e in self.manifest() if e.get("stage") == stage]
        return entries[-1] if entries else None

    def run_stage(self, stage: str, *, force: bool = False) -> dict:
        inputs = self.inputs(stage)
        missing = [str(p) for p in inputs if not Path(p).exists()]
        if missing:
            raise PipelineError(f"stage {stage!r} is missing inputs: {', '.join(missing)}")
        input_hashes = {str(Path(p).name if Path(p).parent == self.out else p): file_hash(p) for p in inputs}
        config_hash = self.config.fingerprint()
        target = self.artifact(stage)
        latest = self._latest(stage)
        if (
            not force
            and latest is not None
            and target.exists()
            and latest["config_hash"] == config_hash
            and latest["inputs"] == input_hashes
            and latest["content_hash"] == file_hash(target)
        ):
            log.info("stage %s up to date (%s)", stage, latest["content_hash"][:12])
            return {**latest, "skipped": True}
        self.out.mkdir(parents=True, exist_ok=True)
        tmp = target.with_name(target.name + ".tmp")
        getattr(self, f"_{stage}")(tmp)
        tmp.replace(target)
        entry = {
            "stage": stage,
            "artifact": target.name,
            "content_hash": file_hash(target),
            "inputs": input_hashes,
            "config_hash": config_hash,
            "seed": self.config.seed,
            "timestamp": self.clock(),
        }
        write_jsonl_append(self.out / MANIFEST, entry)
        log.info("stage %s wrote %s (%s)", stage, target.name, entry["content_hash"][:12])
        return entry

    def run(self, stages: Sequence[str] | None = None, *, force: bool = False) -> list[dict]:
        wanted = list(STAGES if not stages else stages)
        unknown = [s for s in wanted if s not in STAGES]
        if unknown:
            raise ConfigError(f"unknown stage(s) {unknown}; choose from {', '.join(STAGES)}")
        return [self.run_stage(s, force=force) for s in STAGES if s in wanted]


def write_jsonl_append(path: Path, row: dict) -> None:
    with Path(path).open("a", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(row, ensure_ascii=False) + "\n")
