"""Corpus files: loading, validation, split checks, multi-task blending and training export.

Corpus files are UTF-8 JSON Lines, one record per line::

    {"id": "n17", "task": "NER", "text": "...", "gold": {"task": "NER", "entities": [{"surface": "ginger", "type": "ginger"}]}}
    {"id": "r3", "task": "RE", "text": "...", "re_head": "melatonin", "re_tail": "dizziness", "gold": {"task": "RE", "relation": "negative"}}

``dump_record`` produces the canonical form; loading then dumping a canonical file is
byte-identical.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import (
    AlignmentError,
    CorpusIOError,
    DuplicateTask,
    LabelError,
    MissingTask,
    SchemaError,
    TaskMismatch,
)
from .prompting import serialize_gold
from .model import TASKS, EntityMention, GoldOutput, Record, TaskKind, Triple, normalize_text

log = logging.getLogger(__name__)

SPLITS = ("train", "dev", "test")
BLEND_SEPARATOR = ":"


# -- record codec ---------------------------------------------------------------------------


def gold_to_json(gold: GoldOutput) -> dict:
    task = gold.task
    if task is TaskKind.NER:
        return {"task": "NER", "entities": [{"surface": m.surface, "type": m.etype} for m in gold.value]}
    if task is TaskKind.TE:
        return {
            "task": "TE",
            "triples": [{"head": t.head, "relation": t.relation, "tail": t.tail} for t in gold.value],
        }
    if task is TaskKind.RE:
        return {"task": "RE", "relation": gold.value}
    return {"task": "UC", "status": gold.value}


def _require(obj: Mapping, key: str, kind, where: str):
    if key not in obj:
        raise SchemaError("missing", field=where)
    value = obj[key]
    if not isinstance(value, kind):
        raise SchemaError(f"expected {getattr(kind, '__name__', kind)}", field=where)
    return value


def gold_from_json(obj, task: TaskKind) -> GoldOutput:
    """Decode a gold structure, checking its task tag against *task*."""
    if not isinstance(obj, dict):
        raise SchemaError("gold must be an object", field="gold")
    tag = _require(obj, "task", str, "gold.task")
    if TaskKind.parse(tag) is not task:
        raise SchemaError(f"gold tagged {tag!r} on a {task} record", field="gold.task")
    try:
        if task is TaskKind.NER:
            entities = _require(obj, "entities", list, "gold.entities")
            mentions = []
            for ent in entities:
                if not isinstance(ent, dict):
                    raise SchemaError("entity must be an object", field="gold.entities")
                mentions.append(
                    EntityMention(
                        _require(ent, "surface", str, "gold.entities.surface"),
                        _require(ent, "type", str, "gold.entities.type"),
                    )
                )
            return GoldOutput.ner(mentions)
        if task is TaskKind.TE:
            triples = []
            for tri in _require(obj, "triples", list, "gold.triples"):
                if not isinstance(tri, dict):
                    raise SchemaError("triple must be an object", field="gold.triples")
                triples.append(
                    Triple(
                        _require(tri, "head", str, "gold.triples.head"),
                        _require(tri, "relation", str, "gold.triples.relation"),
                        _require(tri, "tail", str, "gold.triples.tail"),
                    )
                )
            return GoldOutput.te(triples)
        if task is TaskKind.RE:
            return GoldOutput.re(_require(obj, "relation", str, "gold.relation"))
        return GoldOutput.uc(_require(obj, "status", str, "gold.status"))
    except LabelError as exc:
        raise LabelError(exc.detail, field="gold") from None


def record_to_json(record: Record) -> dict:
    obj = {"id": record.id, "task": record.task.value, "text": record.text}
    if record.task is TaskKind.RE:
        obj["re_head"] = record.re_head
        obj["re_tail"] = record.re_tail
    obj["gold"] = gold_to_json(record.gold)
    return obj


def record_from_json(obj, expected_task: TaskKind | None = None) -> Record:
    if not isinstance(obj, dict):
        raise SchemaError("record must be a JSON object")
    rid = _require(obj, "id", str, "id")
    try:
        task = TaskKind.parse(_require(obj, "task", str, "task"))
    except LabelError as exc:
        raise SchemaError(exc.detail, field="task") from None
    if expected_task is not None and task is not expected_task:
        raise SchemaError(f"record task {task} in a {expected_task} corpus", field="task")
    text = _require(obj, "text", str, "text")
    re_head = obj.get("re_head")
    re_tail = obj.get("re_tail")
    if task is TaskKind.RE:
        re_head = _require(obj, "re_head", str, "re_head")
        re_tail = _require(obj, "re_tail", str, "re_tail")
    elif re_head is not None or re_tail is not None:
        raise SchemaError(f"re_head/re_tail not allowed on {task} records", field="re_head")
    gold = gold_from_json(obj.get("gold"), task) if "gold" in obj else None
    if gold is None:
        raise SchemaError("missing", field="gold")
    return Record(rid, task, text, gold, re_head, re_tail)


def dump_json_line(obj) -> str:
    return json.dumps(obj, ensure_ascii=False)


def dump_record(record: Record) -> str:
    return dump_json_line(record_to_json(record))


def write_jsonl(path: str | Path, rows: Iterable) -> Path:
    """Write JSON Lines with ``\\n`` endings; rows may be dicts or pre-rendered strings."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(row if isinstance(row, str) else dump_json_line(row))
            fh.write("\n")
    return path


def read_jsonl(path: str | Path) -> list[dict]:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise CorpusIOError(f"{path}: {exc.strerror or exc}") from exc
    rows = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rows.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON ({exc.msg})", line=lineno, path=str(path)) from None
    return rows


# -- corpora --------------------------------------------------------------------------------


@dataclass(frozen=True)
class Corpus:
    task: TaskKind
    split: str
    records: tuple[Record, ...]
    source: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "task", TaskKind.parse(self.task))
        object.__setattr__(self, "records", tuple(self.records))
        if self.split not in SPLITS:
            raise SchemaError(f"unknown split {self.split!r}", field="split")
        seen: set[str] = set()
        for rec in self.records:
            if rec.task is not self.task:
                raise TaskMismatch(f"record {rec.id!r} is {rec.task}, corpus is {self.task}")
            if rec.id in seen:
                raise SchemaError(f"duplicate id {rec.id!r}", field="id")
            seen.add(rec.id)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


def load_corpus(path: str | Path, task: TaskKind | str, split: str) -> Corpus:
    """Parse and validate a corpus file; records keep file order."""
    task = TaskKind.parse(task)
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CorpusIOError(f"{path}: {exc.strerror or exc}") from exc
    records: list[Record] = []
    seen: dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON ({exc.msg})", line=lineno, path=str(path)) from None
        try:
            rec = record_from_json(obj, expected_task=task)
        except LabelError as exc:
            raise type(exc)(exc.detail, line=lineno, field=exc.field, path=str(path)) from None
        except SchemaError as exc:
            raise SchemaError(exc.detail, line=lineno, field=exc.field, path=str(path)) from None
        if rec.id in seen:
            raise SchemaError(
                f"duplicate id {rec.id!r} (first on line {seen[rec.id]})", line=lineno, field="id", path=str(path)
            )
        seen[rec.id] = lineno
        records.append(rec)
    return Corpus(task, split, tuple(records), source=str(path))


def save_corpus(corpus: Corpus | Sequence[Record], path: str | Path) -> Path:
    records = corpus.records if isinstance(corpus, Corpus) else corpus
    return write_jsonl(path, (dump_record(r) for r in records))


# -- split validation -----------------------------------------------------------------------

TARGET_RATIO = (8.0, 1.0, 1.0)


@dataclass
class SplitReport:
    task: TaskKind
    sizes: tuple[int, int, int]
    ratio: tuple[float, float, float]
    ratio_warnings: list[str] = field(default_factory=list)
    id_collisions: list[tuple[str, str, str]] = field(default_factory=list)
    duplicate_sentences: list[tuple[str, str, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.ratio_warnings or self.id_collisions or self.duplicate_sentences)

    def to_json(self) -> dict:
        out = asdict(self)
        out["task"] = self.task.value
        out["ok"] = self.ok
        return out

    def describe(self) -> str:
        r = ":".join(f"{x:.2f}" for x in self.ratio)
        status = "ok" if self.ok else "WARN"
        lines = [f"{self.task.value}: sizes {self.sizes[0]}/{self.sizes[1]}/{self.sizes[2]} ratio {r} [{status}]"]
        lines += [f"  ratio: {w}" for w in self.ratio_warnings]
        lines += [f"  id collision {a}/{b}: {i}" for a, b, i in self.id_collisions]
        lines += [f"  duplicate sentence {a}/{b}: {s}" for a, b, s in self.duplicate_sentences]
        return "\n".join(lines)


def validate_splits(train: Corpus, dev: Corpus, test: Corpus, tolerance: float = 0.10) -> SplitReport:
    """Compare split sizes with 8:1:1 and look for leakage between splits.

    The ratio is expressed relative to the test size. Each component outside
    ``tolerance`` (relative) of its target yields a warning, not an error.
    """
    if not (train.task is dev.task is test.task):
        raise TaskMismatch(f"splits disagree on task: {train.task}/{dev.task}/{test.task}")
    corpora = {"train": train, "dev": dev, "test": test}
    sizes = (len(train), len(dev), len(test))
    ref = sizes[2] or 1
    ratio = tuple(n / ref for n in sizes)
    warnings = []
    for name, got, want in zip(SPLITS, ratio, TARGET_RATIO):
        if abs(got - want) > tolerance * want:
            warnings.append(f"{name} ratio {got:.2f} deviates from {want:g} by more than {tolerance:.0%}")

    collisions, duplicates = [], []
    names = list(corpora)
    for i, a in enumerate(names):
        ids_a = {r.id for r in corpora[a]}
        sents_a = {normalize_text(r.text) for r in corpora[a]}
        for b in names[i + 1 :]:
            for rec in corpora[b]:
                if rec.id in ids_a:
                    collisions.append((a, b, rec.id))
                if normalize_text(rec.text) in sents_a:
                    duplicates.append((a, b, normalize_text(rec.text)))
    report = SplitReport(train.task, sizes, ratio, warnings, collisions, duplicates)
    for w in warnings:
        log.warning("%s: %s", train.task, w)
    return report


def split_records(records: Sequence[Record], seed: int, ratio=TARGET_RATIO) -> tuple[list, list, list]:
    """Shuffle and cut an unsplit record list into train/dev/test by *ratio*."""
    shuffled = list(records)
    random.Random(seed).shuffle(shuffled)
    total = sum(ratio)
    n = len(shuffled)
    n_dev = round(n * ratio[1] / total)
    n_test = round(n * ratio[2] / total)
    n_train = n - n_dev - n_test
    return shuffled[:n_train], shuffled[n_train : n_train + n_dev], shuffled[n_train + n_dev :]


# -- blending -------------------------------------------------------------------------------


@dataclass(frozen=True)
class Provenance:
    task: TaskKind
    source: str
    original_id: str


@dataclass(frozen=True)
class BlendedCorpus:
    records: tuple[Record, ...]
    provenance: Mapping[str, Provenance]

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def by_task(self, task: TaskKind) -> list[Record]:
        return [r for r in self.records if r.task is task]


def blended_id(task: TaskKind, record_id: str) -> str:
    return f"{task.value}{BLEND_SEPARATOR}{record_id}"


def blend(train_corpora: Sequence[Corpus], seed: int) -> BlendedCorpus:
    """Merge one train corpus per task into a single shuffled, task-prefixed corpus."""
    by_task: dict[TaskKind, Corpus] = {}
    for corpus in train_corpora:
        if corpus.task in by_task:
            raise DuplicateTask(f"two corpora supplied for {corpus.task}")
        by_task[corpus.task] = corpus
    missing = [t.value for t in TASKS if t not in by_task]
    if missing:
        raise MissingTask(f"no train corpus for {', '.join(missing)}")

    records: list[Record] = []
    provenance: dict[str, Provenance] = {}
    for task in TASKS:
        corpus = by_task[task]
        for rec in corpus:
            new_id = blended_id(task, rec.id)
            records.append(rec.with_id(new_id))
            provenance[new_id] = Provenance(task, corpus.source, rec.id)
    random.Random(seed).shuffle(records)
    return BlendedCorpus(tuple(records), provenance)


def load_blend(path: str | Path) -> BlendedCorpus:
    """Read a blended corpus written by ``save_corpus``; provenance is rebuilt from ids."""
    records = []
    provenance = {}
    for lineno, obj in enumerate(read_jsonl(path), start=1):
        try:
            rec = record_from_json(obj)
        except (SchemaError, LabelError) as exc:
            raise SchemaError(exc.detail, line=lineno, field=exc.field, path=str(path)) from None
        original = rec.id.split(BLEND_SEPARATOR, 1)[-1]
        records.append(rec)
        provenance[rec.id] = Provenance(rec.task, str(path), original)
    return BlendedCorpus(tuple(records), provenance)


# -- training export ------------------------------------------------------------------------


def training_rows(blend: BlendedCorpus, prompts: Sequence) -> list[dict]:
    """Join prompts to blended records by id, in blend order.

    Each row is ``{id, task, prompt_text, target_text}``; ``target_text`` is the
    serialized gold response, kept apart from the prompt so trainers can mask it.
    """
    by_id: dict[str, object] = {}
    for p in prompts:
        if p.record_id in by_id:
            raise AlignmentError(f"duplicate prompt for {p.record_id!r}")
        by_id[p.record_id] = p
    ids = {r.id for r in blend.records}
    extra = sorted(set(by_id) - ids)
    missing = sorted(ids - set(by_id))
    if extra or missing:
        raise AlignmentError(f"prompts/blend mismatch: missing {missing[:5]}, unexpected {extra[:5]}")
    rows = []
    for rec in blend.records:
        p = by_id[rec.id]
        if p.task is not rec.task:
            raise AlignmentError(f"prompt for {rec.id!r} is {p.task}, record is {rec.task}")
        rows.append(
            {
                "id": rec.id,
                "task": rec.task.value,
                "prompt_text": p.rendered_text,
                "target_text": serialize_gold(rec.gold),
            }
        )
    return rows


def export_training_file(blend: BlendedCorpus, prompts: Sequence, path: str | Path) -> Path:
    return write_jsonl(path, training_rows(blend, prompts))


@dataclass(frozen=True)
class TrainingExportConfig:
    lora_rank: int = 64
    lora_alpha: int = 32
    lora_dropout: float = 0.1
    learning_rate: float = 1e-5
    max_steps: int = 5000
    eval_every: int = 1000
    per_device_batch: int = 4

    def to_lines(self) -> list[str]:
        return [f"{k} = {v!r}" for k, v in asdict(self).items()]


def export_training_config(path: str | Path, config: TrainingExportConfig | None = None) -> Path:
    """Write the fine-tuning hyperparameters as flat ``key = value`` lines."""
    config = config or TrainingExportConfig()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(config.to_lines()) + "\n", encoding="utf-8")
    return path


def read_training_config(path: str | Path) -> TrainingExportConfig:
    values = {}
    types = {k: type(v) for k, v in asdict(TrainingExportConfig()).items()}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        key, _, raw = line.partition("=")
        key = key.strip()
        if key not in types:
            raise SchemaError(f"unknown key {key!r}", field=key)
        values[key] = types[key](raw.strip())
    return TrainingExportConfig(**values)
