"""Exact-match micro precision/recall/F1, error taxonomy and report aggregates."""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .dataset import Corpus
from .errors import AlignmentError, DuplicateTask, MissingTask
from .model import TASKS, EntityMention, Record, TaskKind, Triple
from .parsing import Prediction

log = logging.getLogger(__name__)

ERROR_CATEGORIES = ("redundant", "omission", "incorrect", "malformed")


@dataclass(frozen=True)
class TaskScore:
    task: TaskKind
    precision: float
    recall: float
    f1: float

    def to_json(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1}


@dataclass(frozen=True)
class TaskMetrics(TaskScore):
    tp: int = 0
    fp: int = 0
    fn: int = 0
    n_records: int = 0
    n_malformed: int = 0
    strict_accuracy: float = 0.0

    def to_json(self) -> dict:
        return {
            **super().to_json(),
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "n_records": self.n_records,
            "n_malformed": self.n_malformed,
            "strict_accuracy": self.strict_accuracy,
        }


def prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    # Count form of 2PR/(P+R); when fp == fn it divides the same ratio scaled by 2,
    # so F1 is bit-identical to P and R instead of one ulp off.
    f = 2 * tp / (2 * tp + fp + fn) if tp else 0.0
    return p, r, f


def _align(gold: Corpus | Sequence[Record], predictions: Sequence[Prediction]) -> list[tuple[Record, Prediction]]:
    records = list(gold.records if isinstance(gold, Corpus) else gold)
    by_id: dict[str, Prediction] = {}
    for p in predictions:
        if p.record_id in by_id:
            raise AlignmentError(f"duplicate prediction for {p.record_id!r}")
        by_id[p.record_id] = p
    pairs = []
    for rec in records:
        pred = by_id.pop(rec.id, None)
        if pred is None:
            raise AlignmentError(f"no prediction for {rec.id!r}")
        if pred.task is not rec.task:
            raise AlignmentError(f"prediction for {rec.id!r} is {pred.task}, gold is {rec.task}")
        pairs.append((rec, pred))
    if by_id:
        raise AlignmentError(f"predictions without gold: {sorted(by_id)[:5]}")
    tasks = {rec.task for rec, _ in pairs}
    if len(tasks) > 1:
        raise AlignmentError(f"mixed tasks in one scoring run: {sorted(t.value for t in tasks)}")
    return pairs


def _counts(rec: Record, pred: Prediction) -> tuple[int, int, int]:
    gold_items = Counter(rec.gold.items)
    if rec.task in (TaskKind.RE, TaskKind.UC):
        if pred.malformed or pred.value.value != rec.gold.value:
            return 0, 1, 1
        return 1, 0, 0
    pred_items = Counter(() if pred.malformed else pred.value.items)
    tp = sum((gold_items & pred_items).values())
    return tp, sum(pred_items.values()) - tp, sum(gold_items.values()) - tp


def score_task(gold: Corpus | Sequence[Record], predictions: Sequence[Prediction]) -> TaskMetrics:
    """Micro P/R/F1 pooled over records.

    NER/TE count items: a predicted entity or triple is a true positive only if an
    identical gold item is still unmatched in the same record. RE/UC records are
    one label each, so precision, recall and F1 all equal accuracy. Malformed
    predictions contribute no items (NER/TE) or a wrong label (RE/UC).
    """
    pairs = _align(gold, predictions)
    task = pairs[0][0].task if pairs else (gold.task if isinstance(gold, Corpus) else TaskKind.NER)
    tp = fp = fn = exact = malformed = 0
    for rec, pred in pairs:
        a, b, c = _counts(rec, pred)
        tp, fp, fn = tp + a, fp + b, fn + c
        malformed += pred.malformed
        exact += not pred.malformed and Counter(pred.value.items) == Counter(rec.gold.items)
    if tp == fp == fn == 0:
        log.warning("%s: no gold and no predicted items; scoring as 1.0", task)
        p = r = f = 1.0
    else:
        p, r, f = prf(tp, fp, fn)
    accuracy = exact / len(pairs) if pairs else 1.0
    return TaskMetrics(task, p, r, f, tp, fp, fn, len(pairs), malformed, accuracy)


# -- error taxonomy -------------------------------------------------------------------------


@dataclass
class ErrorBreakdown:
    counts: dict[str, int] = field(default_factory=lambda: dict.fromkeys(ERROR_CATEGORIES, 0))
    tags: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"counts": dict(self.counts), "tags": {k: list(v) for k, v in self.tags.items()}}

    @classmethod
    def from_json(cls, obj: dict) -> ErrorBreakdown:
        return cls({k: int(v) for k, v in obj["counts"].items()}, {k: tuple(v) for k, v in obj.get("tags", {}).items()})


def _contains(big: str, small: str) -> bool:
    return small in big


def _extends(pred, gold) -> bool:
    """True when *pred* spells out *gold* with extra words (same type/relation)."""
    if pred == gold:
        return False
    if isinstance(pred, EntityMention):
        return pred.etype == gold.etype and _contains(pred.surface, gold.surface)
    if isinstance(pred, Triple):
        return pred.relation == gold.relation and _contains(pred.head, gold.head) and _contains(pred.tail, gold.tail)
    return False


def record_error_tags(rec: Record, pred: Prediction) -> tuple[str, ...]:
    """Error categories for one record; empty when the prediction is perfect."""
    if pred.malformed:
        return ("malformed",)
    if rec.task in (TaskKind.RE, TaskKind.UC):
        return () if pred.value.value == rec.gold.value else ("incorrect",)
    gold = Counter(rec.gold.items)
    got = Counter(pred.value.items)
    matched = gold & got
    extra = got - gold
    missed = gold - got
    tags = set()
    for item in extra:
        if any(_extends(item, g) for g in gold):
            tags.add("redundant")
        elif not missed:
            tags.add("redundant")
        else:
            tags.add("incorrect")
    n_pred, n_gold = sum(got.values()), sum(gold.values())
    if missed and (matched or n_pred < n_gold):
        tags.add("omission")
    return tuple(c for c in ERROR_CATEGORIES if c in tags)


def classify_errors(gold: Corpus | Sequence[Record], predictions: Sequence[Prediction]) -> ErrorBreakdown:
    """Tag each imperfect record; counts are numbers of records carrying a tag."""
    out = ErrorBreakdown()
    for rec, pred in _align(gold, predictions):
        tags = record_error_tags(rec, pred)
        if tags:
            out.tags[rec.id] = tags
            for t in tags:
                out.counts[t] += 1
    return out


# -- report ---------------------------------------------------------------------------------


def relative_drop(baseline: float, value: float) -> float | None:
    """Signed relative drop in percent; positive means *value* is worse than *baseline*."""
    if baseline == 0:
        return None
    return (baseline - value) / baseline * 100.0


@dataclass
class RunReport:
    scores: dict[TaskKind, TaskScore]
    average_f1: float
    label: str = ""
    baseline_label: str | None = None
    perf_drop: dict[TaskKind, float | None] | None = None
    mean_task_drop: float | None = None
    average_f1_drop: float | None = None
    errors: dict[TaskKind, ErrorBreakdown] = field(default_factory=dict)

    def to_json(self) -> dict:
        doc = {
            "label": self.label,
            "tasks": {t.value: s.to_json() for t, s in self.scores.items()},
            "average_f1": self.average_f1,
        }
        if self.perf_drop is not None:
            doc["baseline_label"] = self.baseline_label
            doc["perf_drop_pct"] = {t.value: d for t, d in self.perf_drop.items()}
            doc["mean_task_drop_pct"] = self.mean_task_drop
            doc["average_f1_drop_pct"] = self.average_f1_drop
        if self.errors:
            doc["errors"] = {t.value: e.to_json() for t, e in self.errors.items()}
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> RunReport:
        scores = {}
        for name, obj in doc["tasks"].items():
            task = TaskKind.parse(name)
            if "tp" in obj:
                scores[task] = TaskMetrics(
                    task,
                    obj["precision"],
                    obj["recall"],
                    obj["f1"],
                    obj["tp"],
                    obj["fp"],
                    obj["fn"],
                    obj.get("n_records", 0),
                    obj.get("n_malformed", 0),
                    obj.get("strict_accuracy", 0.0),
                )
            else:
                scores[task] = TaskScore(task, obj["precision"], obj["recall"], obj["f1"])
        report = aggregate_report(scores.values(), label=doc.get("label", ""))
        report.errors = {TaskKind.parse(k): ErrorBreakdown.from_json(v) for k, v in doc.get("errors", {}).items()}
        if "perf_drop_pct" in doc:
            report.baseline_label = doc.get("baseline_label")
            report.perf_drop = {TaskKind.parse(k): v for k, v in doc["perf_drop_pct"].items()}
            report.mean_task_drop = doc.get("mean_task_drop_pct")
            report.average_f1_drop = doc.get("average_f1_drop_pct")
        return report

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_json(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        return path


def load_report(path: str | Path) -> RunReport:
    return RunReport.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def round_half_up(value: float, decimals: int) -> float:
    """Round the decimal text of *value* half-up (``round`` works on the binary value)."""
    q = Decimal(1).scaleb(-decimals)
    # drop binary noise first so 82.66499999999999 is treated as 82.665
    exact = Decimal(repr(round(value, decimals + 6)))
    return float(exact.quantize(q, rounding=ROUND_HALF_UP))


def aggregate_report(
    metrics: Iterable[TaskScore] | Mapping[TaskKind, TaskScore],
    baseline: RunReport | None = None,
    *,
    label: str = "",
    errors: Mapping[TaskKind, ErrorBreakdown] | None = None,
    decimals: int | None = None,
) -> RunReport:
    """Average F1 over the four tasks, plus relative drops against *baseline*.

    Two averages of the drop are reported because they differ: ``mean_task_drop``
    averages the four per-task drops, ``average_f1_drop`` is the drop of the
    average F1. With ``decimals`` set, both average F1s are rounded half-up to
    that many places first, which is how a drop read off a printed table comes out.
    """
    items = list(metrics.values() if isinstance(metrics, Mapping) else metrics)
    scores: dict[TaskKind, TaskScore] = {}
    for m in items:
        if m.task in scores:
            raise DuplicateTask(f"two scores for {m.task}")
        scores[m.task] = m
    missing = [t.value for t in TASKS if t not in scores]
    if missing:
        raise MissingTask(f"no score for {', '.join(missing)}")
    scores = {t: scores[t] for t in TASKS}
    average = math.fsum(s.f1 for s in scores.values()) / len(TASKS)
    report = RunReport(scores, average, label=label, errors=dict(errors or {}))
    if baseline is not None:
        drops = {t: relative_drop(baseline.scores[t].f1, scores[t].f1) for t in TASKS}
        report.baseline_label = baseline.label
        report.perf_drop = drops
        if all(d is not None for d in drops.values()):
            report.mean_task_drop = math.fsum(drops.values()) / len(TASKS)
        if decimals is None:
            report.average_f1_drop = relative_drop(baseline.average_f1, average)
        else:
            report.average_f1_drop = relative_drop(round_half_up(baseline.average_f1, decimals), round_half_up(average, decimals))
    return report


def _fmt(value: float | None, scale: float, suffix: str = "") -> str:
    if value is None:
        return "n/a"
    return f"{value * scale:.2f}{suffix}"


def render_table(report: RunReport, *, percent: bool = True) -> str:
    """Plain-text tables: P/R/F1 per task with Avg F1, then F1 and Perf. Drop if present.

    ``percent`` multiplies scores by 100 (use False for scores already in percent).
    """
    scale = 100.0 if percent else 1.0
    name = report.label or "run"
    header = ["Model"]
    row = [name]
    for t in TASKS:
        header += [f"{t.value} P", f"{t.value} R", f"{t.value} F1"]
        s = report.scores[t]
        row += [_fmt(s.precision, scale), _fmt(s.recall, scale), _fmt(s.f1, scale)]
    header.append("Avg F1")
    row.append(_fmt(report.average_f1, scale))
    lines = _align_rows([header, row])
    if report.perf_drop is not None:
        header = ["Model"]
        row = [name]
        for t in TASKS:
            header += [f"{t.value} F1", "Perf. Drop"]
            row += [_fmt(report.scores[t].f1, scale), _fmt(report.perf_drop[t], 1.0, "%")]
        header += ["Avg F1", "Drop of Avg F1", "Mean Task Drop"]
        row += [
            _fmt(report.average_f1, scale),
            _fmt(report.average_f1_drop, 1.0, "%"),
            _fmt(report.mean_task_drop, 1.0, "%"),
        ]
        lines += ["", f"Perf. Drop relative to {report.baseline_label or 'baseline'}"]
        lines += _align_rows([header, row])
    if report.errors:
        lines += ["", "Error categories (records)"]
        rows = [["Task", *ERROR_CATEGORIES]]
        for t, e in report.errors.items():
            rows.append([t.value, *(str(e.counts[c]) for c in ERROR_CATEGORIES)])
        lines += _align_rows(rows)
    return "\n".join(lines) + "\n"


def _align_rows(rows: list[list[str]]) -> list[str]:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    out = []
    for k, r in enumerate(rows):
        cells = [r[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(r[1:], widths[1:])]
        out.append(" | ".join(cells))
        if k == 0:
            out.append("-+-".join("-" * w for w in widths))
    return out
