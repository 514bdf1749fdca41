"""Acceptance criteria, one test each; the terminal summary prints PASS/FAIL per criterion."""

from __future__ import annotations

import json
import math
import random
import re
import time
from collections import Counter
from pathlib import Path

import numpy as np
import pytest

from ramie.cli import main
from ramie.dataset import Corpus, blend, load_corpus
from ramie.embedding import EmbedderSpec, HashedLexicalEmbedder, cosine
from ramie.evaluation import TaskScore, aggregate_report, score_task
from ramie.fixtures import generate_task
from ramie.model import ENTITY_TYPES, RELATION_TYPES, TASKS, USAGE_STATUSES, EntityMention, GoldOutput, Record, TaskKind, Triple, normalize_text
from ramie.parsing import MALFORMED, OK, Prediction, parse_generation
from ramie.pipeline import load_config
from ramie.prompting import record_sentence, serialize_gold
from ramie.retrieval import RetrievalMode, Retriever, build_index

TOL = 0.005 + 1e-9  # two-decimal rounding of published cells


def _fixture_records(config_path: Path) -> list[Record]:
    config = load_config(config_path)
    return [r for t in TASKS for split in ("train", "dev", "test") for r in load_corpus(config.corpora[t][split], t, split)]


# -- metric oracle ----------------------------------------------------------------------------

_SURFACES = ["ginger", "mild nausea", "nausea", "rash", "green tea", "garlic", "hot flashes", "insomnia"]


def _random_item(task: TaskKind, rng: random.Random):
    if task is TaskKind.NER:
        return EntityMention(rng.choice(_SURFACES), rng.choice(ENTITY_TYPES[:4]))
    return Triple(rng.choice(_SURFACES[:4]), rng.choice(RELATION_TYPES), rng.choice(_SURFACES[4:]))


def _random_value(task: TaskKind, rng: random.Random) -> GoldOutput:
    if task in (TaskKind.NER, TaskKind.TE):
        return GoldOutput(task, tuple(_random_item(task, rng) for _ in range(rng.randint(0, 4))))
    return GoldOutput(task, rng.choice(RELATION_TYPES if task is TaskKind.RE else USAGE_STATUSES))


def _random_corpus(task: TaskKind, rng: random.Random) -> tuple[list[Record], list[Prediction]]:
    records, preds = [], []
    for i in range(rng.randint(1, 500)):
        gold = _random_value(task, rng)
        rid = f"r{i}"
        if task is TaskKind.RE:
            records.append(Record(rid, task, "s", gold, re_head="h", re_tail="t"))
        else:
            records.append(Record(rid, task, "s", gold))
        roll = rng.random()
        if roll < 0.05:
            preds.append(Prediction(rid, task, None, MALFORMED, "syntax"))
        elif roll < 0.35:
            preds.append(Prediction(rid, task, gold, OK))
        elif roll < 0.6 and isinstance(gold.value, tuple) and gold.value:
            kept = list(gold.value)
            rng.shuffle(kept)
            kept = kept[: rng.randint(0, len(kept))] + [_random_item(task, rng) for _ in range(rng.randint(0, 2))]
            preds.append(Prediction(rid, task, GoldOutput(task, tuple(kept)), OK))
        else:
            preds.append(Prediction(rid, task, _random_value(task, rng), OK))
    rng.shuffle(preds)
    return records, preds


def _reference_counts(records: list[Record], preds: list[Prediction]) -> tuple[int, int, int]:
    """Scan-and-strike: each predicted item cancels one equal, not yet used gold item."""
    by_id = {p.record_id: p for p in preds}
    tp = fp = fn = 0
    for rec in records:
        pred = by_id[rec.id]
        if rec.task in (TaskKind.RE, TaskKind.UC):
            hit = pred.value is not None and pred.value.value == rec.gold.value
            tp, fp, fn = tp + hit, fp + (not hit), fn + (not hit)
            continue
        remaining = list(rec.gold.value)
        for item in (pred.value.value if pred.value is not None else ()):
            for j, g in enumerate(remaining):
                if g == item:
                    del remaining[j]
                    tp += 1
                    break
            else:
                fp += 1
        fn += len(remaining)
    return tp, fp, fn


@pytest.mark.criterion("Metric oracle equivalence")
def test_metric_oracle_equivalence(note):
    rng = random.Random(20240601)
    corpora = [(task, _random_corpus(task, rng)) for task in TASKS for _ in range(200)]
    start = time.perf_counter()
    results = [score_task(records, preds) for _, (records, preds) in corpora]
    elapsed = time.perf_counter() - start
    mismatches = 0
    for (task, (records, preds)), m in zip(corpora, results):
        tp, fp, fn = _reference_counts(records, preds)
        if (m.tp, m.fp, m.fn) != (tp, fp, fn):
            mismatches += 1
            continue
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        if (tp, fp, fn) != (0, 0, 0):
            assert (m.precision, m.recall) == (p, r)
            assert m.f1 == pytest.approx(f, abs=1e-12)
    n_records = sum(len(r) for _, (r, _) in corpora)
    note(f"{len(corpora)} corpora, {n_records} records, {mismatches} count mismatches, scoring {elapsed:.2f}s")
    assert mismatches == 0
    assert max(len(r) for _, (r, _) in corpora) <= 500
    assert elapsed < 10.0


# -- derived statistics -----------------------------------------------------------------------


def _scores(tasks: dict) -> list[TaskScore]:
    return [TaskScore(TaskKind(t), v.get("precision", v["f1"]), v.get("recall", v["f1"]), v["f1"]) for t, v in tasks.items()]


@pytest.mark.criterion("Derived-statistics reproduction")
def test_derived_statistics(published_scores, note):
    single = {m: aggregate_report(_scores(row["tasks"]), label=m) for m, row in published_scores["single_task"].items()}
    worst_avg = worst_drop = worst_avg_drop = 0.0
    for m, row in published_scores["single_task"].items():
        worst_avg = max(worst_avg, abs(single[m].average_f1 - row["average_f1"]))
    for m, row in published_scores["multi_task"].items():
        report = aggregate_report(_scores(row["tasks"]), single[row["baseline"]], label=m, decimals=2)
        worst_avg = max(worst_avg, abs(report.average_f1 - row["average_f1"]))
        for t in TASKS:
            worst_drop = max(worst_drop, abs(report.perf_drop[t] - row["tasks"][t.value]["perf_drop_pct"]))
        worst_avg_drop = max(worst_avg_drop, abs(report.average_f1_drop - row["average_perf_drop_pct"]))
    note(f"max |avg F1 - cell| = {worst_avg:.4f}, max |task drop - cell| = {worst_drop:.4f}, "
         f"max |average drop - cell| = {worst_avg_drop:.4f} (tolerance 0.005)")
    assert worst_avg <= TOL and worst_drop <= TOL and worst_avg_drop <= TOL

    bio = aggregate_report(_scores(published_scores["multi_task"]["BioMistral-7B"]["tasks"]), single["BioMistral-7B"])
    assert bio.average_f1 == pytest.approx(82.10, abs=TOL)
    assert bio.perf_drop[TaskKind.NER] == pytest.approx(5.15, abs=TOL)
    llama = aggregate_report(_scores(published_scores["multi_task"]["Llama2-7B"]["tasks"]), single["Llama-2-7B"])
    assert llama.perf_drop[TaskKind.RE] == pytest.approx(-5.43, abs=TOL)


def test_published_pairing_differs_from_model_names(published_scores):
    """Three multi-task rows only reproduce against a differently named single-task row."""
    single = {m: aggregate_report(_scores(row["tasks"])) for m, row in published_scores["single_task"].items()}
    rotated = []
    for m, row in published_scores["multi_task"].items():
        report = aggregate_report(_scores(row["tasks"]), single[row["same_name"]])
        ok = all(abs(report.perf_drop[t] - row["tasks"][t.value]["perf_drop_pct"]) <= TOL for t in TASKS)
        if not ok:
            rotated.append(m)
    assert sorted(rotated) == ["Llama3-8B", "MedAlpaca-13B", "MedAlpaca-7B"]


def test_average_drop_needs_rounded_averages(published_scores):
    """Without rounding the averages first, three average-drop cells miss by more than 0.005."""
    single = {m: aggregate_report(_scores(row["tasks"])) for m, row in published_scores["single_task"].items()}
    misses = []
    for m, row in published_scores["multi_task"].items():
        report = aggregate_report(_scores(row["tasks"]), single[row["baseline"]])
        if abs(report.average_f1_drop - row["average_perf_drop_pct"]) > TOL:
            misses.append(m)
    assert sorted(misses) == ["Llama2-7B", "MedAlpaca-7B", "PMC-Llama-7B"]


# -- retrieval invariants ---------------------------------------------------------------------


def _retrieval_blend() -> list[Record]:
    corpora = []
    for task in TASKS:
        records = generate_task(task, seed=99, sizes={"train": 230, "dev": 0, "test": 0})["train"]
        # Same sentence under a new id: exercises the same-sentence exclusion.
        dupes = [r.with_id(f"{r.id}-dup") for r in records[:20]]
        corpora.append(Corpus(task, "train", tuple(records + dupes), ""))
    return list(blend(corpora, seed=3).records)


@pytest.mark.criterion("Retrieval invariants")
def test_retrieval_invariants(note):
    start = time.perf_counter()
    records = _retrieval_blend()
    assert len(records) == 1000
    index = build_index(records, EmbedderSpec())
    retriever = Retriever(index)
    qvecs = retriever.embed_queries(records)
    key_vecs = {e.record_id: index.vectors[i] for i, e in enumerate(index.entries)}
    sentence = {r.id: normalize_text(record_sentence(r)) for r in records}
    task_of = {r.id: r.task for r in records}

    violations = impure = argmax_mismatch = 0
    for q, v in zip(records, qvecs):
        for phase in ("train", "test"):
            (hit, sim), = retriever.retrieve(q, RetrievalMode(phase=phase), v)
            impure += task_of[hit] is not q.task
            if phase == "train":
                violations += hit == q.id or sentence[hit] == sentence[q.id]
            # brute force: scan every admissible candidate, highest cosine then lowest id
            best = None
            for cand in records:
                if cand.task is not q.task:
                    continue
                if phase == "train" and (cand.id == q.id or sentence[cand.id] == sentence[q.id]):
                    continue
                s = cosine(key_vecs[cand.id], v)
                if best is None or s > best[0] + 1e-12 or (abs(s - best[0]) <= 1e-12 and cand.id < best[1]):
                    best = (s, cand.id)
            argmax_mismatch += best[1] != hit

    rand = RetrievalMode(phase="train", baseline="random", seed=17)
    first = [Retriever(index).retrieve(q, rand) for q in records[:200]]
    second = [Retriever(index).retrieve(q, rand) for q in records[:200]]
    elapsed = time.perf_counter() - start
    note(f"1000 queries x 2 phases: {violations} exclusion violations, {impure} cross-task hits, "
         f"{argmax_mismatch} argmax mismatches, {elapsed:.1f}s")
    assert violations == impure == argmax_mismatch == 0
    assert first == second
    assert all(task_of[h[0][0]] is q.task and h[0][0] != q.id for q, h in zip(records, first))
    assert elapsed < 30.0


# -- round trip -------------------------------------------------------------------------------


@pytest.mark.criterion("Round-trip closure")
def test_round_trip_closure(fixture_config, note):
    records = _fixture_records(fixture_config)
    failures = [r.id for r in records if parse_generation(r.task, serialize_gold(r.gold)).value != r.gold]
    note(f"{len(records)} gold outputs, {len(failures)} failures")
    assert {r.task for r in records} == set(TASKS)
    assert failures == []


# -- end to end -------------------------------------------------------------------------------


def _cli_scores(config: Path, out: Path, *extra: str) -> dict:
    assert main(["run", str(config), "--output-dir", str(out), *extra]) == 0
    return json.loads((out / "scores.json").read_text(encoding="utf-8"))


@pytest.mark.criterion("End-to-end oracle run")
def test_end_to_end_oracle_and_copy(fixture_config, tmp_path, note):
    oracle = _cli_scores(fixture_config, tmp_path / "oracle", "--endpoint-kind", "mock-oracle")
    for t in TASKS:
        s = oracle["tasks"][t.value]
        assert s["precision"] == s["recall"] == s["f1"] == 1.0
    copy = _cli_scores(fixture_config, tmp_path / "copy", "--endpoint-kind", "mock-copy", "--retrieval-phase", "train")
    f1 = {t: round(v["f1"], 4) for t, v in copy["tasks"].items()}
    note(f"oracle: all F1 = 1.0; copy (train-mode retrieval) F1 = {f1}")
    assert any(v["f1"] < 1.0 for v in copy["tasks"].values())


# -- single label identity --------------------------------------------------------------------


@pytest.mark.criterion("Single-label identity")
def test_single_label_identity(fixture_config, tmp_path, note):
    rng = random.Random(5)
    runs = 0
    for task in (TaskKind.RE, TaskKind.UC):
        for _ in range(200):
            records, preds = _random_corpus(task, rng)
            m = score_task(records, preds)
            assert m.precision == m.recall == m.f1
            runs += 1
    copy = _cli_scores(fixture_config, tmp_path / "copy", "--endpoint-kind", "mock-copy", "--retrieval-phase", "train")
    for t in ("RE", "UC"):
        s = copy["tasks"][t]
        assert s["precision"] == s["recall"] == s["f1"]
        runs += 1
    note(f"{runs} RE/UC scoring runs with P = R = F1 exactly")


# -- embedding sanity -------------------------------------------------------------------------


def _exact_cosine(a: str, b: str) -> float:
    def feats(text):
        norm = " ".join(text.lower().split())
        c = Counter("w" + w for w in re.findall(r"\w+", norm))
        c.update("c" + norm[i : i + 3] for i in range(len(norm) - 2))
        return c

    fa, fb = feats(a), feats(b)
    dot = sum(v * fb[k] for k, v in fa.items())
    return dot / math.sqrt(sum(v * v for v in fa.values()) * sum(v * v for v in fb.values()))


def _sentence_pairs(records: list[Record], n: int, seed: int) -> list[tuple[str, str]]:
    rng = random.Random(seed)
    sentences = sorted({r.text for r in records})
    vocab = sorted({w for s in sentences for w in s.split()})
    pairs = []
    for i in range(n):
        if i % 2:
            pairs.append(tuple(rng.sample(sentences, 2)))
        else:
            pairs.append(tuple(" ".join(rng.choices(vocab, k=rng.randint(4, 16))) for _ in range(2)))
    return pairs


def _pair_errors(fixture_config) -> np.ndarray:
    emb = HashedLexicalEmbedder(2048)
    pairs = _sentence_pairs(_fixture_records(fixture_config), 2000, seed=11)
    return np.array([abs(cosine(emb.embed(a), emb.embed(b)) - _exact_cosine(a, b)) for a, b in pairs])


@pytest.mark.criterion("Embedding sanity")
def test_embedding_sanity(fixture_config, note):
    records = _fixture_records(fixture_config)
    emb = HashedLexicalEmbedder(2048)
    texts = {r.text for r in records} | {record_sentence(r) for r in records}
    self_dev = max(abs(cosine(v, v) - 1.0) for v in (emb.embed(t) for t in texts if normalize_text(t)))
    errors = _pair_errors(fixture_config)
    within = float(np.mean(errors <= 0.05))
    note(f"self-cosine max deviation {self_dev:.1e} over {len(texts)} texts")
    note(f"{len(errors)} pairs: {within:.1%} within 0.05, rms {np.sqrt(np.mean(errors ** 2)):.4f}, max {errors.max():.4f}")
    assert self_dev <= 1e-9
    assert len(errors) >= 1000
    assert within >= 0.95


@pytest.mark.xfail(strict=True, reason="signed hashing at dim 2048 has collision noise sd ~0.022; a few percent of pairs exceed 0.05")
def test_embedding_every_pair_within_bound(fixture_config):
    assert _pair_errors(fixture_config).max() <= 0.05


# -- determinism ------------------------------------------------------------------------------


@pytest.mark.criterion("Determinism")
def test_determinism(fixture_config, tmp_path, note):
    for name in ("a", "b"):
        assert main(["run", str(fixture_config), "--output-dir", str(tmp_path / name)]) == 0
    a, b = tmp_path / "a", tmp_path / "b"
    names = sorted(p.name for p in a.iterdir() if p.name != "manifest.jsonl")
    differing = [n for n in names if (a / n).read_bytes() != (b / n).read_bytes()]

    def hashes(d):
        rows = [json.loads(line) for line in (d / "manifest.jsonl").read_text().splitlines()]
        return [(r["stage"], r["content_hash"], r["inputs"], r["config_hash"], r["seed"]) for r in rows]

    note(f"{len(names)} artifacts compared, {len(differing)} differ; manifest hashes equal: {hashes(a) == hashes(b)}")
    assert {"prompts.jsonl", "predictions.jsonl", "report.txt", "scores.json"} <= set(names)
    assert differing == []
    assert hashes(a) == hashes(b)
