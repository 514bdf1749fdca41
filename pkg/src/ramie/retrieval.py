"""Task-restricted nearest-example retrieval over a training split.

Keys embed ``sentence || response``; queries embed the sentence alone. In train
mode the query's own record and any record with the same normalized sentence are
excluded so the model cannot learn to copy the example's answer.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Literal, Sequence

import numpy as np

from .dataset import BlendedCorpus, Corpus, dump_record, record_from_json, record_to_json
from .embedding import EmbedderSpec, make_embedder
from .errors import BuildError, EmptyCandidateSet, StaleIndex
from .model import TASKS, Record, TaskKind, normalize_text
from .prompting import record_sentence, serialize_gold

log = logging.getLogger(__name__)

KEY_SEPARATOR = " || "
INDEX_FORMAT = "ramie-index/1"


@dataclass(frozen=True)
class ExampleKey:
    record_id: str
    task: TaskKind
    sentence: str
    key_text: str


@dataclass(frozen=True)
class RetrievalMode:
    phase: Literal["train", "test"] = "test"
    k: int = 1
    baseline: Literal["similarity", "random"] = "similarity"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.phase not in ("train", "test"):
            raise ValueError(f"unknown retrieval phase {self.phase!r}")
        if self.baseline not in ("similarity", "random"):
            raise ValueError(f"unknown retrieval baseline {self.baseline!r}")
        if self.k < 1:
            raise ValueError("k must be positive")


KeyMode = Literal["sentence+response", "sentence"]


def key_text(record: Record, with_question: bool = True, key_mode: KeyMode = "sentence+response") -> str:
    sentence = record_sentence(record, with_question)
    if key_mode == "sentence":
        return sentence
    if KEY_SEPARATOR in sentence:
        log.warning("record %s contains the key separator %r", record.id, KEY_SEPARATOR)
    return f"{sentence}{KEY_SEPARATOR}{serialize_gold(record.gold)}"


def corpus_fingerprint(records: Iterable[Record]) -> str:
    h = hashlib.sha256()
    for rec in records:
        h.update(dump_record(rec).encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


@dataclass
class _Partition:
    rows: np.ndarray  # positions into ExampleIndex.entries
    matrix: np.ndarray
    ids: np.ndarray
    sentences: np.ndarray


@dataclass
class ExampleIndex:
    embedder: EmbedderSpec
    entries: tuple[ExampleKey, ...]
    vectors: np.ndarray
    records: dict[str, Record]
    fingerprint: str
    with_question: bool = True
    key_mode: KeyMode = "sentence+response"
    _by_task: dict[TaskKind, _Partition] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        self.vectors.setflags(write=False)
        for task in TASKS:
            rows = np.array([i for i, e in enumerate(self.entries) if e.task is task], dtype=np.int64)
            matrix = self.vectors[rows] if len(rows) else np.zeros((0, self.vectors.shape[1]))
            matrix.setflags(write=False)
            ids = np.array([self.entries[i].record_id for i in rows], dtype=str)
            sentences = np.array([self.entries[i].sentence for i in rows], dtype=str)
            self._by_task[task] = _Partition(rows, matrix, ids, sentences)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def partition_size(self, task: TaskKind) -> int:
        return len(self._by_task[task].rows)

    def by_task(self, task: TaskKind) -> list[ExampleKey]:
        return [self.entries[i] for i in self._by_task[task].rows]


def build_index(
    train: BlendedCorpus | Corpus | Sequence[Record],
    embedder: EmbedderSpec,
    *,
    with_question: bool = True,
    key_mode: KeyMode = "sentence+response",
    client=None,
) -> ExampleIndex:
    """Embed one key per training record, in corpus order.

    ``key_mode="sentence"`` drops the response from the key; it exists for
    experiments and diagnostics, the default mirrors the query/key asymmetry.
    """
    if key_mode not in ("sentence+response", "sentence"):
        raise BuildError(f"unknown key mode {key_mode!r}")
    records = list(train.records if isinstance(train, (BlendedCorpus, Corpus)) else train)
    if not records:
        raise BuildError("cannot build an index over an empty corpus")
    entries = tuple(
        ExampleKey(r.id, r.task, normalize_text(record_sentence(r, with_question)), key_text(r, with_question, key_mode))
        for r in records
    )
    if len({e.record_id for e in entries}) != len(entries):
        raise BuildError("record ids must be unique across the indexed corpus")
    vectors = make_embedder(embedder, client).embed_many([e.key_text for e in entries])
    return ExampleIndex(
        embedder,
        entries,
        np.ascontiguousarray(vectors, dtype=np.float64),
        {r.id: r for r in records},
        corpus_fingerprint(records),
        with_question,
        key_mode,
    )


def _similarities(matrix: np.ndarray, query: np.ndarray) -> np.ndarray:
    # Row-wise elementwise sum rather than BLAS gemv so equal rows give bit-equal scores.
    return np.sum(matrix * query, axis=1)


def _query_seed(seed: int, record_id: str) -> int:
    digest = hashlib.sha256(f"{seed}\x00{record_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


class Retriever:
    """Answers queries against one index, caching the query embedder."""

    def __init__(self, index: ExampleIndex, client=None):
        self.index = index
        self._embedder = make_embedder(index.embedder, client)

    def embed_queries(self, queries: Sequence[Record]) -> np.ndarray:
        texts = [record_sentence(q, self.index.with_question) for q in queries]
        return self._embedder.embed_many(texts)

    def retrieve(self, query: Record, mode: RetrievalMode, query_vector: np.ndarray | None = None) -> list[tuple[str, float]]:
        index = self.index
        part = index._by_task[query.task]
        if not len(part.rows):
            raise EmptyCandidateSet(f"index has no {query.task} entries")
        if query_vector is None:
            query_vector = self.embed_queries([query])[0]
        sims = _similarities(part.matrix, query_vector)
        if mode.phase == "train":
            qsent = normalize_text(record_sentence(query, index.with_question))
            keep = (part.ids != query.id) & (part.sentences != qsent)
            candidates = np.flatnonzero(keep)
        else:
            candidates = np.arange(len(part.ids))
        if len(candidates) < mode.k:
            raise EmptyCandidateSet(
                f"{len(candidates)} {query.task} candidates left for {query.id!r}, need k={mode.k}"
            )
        if mode.baseline == "random":
            ordered = candidates[np.argsort(part.ids[candidates], kind="stable")].tolist()
            chosen = random.Random(_query_seed(mode.seed, query.id)).sample(ordered, mode.k)
        else:
            # lexsort: last key is primary -> similarity descending, then id ascending.
            order = np.lexsort((part.ids[candidates], -sims[candidates]))
            chosen = candidates[order[: mode.k]].tolist()
        return [(str(part.ids[j]), float(sims[j])) for j in chosen]

    def retrieve_many(self, queries: Sequence[Record], mode: RetrievalMode) -> list[list[tuple[str, float]]]:
        vectors = self.embed_queries(queries) if queries else []
        return [self.retrieve(q, mode, v) for q, v in zip(queries, vectors)]


def retrieve(index: ExampleIndex, query: Record, mode: RetrievalMode | None = None) -> list[tuple[str, float]]:
    return Retriever(index).retrieve(query, mode or RetrievalMode())


# -- persistence ----------------------------------------------------------------------------


def save_index(index: ExampleIndex, path: str | Path) -> Path:
    """Write the index as JSON with sparse vector rows (exact float repr)."""
    rows = []
    for entry, vec in zip(index.entries, index.vectors):
        nz = np.flatnonzero(vec)
        rows.append(
            {
                "id": entry.record_id,
                "task": entry.task.value,
                "sentence": entry.sentence,
                "key_text": entry.key_text,
                "indices": nz.tolist(),
                "values": vec[nz].tolist(),
            }
        )
    doc = {
        "format": INDEX_FORMAT,
        "embedder": index.embedder.to_json(),
        "dim": index.dim,
        "with_question": index.with_question,
        "key_mode": index.key_mode,
        "fingerprint": index.fingerprint,
        "entries": rows,
        "records": [record_to_json(index.records[e.record_id]) for e in index.entries],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, ensure_ascii=False, separators=(",", ":")) + "\n", encoding="utf-8")
    return path


def load_index(path: str | Path, expected_fingerprint: str | None = None) -> ExampleIndex:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != INDEX_FORMAT:
        raise StaleIndex(f"{path}: unsupported index format {doc.get('format')!r}")
    if expected_fingerprint is not None and doc["fingerprint"] != expected_fingerprint:
        raise StaleIndex(f"{path} was built from a different corpus")
    dim = doc["dim"]
    entries = []
    vectors = np.zeros((len(doc["entries"]), dim), dtype=np.float64)
    for i, row in enumerate(doc["entries"]):
        entries.append(ExampleKey(row["id"], TaskKind.parse(row["task"]), row["sentence"], row["key_text"]))
        vectors[i, row["indices"]] = row["values"]
    records = {}
    for obj in doc["records"]:
        rec = record_from_json(obj)
        records[rec.id] = rec
    return ExampleIndex(
        EmbedderSpec.from_json(doc["embedder"]),
        tuple(entries),
        vectors,
        records,
        doc["fingerprint"],
        doc.get("with_question", True),
        doc.get("key_mode", "sentence+response"),
    )
