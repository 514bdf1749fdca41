"""Task taxonomy, closed label vocabularies and the value types shared across the pipeline."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Union

from .errors import SchemaError, UnknownLabel


class TaskKind(str, enum.Enum):
    NER = "NER"
    RE = "RE"
    TE = "TE"
    UC = "UC"

    @classmethod
    def parse(cls, name: str | TaskKind) -> TaskKind:
        if isinstance(name, TaskKind):
            return name
        try:
            return cls(str(name).strip().upper())
        except ValueError:
            raise UnknownLabel(f"unknown task {name!r}") from None

    def __str__(self) -> str:
        return self.value


TASKS: tuple[TaskKind, ...] = (TaskKind.NER, TaskKind.RE, TaskKind.TE, TaskKind.UC)

# Order follows the instruction text shown to the model.
ENTITY_TYPES: tuple[str, ...] = (
    "event",
    "folic acid",
    "milk thistle",
    "ginger",
    "chamomile",
    "garlic",
    "black cohosh",
    "ginkgo",
    "lavender",
    "melatonin",
    "cranberry",
    "ginseng",
    "glucosamine",
    "dandelion",
    "saw palmetto",
    "green tea",
)
RELATION_TYPES: tuple[str, ...] = ("negative", "not_related", "positive")
USAGE_STATUSES: tuple[str, ...] = ("continue", "discontinue", "uncertain", "start")

LABELS: dict[TaskKind, tuple[str, ...]] = {
    TaskKind.NER: ENTITY_TYPES,
    TaskKind.RE: RELATION_TYPES,
    TaskKind.TE: RELATION_TYPES,
    TaskKind.UC: USAGE_STATUSES,
}


def normalize_text(raw: str) -> str:
    """Lowercase, trim, and collapse every whitespace run to a single space."""
    return " ".join(raw.lower().split())


def _label_key(name: str) -> str:
    return normalize_text(name.replace("_", " "))


def _closed_set_parser(kind: str, members: tuple[str, ...]):
    lookup = {_label_key(m): m for m in members}

    def parse(name: str) -> str:
        if not isinstance(name, str):
            raise UnknownLabel(f"{kind} must be a string, got {type(name).__name__}")
        try:
            return lookup[_label_key(name)]
        except KeyError:
            raise UnknownLabel(f"unknown {kind} {name!r}") from None

    parse.__name__ = f"parse_{kind.replace(' ', '_')}"
    parse.__doc__ = f"Map *name* onto its canonical {kind}; raises UnknownLabel outside the closed set."
    return parse


parse_entity_type = _closed_set_parser("entity type", ENTITY_TYPES)
parse_relation = _closed_set_parser("relation", RELATION_TYPES)
parse_usage = _closed_set_parser("usage status", USAGE_STATUSES)


def _surface(raw: str, what: str) -> str:
    if not isinstance(raw, str):
        raise SchemaError(f"{what} must be a string", field=what)
    text = normalize_text(raw)
    if not text:
        raise SchemaError(f"{what} is empty after normalization", field=what)
    return text


@dataclass(frozen=True, order=True)
class EntityMention:
    surface: str
    etype: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "surface", _surface(self.surface, "surface"))
        object.__setattr__(self, "etype", parse_entity_type(self.etype))


@dataclass(frozen=True, order=True)
class Triple:
    head: str
    relation: str
    tail: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "head", _surface(self.head, "head"))
        object.__setattr__(self, "relation", parse_relation(self.relation))
        object.__setattr__(self, "tail", _surface(self.tail, "tail"))


GoldValue = Union[tuple[EntityMention, ...], tuple[Triple, ...], str]


@dataclass(frozen=True)
class GoldOutput:
    """Task-tagged gold or predicted output.

    NER and TE carry an ordered multiset (tuple) of items; RE and UC carry one label.
    """

    task: TaskKind
    value: GoldValue

    def __post_init__(self) -> None:
        task = TaskKind.parse(self.task)
        object.__setattr__(self, "task", task)
        value = self.value
        if task is TaskKind.NER:
            value = tuple(_coerce(v, EntityMention) for v in value)
        elif task is TaskKind.TE:
            value = tuple(_coerce(v, Triple) for v in value)
        elif task is TaskKind.RE:
            value = parse_relation(value)
        else:
            value = parse_usage(value)
        object.__setattr__(self, "value", value)

    @classmethod
    def ner(cls, mentions) -> GoldOutput:
        return cls(TaskKind.NER, tuple(mentions))

    @classmethod
    def re(cls, relation: str) -> GoldOutput:
        return cls(TaskKind.RE, relation)

    @classmethod
    def te(cls, triples) -> GoldOutput:
        return cls(TaskKind.TE, tuple(triples))

    @classmethod
    def uc(cls, status: str) -> GoldOutput:
        return cls(TaskKind.UC, status)

    @property
    def items(self) -> tuple:
        """Scoring items: the multiset for NER/TE, a one-element tuple for RE/UC."""
        if isinstance(self.value, tuple):
            return self.value
        return (self.value,)


def _coerce(value, cls):
    if isinstance(value, cls):
        return value
    if isinstance(value, (tuple, list)):
        return cls(*value)
    raise SchemaError(f"expected {cls.__name__}, got {type(value).__name__}")


@dataclass(frozen=True)
class Record:
    id: str
    task: TaskKind
    text: str
    gold: GoldOutput
    re_head: str | None = None
    re_tail: str | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.id, str) or not self.id:
            raise SchemaError("record id must be a non-empty string", field="id")
        if not isinstance(self.text, str):
            raise SchemaError("text must be a string", field="text")
        task = TaskKind.parse(self.task)
        object.__setattr__(self, "task", task)
        if self.gold.task is not task:
            raise SchemaError(f"gold is tagged {self.gold.task} but record task is {task}", field="gold")
        if task is TaskKind.RE:
            for name in ("re_head", "re_tail"):
                if getattr(self, name) is None:
                    raise SchemaError("required for RE records", field=name)
                object.__setattr__(self, name, _surface(getattr(self, name), name))
        else:
            for name in ("re_head", "re_tail"):
                if getattr(self, name) is not None:
                    raise SchemaError(f"only allowed on RE records, not {task}", field=name)

    def with_id(self, new_id: str) -> Record:
        return Record(new_id, self.task, self.text, self.gold, self.re_head, self.re_tail)
