"""Turn raw model generations into structured predictions.

The accepted grammar is the bracketed-list response format::

    response := '[' [item (',' item)*] ']'
    item     := string | '{' string ':' string (',' string ':' string)* '}'

Parsing runs through three leniency tiers, each a superset of the previous one:

``strict``
    the whole generation is one list, single-quoted strings, no trailing commas.
``quotes``
    double-quoted strings and trailing commas are also accepted.
``prose``
    text around the answer is discarded; among the top-level bracketed spans the
    last one that parses is used (``pick="first"`` flips this).

A prediction parsed at the strict tier is ``ok``; one that needed a later tier is
``recovered`` with a reason code; anything else is ``malformed``. Parsing never raises.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal

from .dataset import gold_from_json, gold_to_json
from .errors import LabelError, SchemaError
from .model import EntityMention, GoldOutput, TaskKind, Triple, normalize_text

log = logging.getLogger(__name__)

Leniency = Literal["strict", "quotes", "prose"]
LENIENCY_TIERS: tuple[str, ...] = ("strict", "quotes", "prose")

OK = "ok"
RECOVERED = "recovered"
MALFORMED = "malformed"

# Bound on restarts when scanning for bracketed spans; keeps garbage input linear-ish.
_MAX_SPAN_RESTARTS = 64


class _Fail(Exception):
    def __init__(self, reason: str):
        self.reason = reason


@dataclass(frozen=True)
class ParsePolicy:
    leniency: Leniency = "prose"
    pick: Literal["last", "first"] = "last"

    def __post_init__(self) -> None:
        if self.leniency not in LENIENCY_TIERS:
            raise ValueError(f"unknown leniency {self.leniency!r}")
        if self.pick not in ("last", "first"):
            raise ValueError(f"unknown pick {self.pick!r}")


@dataclass(frozen=True)
class Prediction:
    record_id: str
    task: TaskKind
    value: GoldOutput | None
    parse_status: str
    reason: str | None = None

    @property
    def malformed(self) -> bool:
        return self.parse_status == MALFORMED

    def to_json(self) -> dict:
        obj = {
            "id": self.record_id,
            "task": self.task.value,
            "value": None if self.value is None else gold_to_json(self.value),
            "parse_status": self.parse_status,
        }
        if self.reason is not None:
            obj["leniency_reason"] = self.reason
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> Prediction:
        task = TaskKind.parse(obj["task"])
        value = obj.get("value")
        gold = None if value is None else gold_from_json(value, task)
        return cls(obj["id"], task, gold, obj["parse_status"], obj.get("leniency_reason"))


# -- tokenizer and grammar ------------------------------------------------------------------


class _Reader:
    def __init__(self, text: str, tolerant: bool):
        self.text = text
        self.pos = 0
        self.tolerant = tolerant
        self.used: set[str] = set()

    def _skip_ws(self) -> None:
        text, n = self.text, len(self.text)
        while self.pos < n and text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self._skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch: str) -> None:
        if self.peek() != ch:
            raise _Fail("syntax")
        self.pos += 1

    def string(self) -> str:
        q = self.peek()
        if q == '"':
            if not self.tolerant:
                raise _Fail("syntax")
            self.used.add("double_quotes")
        elif q != "'":
            raise _Fail("syntax")
        text, n = self.text, len(self.text)
        i = self.pos + 1
        out = []
        while i < n:
            c = text[i]
            if c == "\\" and i + 1 < n:
                out.append(text[i + 1])
                i += 2
                continue
            if c == q:
                self.pos = i + 1
                return "".join(out)
            out.append(c)
            i += 1
        raise _Fail("syntax")

    def _sequence(self, close: str, item):
        out = []
        if self.peek() == close:
            self.pos += 1
            return out
        while True:
            out.append(item())
            nxt = self.peek()
            if nxt == close:
                self.pos += 1
                return out
            if nxt != ",":
                raise _Fail("syntax")
            self.pos += 1
            if self.peek() == close:
                if not self.tolerant:
                    raise _Fail("syntax")
                self.used.add("trailing_comma")
                self.pos += 1
                return out

    def pair(self) -> tuple[str, str]:
        key = self.string()
        self.expect(":")
        return key, self.string()

    def item(self):
        if self.peek() == "{":
            self.pos += 1
            return self._sequence("}", self.pair)
        return self.string()

    def response(self) -> list:
        self.expect("[")
        items = self._sequence("]", self.item)
        if self.peek() != "":
            raise _Fail("syntax")
        return items


def _parse_list(text: str, tolerant: bool) -> tuple[list, set[str]]:
    reader = _Reader(text, tolerant)
    items = reader.response()
    return items, reader.used


def _match_bracket(text: str, start: int) -> int:
    """Index one past the bracket closing ``text[start]``, or -1."""
    stack = []
    closers = {"[": "]", "{": "}"}
    i, n = start, len(text)
    while i < n:
        c = text[i]
        if c in closers:
            stack.append(closers[c])
        elif c in "]}":
            if not stack or stack.pop() != c:
                return -1
            if not stack:
                return i + 1
        elif c in "'\"":
            j = i + 1
            while j < n and text[j] != c:
                j += 2 if text[j] == "\\" else 1
            if j >= n:
                return -1
            i = j
        i += 1
    return -1


def bracket_spans(text: str) -> list[tuple[int, int]]:
    """Top-level balanced ``[...]`` spans, quote-aware inside brackets."""
    spans = []
    i = restarts = 0
    while True:
        j = text.find("[", i)
        if j < 0:
            break
        end = _match_bracket(text, j)
        if end < 0:
            restarts += 1
            if restarts > _MAX_SPAN_RESTARTS:
                break
            i = j + 1
        else:
            spans.append((j, end))
            i = end
    return spans


# -- task interpretation --------------------------------------------------------------------


def _to_value(task: TaskKind, items: list) -> GoldOutput:
    try:
        if task is TaskKind.NER:
            mentions = []
            for item in items:
                if not isinstance(item, list) or len(item) != 1:
                    raise _Fail("bad_item")
                (surface, etype), = item
                mentions.append(EntityMention(surface, etype))
            return GoldOutput.ner(mentions)
        if task is TaskKind.TE:
            triples = []
            for item in items:
                if not isinstance(item, list):
                    raise _Fail("bad_item")
                fields = {normalize_text(k): v for k, v in item}
                if len(item) != 3 or set(fields) != {"head entity", "relation", "tail entity"}:
                    raise _Fail("bad_item")
                triples.append(Triple(fields["head entity"], fields["relation"], fields["tail entity"]))
            return GoldOutput.te(triples)
        if len(items) != 1:
            raise _Fail("item_count")
        if not isinstance(items[0], str):
            raise _Fail("bad_item")
        return GoldOutput(task, items[0])
    except LabelError:
        raise _Fail("unknown_label") from None
    except SchemaError:
        raise _Fail("empty_surface") from None


def _attempt(task: TaskKind, text: str, tolerant: bool) -> tuple[GoldOutput, set[str]]:
    items, used = _parse_list(text, tolerant)
    return _to_value(task, items), used


def parse_generation(
    task: TaskKind | str,
    raw: str,
    policy: ParsePolicy | None = None,
    *,
    record_id: str = "",
) -> Prediction:
    task = TaskKind.parse(task)
    policy = policy or ParsePolicy()
    tier = LENIENCY_TIERS.index(policy.leniency)

    def malformed(reason: str) -> Prediction:
        return Prediction(record_id, task, None, MALFORMED, reason)

    if not isinstance(raw, str):
        return malformed("not_text")
    text = raw.strip()

    # Label/shape failures on a syntactically complete answer are final: leniency only
    # concerns how the answer is written, never what it says.
    try:
        value, _ = _attempt(task, text, tolerant=False)
        return Prediction(record_id, task, value, OK)
    except _Fail as exc:
        if exc.reason != "syntax":
            return malformed(exc.reason)
    if tier == 0:
        return malformed("syntax")

    try:
        value, used = _attempt(task, text, tolerant=True)
        return Prediction(record_id, task, value, RECOVERED, "+".join(sorted(used)) or "quotes")
    except _Fail as exc:
        if exc.reason != "syntax":
            return malformed(exc.reason)
    if tier == 1:
        return malformed("syntax")

    spans = bracket_spans(text)
    if policy.pick == "last":
        spans.reverse()
    for start, end in spans:
        try:
            items, used = _parse_list(text[start:end], tolerant=True)
        except _Fail:
            continue
        try:
            value = _to_value(task, items)
        except _Fail as exc:
            return malformed(exc.reason)
        return Prediction(record_id, task, value, RECOVERED, "+".join(["prose", *sorted(used)]))
    return malformed("syntax" if spans or "[" in text else "no_answer")
