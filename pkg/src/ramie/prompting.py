"""Prompt rendering and the response grammar models are trained to emit.

A prompt has three parts: the task instruction, zero or more retrieved examples
(sentence plus serialized response), and the input sentence followed by an empty
``Response:`` cue.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

from .errors import ConfigError, TaskMismatch
from .model import TASKS, GoldOutput, Record, TaskKind

TEMPLATE_VERSION = "v1"
EXAMPLE_HEADER = "Example:"
INPUT_HEADER = "Input:"
RESPONSE_CUE = "Response:"

TE_KEYS = ("head entity", "relation", "tail entity")


def quote(text: str) -> str:
    return "'" + text.replace("\\", "\\\\").replace("'", "\\'") + "'"


def serialize_gold(gold: GoldOutput) -> str:
    """Render a gold output in the bracketed-list response format."""
    task = gold.task
    if task is TaskKind.NER:
        parts = [f"{{{quote(m.surface)}: {quote(m.etype)}}}" for m in gold.value]
    elif task is TaskKind.TE:
        parts = [
            "{"
            + ", ".join(f"{quote(k)}: {quote(v)}" for k, v in zip(TE_KEYS, (t.head, t.relation, t.tail)))
            + "}"
            for t in gold.value
        ]
    else:
        parts = [quote(gold.value)]
    return "[" + ", ".join(parts) + "]"


def relation_question(head: str, tail: str) -> str:
    return f"The relationship between {head} and {tail} is?"


def record_sentence(record: Record, with_question: bool = True) -> str:
    """The sentence as the model sees it; RE records get the head/tail question appended.

    Whitespace runs are collapsed so a sentence never spans lines inside a prompt.
    """
    text = " ".join(record.text.split())
    if record.task is TaskKind.RE and with_question:
        return f"{text} {relation_question(record.re_head, record.re_tail)}"
    return text


@dataclass(frozen=True)
class PromptTemplate:
    task: TaskKind
    instruction_text: str
    example_slot: str = EXAMPLE_HEADER
    input_slot: str = INPUT_HEADER


def load_templates(template_dir: str | Path | None = None) -> dict[TaskKind, PromptTemplate]:
    """Read one ``<TASK>.txt`` instruction file per task.

    Without *template_dir* the packaged templates of ``TEMPLATE_VERSION`` are used.
    """
    templates = {}
    for task in TASKS:
        name = f"{task.value}.txt"
        if template_dir is None:
            text = resources.files(__package__).joinpath("templates").joinpath(TEMPLATE_VERSION).joinpath(name).read_text("utf-8")
        else:
            path = Path(template_dir) / name
            try:
                text = path.read_text(encoding="utf-8")
            except OSError as exc:
                raise ConfigError(f"template {path}: {exc.strerror or exc}") from exc
        templates[task] = PromptTemplate(task, text.strip())
    return templates


@dataclass(frozen=True)
class Prompt:
    record_id: str
    task: TaskKind
    rendered_text: str
    example_ids: tuple[str, ...] = ()

    @property
    def example_id(self) -> str | None:
        return self.example_ids[0] if self.example_ids else None

    @property
    def fingerprint(self) -> str:
        return prompt_hash(self.rendered_text)

    def to_json(self) -> dict:
        obj = {"id": self.record_id, "task": self.task.value, "example_id": self.example_id, "prompt": self.rendered_text}
        if len(self.example_ids) > 1:
            obj["example_ids"] = list(self.example_ids)
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> Prompt:
        ids = obj.get("example_ids")
        if ids is None:
            ids = [obj["example_id"]] if obj.get("example_id") else []
        return cls(obj["id"], TaskKind.parse(obj["task"]), obj["prompt"], tuple(ids))


def prompt_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def build_prompt(
    template: PromptTemplate,
    example: Record | Sequence[Record] | None,
    input: Record,
    *,
    with_question: bool = True,
) -> Prompt:
    if template.task is not input.task:
        raise TaskMismatch(f"{template.task} template used for a {input.task} record")
    if example is None:
        examples: Sequence[Record] = ()
    elif isinstance(example, Record):
        examples = (example,)
    else:
        examples = tuple(example)
    blocks = [template.instruction_text]
    for ex in examples:
        if ex.task is not input.task:
            raise TaskMismatch(f"example {ex.id!r} is {ex.task}, input {input.id!r} is {input.task}")
        blocks.append(
            f"{template.example_slot}\n{record_sentence(ex, with_question)}\n{RESPONSE_CUE} {serialize_gold(ex.gold)}"
        )
    blocks.append(f"{template.input_slot}\n{record_sentence(input, with_question)}\n{RESPONSE_CUE}")
    return Prompt(input.id, input.task, "\n\n".join(blocks), tuple(ex.id for ex in examples))


def example_responses(rendered_text: str) -> list[str]:
    """Responses of the example blocks embedded in a rendered prompt, in order."""
    out = []
    for block in rendered_text.split("\n\n"):
        if not block.startswith(EXAMPLE_HEADER + "\n"):
            continue
        last = block.rsplit("\n", 1)[-1]
        if last.startswith(RESPONSE_CUE + " "):
            out.append(last[len(RESPONSE_CUE) + 1 :])
    return out
