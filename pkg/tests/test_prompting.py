import re

import pytest
from hypothesis import given

from ramie.errors import TaskMismatch
from ramie.model import ENTITY_TYPES, RELATION_TYPES, TASKS, USAGE_STATUSES, GoldOutput, Record, TaskKind
from ramie.prompting import (
    EXAMPLE_HEADER,
    INPUT_HEADER,
    Prompt,
    build_prompt,
    example_responses,
    load_templates,
    serialize_gold,
)

from strategies import any_gold, make_record


@pytest.fixture(scope="module")
def templates():
    return load_templates()


def test_serialize_single_labels_and_empty():
    assert serialize_gold(GoldOutput.uc("continue")) == "['continue']"
    assert serialize_gold(GoldOutput.re("negative")) == "['negative']"
    assert serialize_gold(GoldOutput.ner([])) == "[]"


def test_serialize_structured_outputs():
    ner = GoldOutput.ner([("ginger", "ginger"), ("mild nausea", "event")])
    assert serialize_gold(ner) == "[{'ginger': 'ginger'}, {'mild nausea': 'event'}]"
    te = GoldOutput.te([("st. john's wort", "negative", "insomnia")])
    assert serialize_gold(te) == (
        "[{'head entity': 'st. john\\'s wort', 'relation': 'negative', 'tail entity': 'insomnia'}]"
    )


@given(any_gold)
def test_serialized_gold_is_single_line(gold):
    text = serialize_gold(gold)
    assert text.startswith("[") and text.endswith("]")
    assert "\n" not in text


@pytest.mark.parametrize(
    "task, labels",
    [(TaskKind.NER, ENTITY_TYPES), (TaskKind.RE, RELATION_TYPES), (TaskKind.TE, RELATION_TYPES), (TaskKind.UC, USAGE_STATUSES)],
)
def test_templates_enumerate_each_label_once(templates, task, labels):
    text = templates[task].instruction_text
    for label in labels:
        assert len(re.findall(re.escape(f"'{label}'"), text)) == 1, label


def test_uc_prompt_with_example(templates):
    example = Record("uc-2", TaskKind.UC, "note stop b6 b12 folic acid today", GoldOutput.uc("discontinue"))
    query = Record("uc-1", TaskKind.UC, "continue Vitamin E selenium discharge", GoldOutput.uc("continue"))
    prompt = build_prompt(templates[TaskKind.UC], example, query)
    blocks = prompt.rendered_text.split("\n\n")
    assert blocks[0] == templates[TaskKind.UC].instruction_text
    assert blocks[1] == f"{EXAMPLE_HEADER}\nnote stop b6 b12 folic acid today\nResponse: ['discontinue']"
    assert blocks[2] == f"{INPUT_HEADER}\ncontinue Vitamin E selenium discharge\nResponse:"
    assert prompt.example_id == "uc-2"
    # the query's own gold never leaks into its prompt
    assert "['continue']" not in prompt.rendered_text


def test_re_prompt_asks_about_head_and_tail(templates):
    rec = Record(
        "re-1",
        TaskKind.RE,
        "she has tried melatonin but it is increased the morning dizziness .",
        GoldOutput.re("negative"),
        re_head="melatonin",
        re_tail="dizziness",
    )
    prompt = build_prompt(templates[TaskKind.RE], None, rec)
    input_block = prompt.rendered_text.split("\n\n")[-1]
    sentence = input_block.splitlines()[1]
    assert sentence.lower().endswith("the relationship between melatonin and dizziness is?")


def test_prompt_without_example_has_two_blocks(templates):
    rec = make_record("n1", GoldOutput.ner([]))
    prompt = build_prompt(templates[TaskKind.NER], None, rec)
    assert len(prompt.rendered_text.split("\n\n")) == 2
    assert prompt.example_ids == () and example_responses(prompt.rendered_text) == []


def test_task_mismatch(templates):
    rec = make_record("u", GoldOutput.uc("start"))
    with pytest.raises(TaskMismatch):
        build_prompt(templates[TaskKind.NER], None, rec)
    with pytest.raises(TaskMismatch):
        build_prompt(templates[TaskKind.UC], make_record("r", GoldOutput.re("positive")), rec)


@given(any_gold)
def test_example_response_recovered_verbatim(gold):
    templates = load_templates()
    example = make_record("ex", gold, "multi\nline   sentence")
    query = make_record("q", gold, "query")
    prompt = build_prompt(templates[gold.task], example, query)
    assert example_responses(prompt.rendered_text) == [serialize_gold(gold)]
    assert Prompt.from_json(prompt.to_json()) == prompt


def test_custom_template_dir(tmp_path):
    for task in TASKS:
        (tmp_path / f"{task.value}.txt").write_text(f"Do {task.value}.\n", encoding="utf-8")
    loaded = load_templates(tmp_path)
    assert loaded[TaskKind.TE].instruction_text == "Do TE."
