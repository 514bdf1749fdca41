import pytest
from hypothesis import given
from hypothesis import strategies as st

from ramie.errors import AlignmentError, MissingTask
from ramie.evaluation import (
    RunReport,
    TaskScore,
    aggregate_report,
    classify_errors,
    load_report,
    prf,
    record_error_tags,
    relative_drop,
    render_table,
    round_half_up,
    score_task,
)
from ramie.model import TASKS, GoldOutput, TaskKind
from ramie.parsing import MALFORMED, OK, Prediction

from strategies import gold_outputs, make_record


def _pred(rid, value):
    if value is None:
        return Prediction(rid, TaskKind.NER, None, MALFORMED, "syntax")
    return Prediction(rid, value.task, value, OK)


def _ner(*pairs):
    return GoldOutput.ner(pairs)


def test_partial_ner_record():
    gold = [make_record("1", _ner(("a", "event"), ("b", "event"), ("c", "event")))]
    m = score_task(gold, [_pred("1", _ner(("a", "event"), ("b", "event")))])
    assert (m.tp, m.fp, m.fn) == (2, 0, 1)
    assert (m.precision, m.recall, m.f1) == (1.0, pytest.approx(2 / 3), pytest.approx(0.8))


def test_duplicates_count_as_multiset():
    gold = [make_record("1", _ner(("a", "event"), ("a", "event")))]
    m = score_task(gold, [_pred("1", _ner(("a", "event"), ("a", "event"), ("a", "event")))])
    assert (m.tp, m.fp, m.fn) == (2, 1, 0)


def test_perfect_and_malformed():
    gold = [make_record(str(i), _ner(("x", "ginger"))) for i in range(3)]
    perfect = score_task(gold, [_pred(r.id, r.gold) for r in gold])
    assert (perfect.precision, perfect.recall, perfect.f1, perfect.strict_accuracy) == (1.0, 1.0, 1.0, 1.0)
    preds = [_pred("0", gold[0].gold), _pred("1", None), _pred("2", _ner())]
    m = score_task(gold, preds)
    assert (m.tp, m.fp, m.fn, m.n_malformed) == (1, 0, 2, 1)


def test_empty_task_scores_one():
    gold = [make_record("1", _ner())]
    m = score_task(gold, [_pred("1", _ner())])
    assert (m.precision, m.recall, m.f1) == (1.0, 1.0, 1.0)


def test_single_label_identity_bert_row():
    # 92.88% accuracy over 1000 RE records
    gold = [make_record(str(i), GoldOutput.re("positive")) for i in range(1000)]
    preds = [_pred(str(i), GoldOutput.re("positive" if i < 928.8 else "negative")) for i in range(1000)]
    m = score_task(gold, preds)
    assert m.precision == m.recall == m.f1 == 929 / 1000


@given(st.sampled_from([TaskKind.RE, TaskKind.UC]).flatmap(lambda t: st.lists(st.tuples(gold_outputs(t), gold_outputs(t), st.booleans()), min_size=1, max_size=30)))
def test_single_label_identity_property(rows):
    gold = [make_record(str(i), g) for i, (g, _, _) in enumerate(rows)]
    preds = [
        Prediction(str(i), p.task, None, MALFORMED, "syntax") if bad else _pred(str(i), p)
        for i, (_, p, bad) in enumerate(rows)
    ]
    m = score_task(gold, preds)
    assert m.precision == m.recall == m.f1


def test_alignment_errors():
    gold = [make_record("1", _ner())]
    with pytest.raises(AlignmentError):
        score_task(gold, [])
    with pytest.raises(AlignmentError):
        score_task(gold, [_pred("1", _ner()), _pred("1", _ner())])
    with pytest.raises(AlignmentError):
        score_task(gold, [_pred("1", GoldOutput.uc("start"))])


def test_prf():
    assert prf(0, 0, 5) == (0.0, 0.0, 0.0)
    assert prf(1, 1, 1) == (0.5, 0.5, 0.5)


# -- error taxonomy ---------------------------------------------------------------------------


def _tags(gold, pred):
    return record_error_tags(make_record("1", gold), _pred("1", pred))


def test_adjective_is_redundant():
    assert _tags(_ner(("motion sickness", "event")), _ner(("mild motion sickness", "event"))) == ("redundant",)


def test_three_of_four_is_omission():
    four = [("a", "event"), ("b", "event"), ("c", "ginger"), ("d", "garlic")]
    assert _tags(_ner(*four), _ner(*four[:3])) == ("omission",)


def test_wrong_relation_is_incorrect():
    assert _tags(GoldOutput.re("negative"), GoldOutput.re("positive")) == ("incorrect",)
    gold = GoldOutput.te([("ginseng tea", "negative", "constipation")])
    pred = GoldOutput.te([("ginseng tea", "positive", "constipation")])
    assert _tags(gold, pred) == ("incorrect",)


def test_extra_item_after_full_match_is_redundant():
    assert _tags(_ner(("a", "event")), _ner(("a", "event"), ("zzz", "event"))) == ("redundant",)


def test_malformed_and_perfect_tags():
    rec = make_record("1", _ner(("a", "event")))
    assert record_error_tags(rec, Prediction("1", TaskKind.NER, None, MALFORMED, "syntax")) == ("malformed",)
    assert _tags(_ner(("a", "event")), _ner(("a", "event"))) == ()


def test_classify_counts_records():
    gold = [make_record(str(i), GoldOutput.uc("start")) for i in range(4)]
    preds = [_pred("0", GoldOutput.uc("start")), _pred("1", GoldOutput.uc("continue")), _pred("2", GoldOutput.uc("continue"))]
    preds.append(Prediction("3", TaskKind.UC, None, MALFORMED, "syntax"))
    errors = classify_errors(gold, preds)
    assert errors.counts == {"redundant": 0, "omission": 0, "incorrect": 2, "malformed": 1}
    assert errors.tags == {"1": ("incorrect",), "2": ("incorrect",), "3": ("malformed",)}


# -- report -----------------------------------------------------------------------------------


def _scores(f1s):
    return [TaskScore(t, f, f, f) for t, f in zip(TASKS, f1s)]


def test_average_and_drops_biomistral():
    single = aggregate_report(_scores((85.95, 93.09, 71.59, 90.79)), label="single")
    multi = aggregate_report(_scores((81.52, 92.22, 68.61, 86.03)), single, label="multi")
    assert multi.average_f1 == pytest.approx(82.10, abs=0.005)
    assert multi.perf_drop[TaskKind.NER] == pytest.approx(5.15, abs=0.005)
    assert multi.mean_task_drop != pytest.approx(multi.average_f1_drop, abs=0.01)


def test_negative_drop_is_improvement():
    assert relative_drop(83.37, 87.90) == pytest.approx(-5.43, abs=0.005)
    assert relative_drop(0.0, 1.0) is None


def test_round_half_up():
    assert round_half_up(82.095, 2) == 82.10
    assert round_half_up(2.675, 2) == 2.68
    assert round_half_up(-1.005, 2) == -1.01


def test_aggregate_needs_all_tasks():
    with pytest.raises(MissingTask):
        aggregate_report(_scores((1, 2, 3)))


def test_report_json_and_table(tmp_path):
    single = aggregate_report(_scores((0.8595, 0.9309, 0.7159, 0.9079)), label="single")
    gold = [make_record("1", GoldOutput.uc("start"))]
    errors = {t: classify_errors(gold, [_pred("1", GoldOutput.uc("continue"))]) for t in TASKS}
    multi = aggregate_report(_scores((0.8152, 0.9222, 0.6861, 0.8603)), single, label="multi", errors=errors)
    path = multi.save(tmp_path / "r.json")
    back = load_report(path)
    assert back.to_json() == multi.to_json()
    table = render_table(back)
    assert "Perf. Drop" in table and "5.15%" in table and "82.10" in table
    assert "incorrect" in table
    assert "Perf. Drop" not in render_table(RunReport.from_json(single.to_json()))
