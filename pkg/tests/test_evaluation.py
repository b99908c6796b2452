import csv
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dialogic.corpus import INSTRUCTIONS, InstructionType, LabeledSentence
from dialogic.errors import DegenerateLabels
from dialogic.evaluation import (
    EvaluationReport,
    ScoredExample,
    auc,
    auc_pairwise,
    auc_trapezoid,
    evaluate_models,
    render_report,
    roc_curve,
)

SVG = "{http://www.w3.org/2000/svg}"

scored_sets = st.integers(2, 60).flatmap(
    lambda n: st.tuples(
        st.lists(st.integers(-5, 5).map(float) | st.floats(-10, 10), min_size=n, max_size=n),
        st.lists(st.integers(0, 1), min_size=n, max_size=n),
    )
).filter(lambda t: 0 < sum(t[1]) < len(t[1]))


def four_examples():
    return [ScoredExample(0.9, 1), ScoredExample(0.8, 0), ScoredExample(0.7, 1),
            ScoredExample(0.3, 0)]


def test_hand_swept_curve():
    curve = roc_curve(four_examples())
    assert curve.points == [(0, 0), (0, 0.5), (0.5, 0.5), (0.5, 1), (1, 1)]
    assert curve.thresholds[1:] == [0.9, 0.8, 0.7, 0.3]
    assert auc(four_examples()).value == 0.75
    assert auc_pairwise(four_examples()) == 0.75


def test_total_tie_is_chance_diagonal():
    ex = [ScoredExample(0.4, y) for y in (1, 0, 1, 0, 0)]
    assert roc_curve(ex).points == [(0, 0), (1, 1)]
    assert auc(ex).value == 0.5


def test_perfect_separation():
    curve = roc_curve([3, 2, 1, 0], [1, 1, 0, 0])
    assert (0.0, 1.0) in curve.points
    assert auc_trapezoid(curve) == 1.0


def test_auc_score_metadata():
    s = auc([0.1, 0.2, 0.3], [0, 1, 1], instruction="greeting", model="lstm")
    assert s.instruction is InstructionType.GREETING
    assert (s.n_pos, s.n_neg, s.model) == (2, 1, "lstm")


def test_rejections():
    with pytest.raises(DegenerateLabels):
        roc_curve([0.1, 0.2], [1, 1])
    with pytest.raises(ValueError):
        roc_curve([0.1, np.nan], [0, 1])
    with pytest.raises(ValueError):
        roc_curve([0.1, 0.2], [0, 2])
    with pytest.raises(ValueError):
        ScoredExample(float("inf"), 1)


@settings(max_examples=300, deadline=None)
@given(scored_sets)
def test_trapezoid_matches_pairwise(data):
    scores, labels = data
    assert abs(auc_trapezoid(roc_curve(scores, labels)) - auc_pairwise(scores, labels)) <= 1e-9


@settings(max_examples=200, deadline=None)
@given(scored_sets)
def test_curve_structure(data):
    curve = roc_curve(*data)
    assert curve.points[0] == (0.0, 0.0) and curve.points[-1] == (1.0, 1.0)
    assert np.all(np.diff(curve.fpr) >= 0) and np.all(np.diff(curve.tpr) >= 0)
    assert np.all((curve.fpr >= 0) & (curve.fpr <= 1))


@settings(max_examples=200, deadline=None)
@given(scored_sets, st.sampled_from(["exp", "affine", "cube"]))
def test_rank_invariance(data, kind):
    scores, labels = data
    s = np.array(scores)
    t = {"exp": lambda v: np.exp(v / 4), "affine": lambda v: 3 * v - 7,
         "cube": lambda v: v**3 + v}[kind](s)
    # a transform that merges distinct scores in float is not strictly increasing
    if len(np.unique(t)) != len(np.unique(s)):
        return
    assert roc_curve(t, labels).points == roc_curve(s, labels).points
    assert auc(t, labels).value == auc(s, labels).value


@settings(max_examples=200, deadline=None)
@given(scored_sets)
def test_complement_symmetry(data):
    scores, labels = data
    a = auc(scores, labels).value
    b = auc([-v for v in scores], labels).value
    assert a + b == pytest.approx(1.0, abs=1e-12)


class _Const:
    def __init__(self, table):
        self.table = table

    def decision_function(self, texts):
        return [self.table.get(t, 0.0) for t in texts]


def small_test_sets(types=INSTRUCTIONS):
    data = [LabeledSentence("a", 1, InstructionType.GREETING),
            LabeledSentence("b", 0, InstructionType.GREETING),
            LabeledSentence("c", 1, InstructionType.GREETING),
            LabeledSentence("d", 0, InstructionType.GREETING)]
    return {t: data for t in types}


def test_single_model_single_type():
    report = evaluate_models({"m": _Const({"a": 1, "c": 2})},
                             small_test_sets([InstructionType.GUIDANCE]))
    assert len(report) == 1
    e = report.get("guidance", "m")
    assert e.score.value == 1.0


def test_report_order_is_canonical():
    m1, m2 = _Const({"a": 1}), lambda texts: [len(t) for t in texts]
    sets = small_test_sets()
    a = evaluate_models({"x": m1, "y": m2}, sets)
    b = evaluate_models({"y": m2, "x": m1}, dict(reversed(list(sets.items()))))
    key = [(e.score.instruction, e.score.model, e.score.value) for e in a.entries]
    assert key == [(e.score.instruction, e.score.model, e.score.value) for e in b.entries]
    assert [k[0] for k in key[::2]] == list(INSTRUCTIONS)


def test_per_instruction_scorers():
    sets = small_test_sets([InstructionType.GREETING, InstructionType.REPEATING])
    models = {"m": {InstructionType.GREETING: _Const({"a": 1, "c": 1}),
                    "repeating": _Const({"b": 1})}}
    table = evaluate_models(models, sets).auc_table()
    assert table[(InstructionType.GREETING, "m")] == 1.0
    assert table[(InstructionType.REPEATING, "m")] == 0.25


def test_render_empty_report(tmp_path):
    written = render_report(EvaluationReport(), tmp_path)
    assert written == [tmp_path / "auc.csv"]
    assert (tmp_path / "auc.csv").read_text() == "instruction,model,auc,n_pos,n_neg\n"


def test_render_full_report(tmp_path):
    rng = np.random.default_rng(0)
    models = {name: (lambda texts, r=rng: r.normal(size=len(texts)))
              for name in ("lstm", "lr", "svm", "gbdt")}
    report = evaluate_models(models, small_test_sets())
    render_report(report, tmp_path)
    assert len(list(tmp_path.glob("roc_*.svg"))) == 6
    rows = list(csv.DictReader((tmp_path / "auc.csv").open()))
    assert len(rows) == 24
    assert rows[0]["instruction"] == "greeting"
    assert float(rows[0]["auc"]) == pytest.approx(report.entries[0].score.value, abs=5e-7)


def test_svg_polyline_carries_curve_points(tmp_path):
    ex = four_examples()
    models = {"lstm": lambda texts: [e.score for e in ex]}
    sets = {InstructionType.COMMENDING: [LabeledSentence(str(k), e.label,
                                                         InstructionType.COMMENDING)
                                         for k, e in enumerate(ex)]}
    report = evaluate_models(models, sets)
    render_report(report, tmp_path)
    root = ET.parse(tmp_path / "roc_commending.svg").getroot()
    lines = [p for p in root.iter(f"{SVG}polyline") if p.get("class") == "roc"]
    assert len(lines) == 1 and lines[0].get("data-model") == "lstm"
    parsed = [tuple(float(v) for v in pair.split(",")) for pair in lines[0].get("points").split()]
    assert parsed == report.entries[0].curve.points == roc_curve(ex).points
    legend = [t.text for t in root.iter(f"{SVG}text") if t.get("class") == "legend"]
    assert legend == ["lstm (AUC = 0.750)"]
