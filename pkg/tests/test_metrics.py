import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fairmtl.errors import EmptyEvaluationError, ShapeError
from fairmtl.metrics import (
    Confusion,
    GroupRates,
    MetricsReport,
    accuracy,
    confusion_by_group,
    eo_violation,
    hard_predictions,
    relative_report,
)


def test_perfect_predictor_has_no_errors():
    y = np.array([1, 0, 1, 1, 0, 0])
    s = np.array([1, 1, 1, 0, 0, 0])
    r = confusion_by_group(y, y, s)
    assert r.g.fp == r.g.fn == r.gbar.fp == r.gbar.fn == 0


def test_hand_counted_group():
    # g: TP=1, FN=1, FP=0, TN=2
    pred = np.array([1, 0, 0, 0])
    label = np.array([1, 1, 0, 0])
    r = confusion_by_group(pred, label, np.ones(4, dtype=int))
    assert (r.g.tp, r.g.fn, r.g.fp, r.g.tn) == (1, 1, 0, 2)
    assert r.g.tpr == 0.5 and r.g.fpr == 0.0
    assert r.gbar.total == 0 and math.isnan(r.gbar.tpr) and math.isnan(r.gbar.fpr)


def test_length_mismatch():
    with pytest.raises(ShapeError):
        confusion_by_group([1, 0], [1], [0, 1])


def test_eo_examples():
    same = Confusion(2, 1, 3, 2)
    assert eo_violation(GroupRates(same, same)) == 0.0
    # tpr_g=0.5, tpr_gbar=1, fpr_g=0, fpr_gbar=0.5
    r = GroupRates(Confusion(tp=1, fp=0, tn=2, fn=1), Confusion(tp=2, fp=1, tn=1, fn=0))
    assert eo_violation(r) == pytest.approx(1.0, abs=1e-15)
    assert eo_violation(r.swapped()) == eo_violation(r)


def test_empty_group_contributes_nothing():
    r = GroupRates(Confusion(0, 0, 0, 0), Confusion(1, 1, 1, 1))
    assert eo_violation(r) == 0.0


def test_accuracy_examples():
    y = np.array([1, 0, 1, 0])
    assert accuracy(y, y) == 1.0
    assert accuracy(1 - y, y) == 0.0
    assert accuracy(np.array([1, 0, 1, 1]), y) == 0.75
    with pytest.raises(EmptyEvaluationError):
        accuracy(np.array([]), np.array([]))


def test_threshold_ties_go_to_positive():
    assert hard_predictions(np.array([0.5, 0.4999, 0.9])).tolist() == [1, 0, 1]


def test_relative_report():
    m = MetricsReport([0.8, 0.6], [0.1, 0.2])
    assert relative_report(m, m) == (1.0, 1.0)
    ara, _ = relative_report(MetricsReport([1.1, 0.9], [0.1, 0.1]), MetricsReport([1.0, 1.0], [0.1, 0.1]))
    assert ara == pytest.approx(1.0)
    with pytest.raises(ShapeError):
        relative_report(m, MetricsReport([0.5], [0.1]))


def test_report_roundtrip():
    m = MetricsReport([0.8, 0.6], [0.1, 0.2], 0.9, 1.1)
    back = MetricsReport.from_dict(m.to_dict())
    assert np.array_equal(back.acc, m.acc) and back.areo == 1.1


@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=40))
def test_counts_are_permutation_invariant_and_complete(rows):
    a = np.array(rows)
    r = confusion_by_group(a[:, 0], a[:, 1], a[:, 2])
    rev = confusion_by_group(a[::-1, 0], a[::-1, 1], a[::-1, 2])
    assert r == rev
    assert r.g.total + r.gbar.total == len(rows)
    assert 0 <= eo_violation(r) <= 2
