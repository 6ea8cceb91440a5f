import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fairmtl.losses import (
    Action,
    GroupLossTerms,
    LossValue,
    Term,
    accuracy_loss,
    fairness_loss,
    fixed_tradeoff_loss,
    greedy_select,
    group_log_losses,
    loss_for_action,
)
from fairmtl.nn import backward, forward

from conftest import central_diff, kink_free_inputs, random_net, rel_error


def _probs(p1):
    p1 = np.asarray(p1, dtype=float)
    return np.stack([1 - p1, p1], axis=1)


def test_accuracy_loss_at_half_is_ln2():
    P = _probs(np.full(6, 0.5))
    assert accuracy_loss(P, np.array([1, 0, 1, 1, 0, 0])).value == pytest.approx(math.log(2), abs=1e-15)


def test_accuracy_loss_near_zero_when_confident():
    y = np.array([1, 0, 1])
    P = _probs(y.astype(float))
    assert 0 <= accuracy_loss(P, y).value < 1e-11


def test_group_terms():
    y = np.array([1, 1, 0, 0])
    s = np.array([1, 0, 1, 0])
    t = group_log_losses(_probs([1.0, 0.3, 0.2, 0.4]), y, s)
    assert t.fnr_g.value == 0.0
    single = group_log_losses(_probs([0.5]), np.array([1]), np.array([1]))
    assert single.fnr_g.value == pytest.approx(math.log(2))
    assert single.fnr_gbar.empty and single.fpr_g.empty


def test_identical_groups_give_identical_terms():
    p = [0.9, 0.2, 0.6, 0.3]
    y = [1, 0, 1, 0]
    P = _probs(p + p)
    terms = group_log_losses(P, np.array(y + y), np.array([1] * 4 + [0] * 4))
    assert terms.fnr_g.value == terms.fnr_gbar.value and terms.fpr_g.value == terms.fpr_gbar.value
    fair = fairness_loss(terms)
    assert fair.value == pytest.approx(terms.fnr_g.value + terms.fpr_g.value)


def _term(v):
    return Term(v, np.zeros((1, 2)), 1)


def test_fairness_from_terms():
    assert fairness_loss(GroupLossTerms(_term(0.2), _term(0.5), _term(0.1), _term(0.3))).value == pytest.approx(0.8)


def test_fixed_tradeoff_examples():
    rng = np.random.default_rng(0)
    P = _probs(rng.uniform(0.05, 0.95, 10))
    y, s = rng.integers(0, 2, 10), rng.integers(0, 2, 10)
    acc = accuracy_loss(P, y)
    zero = fixed_tradeoff_loss(P, y, s, 0.0)
    assert zero.value == acc.value and np.array_equal(zero.dP, acc.dP)
    one = fixed_tradeoff_loss(P, y, s, 1.0)
    assert one.value == pytest.approx(acc.value + fairness_loss(group_log_losses(P, y, s)).value)


def test_greedy_select():
    a, f = LossValue(0.7, None), LossValue(0.3, None)
    assert greedy_select(a, f) == (a, Action.ACCURACY)
    assert greedy_select(f, a) == (a, Action.FAIRNESS)
    assert greedy_select(a, LossValue(0.7, None))[1] is Action.ACCURACY


@settings(max_examples=50)
@given(st.lists(st.tuples(st.floats(0.01, 0.99), st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=20))
def test_fairness_is_group_swap_symmetric(rows):
    a = np.array(rows)
    P, y, s = _probs(a[:, 0]), a[:, 1].astype(int), a[:, 2].astype(int)
    v = fairness_loss(group_log_losses(P, y, s)).value
    w = fairness_loss(group_log_losses(P, y, 1 - s)).value
    assert v == pytest.approx(w, rel=1e-12, abs=1e-15)
    assert v >= 0


def _fd_check(seed, make_loss):
    net = random_net(seed)
    rng = np.random.default_rng(seed + 1000)
    n = 12
    X = kink_free_inputs(net, rng, n)
    Y = rng.integers(0, 2, (n, net.n_tasks))
    S = np.r_[0, 1, rng.integers(0, 2, n - 2)]

    def total():
        P, _ = forward(net, X)
        return sum(make_loss(P[t], Y[:, t], S).value for t in range(net.n_tasks))

    P, cache = forward(net, X)
    g = backward(net, cache, [make_loss(P[t], Y[:, t], S).dP for t in range(net.n_tasks)])
    analytic = [x for W, b in g.shared for x in (W, b)]
    for t in range(net.n_tasks):
        analytic += [x for W, b in g.heads[t] for x in (W, b)]
    return rel_error(analytic, central_diff(total, net.parameter_arrays()))


@pytest.mark.parametrize("name", ["accuracy", "fairness", "tradeoff"])
def test_loss_gradients_small_sample(name):
    make = {
        "accuracy": lambda P, y, s: accuracy_loss(P, y),
        "fairness": lambda P, y, s: loss_for_action(P, y, s, Action.FAIRNESS),
        "tradeoff": lambda P, y, s: fixed_tradeoff_loss(P, y, s, 0.7),
    }[name]
    assert max(_fd_check(seed, make) for seed in range(5)) < 1e-4


@settings(max_examples=200)
@given(st.lists(st.tuples(st.floats(1e-6, 1 - 1e-6), st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=30))
def test_fairness_loss_bounds_accuracy_loss(rows):
    a = np.array(rows)
    P, y, s = _probs(a[:, 0]), a[:, 1].astype(int), a[:, 2].astype(int)
    acc = accuracy_loss(P, y).value
    fair = fairness_loss(group_log_losses(P, y, s)).value
    assert fair >= acc - 1e-12
