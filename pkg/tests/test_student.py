import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fairmtl.errors import ContractError, NumericError, ShapeError
from fairmtl.losses import Action
from fairmtl.nn import mlp_init
from fairmtl.student import (
    GradNormConfig,
    grad_stats,
    gradnorm_targets,
    gradnorm_weight_grad,
    gradnorm_weight_update,
    renormalize,
    student_step,
)

A, F = Action.ACCURACY, Action.FAIRNESS
GN = GradNormConfig()


def _batch(n=32, d=3, T=2, seed=0):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, d)), rng.integers(0, 2, n), rng.integers(0, 2, (n, T))


def test_hand_evaluated_subgradient():
    # G = (2, 1), rho = (1, 1), G_bar = 1.5, alpha = 1
    stats = grad_stats(np.array([1.0, 1.0]), np.array([2.0, 1.0]), np.array([1.0, 1.0]), alpha=1.0)
    assert stats.G_bar == 1.5 and stats.rho.tolist() == [1.0, 1.0]
    w = gradnorm_weight_update(stats, np.array([1.0, 1.0]), GradNormConfig(alpha=1.0, lr_w=0.1))
    assert w[0] < 1 < w[1]
    assert w.sum() == pytest.approx(2.0, abs=1e-12)


def test_balanced_tasks_leave_weights_alone():
    w = np.array([1.5, 0.5])
    stats = grad_stats(np.array([0.5, 0.5]), np.array([1.0, 3.0]), w, alpha=1.5)
    assert np.array_equal(stats.G, [1.5, 1.5]) and stats.L_grad == 0
    assert np.allclose(gradnorm_weight_update(stats, w, GN), w, atol=1e-15)


def test_alpha_mismatch_is_a_contract_error():
    stats = grad_stats(np.ones(2), np.ones(2), np.ones(2), alpha=1.0)
    with pytest.raises(ContractError):
        gradnorm_weight_update(stats, np.ones(2), GradNormConfig(alpha=2.0))


@settings(max_examples=200)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=8))
def test_renormalize_floor_and_sum(raw):
    w = renormalize(np.array(raw))
    assert abs(w.sum() - len(raw)) <= 1e-12
    assert w.min() >= 1e-3


def test_renormalize_water_fills():
    w = renormalize(np.array([1e-6, 1e-6, 1000.0]))
    assert w[0] == w[1] == 1e-3
    assert w[2] == pytest.approx(3 - 2e-3)


@pytest.mark.parametrize("seed", range(5))
def test_weight_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    T = int(rng.integers(2, 6))
    losses, norms, w = rng.uniform(0.1, 2, T), rng.uniform(0.1, 3, T), rng.uniform(0.2, 2, T)
    stats = grad_stats(losses, norms, w, 1.5)
    target = gradnorm_targets(stats)

    def L(v):
        return np.sum(np.abs(v * norms - target))

    h = 1e-5
    fd = np.array([(L(w + h * e) - L(w - h * e)) / (2 * h) for e in np.eye(T)])
    an = gradnorm_weight_grad(stats)
    assert np.linalg.norm(an - fd) <= 1e-4 * np.linalg.norm(fd)


def test_gradnorm_is_homogeneous_in_weights():
    losses, norms = np.array([0.3, 0.9, 0.6]), np.array([1.0, 2.0, 0.5])
    w = np.array([0.5, 1.0, 1.5])
    a, b = grad_stats(losses, norms, w, 1.5), grad_stats(losses, norms, 3 * w, 1.5)
    assert np.allclose(b.G, 3 * a.G) and b.L_grad == pytest.approx(3 * a.L_grad)


def test_single_task_weight_stays_one():
    net = mlp_init([3, 6, 4], 1, seed=0)
    X, S, Y = _batch(T=1)
    for _ in range(5):
        student_step(net, (X, S, Y), [A], 1e-2, GN)
        assert net.task_weights.tolist() == [1.0]


def test_cloned_tasks_keep_equal_weights():
    net = mlp_init([3, 6, 4], 2, seed=1)
    net.heads[1] = net.heads[0].copy()
    X, S, Y = _batch(T=1)
    Y2 = np.hstack([Y, Y])
    for _ in range(5):
        student_step(net, (X, S, Y2), [F, F], 1e-2, GN)
        assert net.task_weights[0] == net.task_weights[1] == 1.0


def test_heads_only_see_their_own_task():
    X, S, Y = _batch(T=2)
    a, b = mlp_init([3, 6, 4], 2, seed=2), mlp_init([3, 6, 4], 2, seed=2)
    Y_other = Y.copy()
    Y_other[:, 1] = 1 - Y_other[:, 1]
    student_step(a, (X, S, Y), [A, A], 1e-2, GN)
    student_step(b, (X, S, Y_other), [A, A], 1e-2, GN)
    assert all(np.array_equal(x, y) for x, y in zip(a.heads[0].arrays(), b.heads[0].arrays()))
    assert not np.array_equal(a.heads[1].weights[0], b.heads[1].weights[0])


def test_student_step_errors():
    net = mlp_init([3, 4], 2, seed=0)
    X, S, Y = _batch(T=2)
    with pytest.raises(ShapeError):
        student_step(net, (X, S, Y), [A], 1e-3, GN)
    with pytest.raises(ContractError):
        student_step(net, (X[:0], S[:0], Y[:0]), [A, A], 1e-3, GN)
    net.heads[1].weights[0][:] = np.nan
    with pytest.raises(NumericError, match="task 1 under action FAIRNESS"):
        student_step(net, (X, S, Y), [A, F], 1e-3, GN)
