"""Multi-task DQN teacher that picks the accuracy or fairness loss per task.

The state for task ``t`` is the flattened parameter vector of the student's
head ``t``. Action index 0 is :attr:`Action.ACCURACY`, index 1 is
:attr:`Action.FAIRNESS`.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import _rng
from .errors import ContractError, NumericError, ShapeError
from .losses import Action, loss_for_action
from .metrics import MetricsReport, accuracy, confusion_by_group, eo_violation, hard_predictions
from .nn import (
    Activation,
    AdamState,
    AdamWConfig,
    DenseParams,
    MtlNetwork,
    adamw_step,
    dense_backward,
    dense_forward,
    flatten_head,
    mlp_init,
)
from .student import GradNormConfig, GradStats, multitask_update

ACTIONS = (Action.ACCURACY, Action.FAIRNESS)
EPS_REWARD = 1e-3


def action_index(a) -> int:
    return ACTIONS.index(Action(a))


@dataclass
class Transition:
    task: int
    state: np.ndarray
    action: Action
    reward: float
    next_state: np.ndarray

    def __post_init__(self):
        if np.shape(self.state) != np.shape(self.next_state):
            raise ShapeError("state and next_state must have the same length")


@dataclass
class TeacherDqn:
    net: MtlNetwork
    gamma: float = 0.9
    epsilon: float = 0.0
    rng: np.random.Generator | None = None
    replay_capacity: int = 0
    replay: deque = field(default_factory=deque)

    def __post_init__(self):
        if not 0 <= self.gamma < 1:
            raise ContractError("gamma must lie in [0, 1)")

    @property
    def env_weights(self) -> np.ndarray:
        return self.net.task_weights

    @property
    def n_tasks(self) -> int:
        return self.net.n_tasks

    @property
    def state_dim(self) -> int:
        return self.net.input_dim


def teacher_init(student_hidden: int, n_tasks: int, seed: int, hidden=(32, 16), gamma: float = 0.9,
                 epsilon: float = 0.0, replay_capacity: int = 0) -> TeacherDqn:
    dims = [2 * student_hidden + 2, *hidden]
    net = mlp_init(dims, n_tasks, seed, head_activation=Activation.IDENTITY, stream_key=1)
    return TeacherDqn(net, gamma, epsilon, _rng.stream(seed, "explore"), replay_capacity)


def encode_state(head: DenseParams) -> np.ndarray:
    return flatten_head(head)


def _q_batch(dqn: TeacherDqn, Z: np.ndarray, t: int):
    H, trunk_cache = dense_forward(dqn.net.shared, Z)
    Q, head_cache = dense_forward(dqn.net.heads[t], H)
    return Q, trunk_cache, head_cache


def q_values(dqn: TeacherDqn, z: np.ndarray, t: int) -> tuple[float, float]:
    if not 0 <= t < dqn.n_tasks:
        raise ShapeError(f"task index {t} out of range")
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (dqn.state_dim,):
        raise ShapeError(f"state must have length {dqn.state_dim}, got {z.shape}")
    Q, _, _ = _q_batch(dqn, z[None, :], t)
    return float(Q[0, 0]), float(Q[0, 1])


def decide(dqn: TeacherDqn, states) -> list[Action]:
    """Greedy action per task (ties go to accuracy), with optional epsilon exploration."""
    if len(states) != dqn.n_tasks:
        raise ShapeError("one state per task required")
    out = []
    for t, z in enumerate(states):
        q_acc, q_fair = q_values(dqn, z, t)
        a = Action.FAIRNESS if q_fair > q_acc else Action.ACCURACY
        if dqn.epsilon > 0:
            # draw both numbers every time so the stream advances identically
            u, pick = dqn.rng.random(), int(dqn.rng.integers(2))
            if u < dqn.epsilon:
                a = ACTIONS[pick]
        out.append(a)
    return out


def counterfactual_eval(snapshot: MtlNetwork, t: int, action, train, val, lr: float, batches=None,
                        adam: AdamWConfig = AdamWConfig(), H_train=None, H_val=None):
    """Replay head ``t``'s updates under ``action`` with the trunk frozen.

    ``train`` and ``val`` are datasets; ``batches`` is a list of row-index
    arrays into ``train`` (default: one full batch). Trunk features may be
    passed in to avoid recomputing them. Returns ``(acc, eo, next_state)``
    measured on ``val``; ``snapshot`` is left untouched.
    """
    head = snapshot.heads[t].copy()
    state = _copy_adam(snapshot.opt_state.heads[t])
    if H_train is None:
        H_train, _ = dense_forward(snapshot.shared, train.U)
    if H_val is None:
        H_val, _ = dense_forward(snapshot.shared, val.U)
    if batches is None:
        batches = [np.arange(train.n)]
    y, s = train.Y[:, t], train.S
    for idx in batches:
        P, cache = dense_forward(head, H_train[idx])
        loss = loss_for_action(P, y[idx], s[idx], action)
        if not np.isfinite(loss.value):
            raise NumericError(f"non-finite loss for task {t} under action {Action(action).name}")
        grads, _ = dense_backward(head, cache, loss.dP)
        adamw_step(head, grads, state, lr, adam.betas, adam.eps, adam.weight_decay)
    P_val, _ = dense_forward(head, H_val)
    pred = hard_predictions(P_val[:, 1])
    acc = accuracy(pred, val.Y[:, t])
    eo = eo_violation(confusion_by_group(pred, val.Y[:, t], val.S))
    return acc, eo, encode_state(head)


def _copy_adam(state: AdamState) -> AdamState:
    return AdamState([m.copy() for m in state.m], [v.copy() for v in state.v], state.step)


@dataclass
class BestTracker:
    acc_best: np.ndarray
    eo_best: np.ndarray

    @classmethod
    def from_report(cls, report: MetricsReport) -> BestTracker:
        return cls(report.acc.copy(), report.eo.copy())

    def entry(self, t: int) -> tuple[float, float]:
        return float(self.acc_best[t]), float(self.eo_best[t])

    def update(self, report: MetricsReport) -> None:
        self.acc_best = np.maximum(self.acc_best, report.acc)
        self.eo_best = np.minimum(self.eo_best, report.eo)


def compute_reward(acc: float, eo: float, best: tuple[float, float], eps: float = EPS_REWARD) -> float:
    """Relative accuracy gain and relative EO reduction, whichever is smaller."""
    acc_best, eo_best = best
    return min((acc - acc_best) / max(acc_best, eps), (eo_best - eo) / max(1.0 - eo_best, eps))


def td_targets(dqn: TeacherDqn, transitions: list[Transition]) -> np.ndarray:
    """``r + gamma * max_a' Q(z', a')`` for transitions of a single task."""
    t = transitions[0].task
    Zn = np.stack([tr.next_state for tr in transitions])
    Qn, _, _ = _q_batch(dqn, Zn, t)
    r = np.array([tr.reward for tr in transitions], dtype=np.float64)
    return r + dqn.gamma * Qn.max(axis=1)


def td_loss(dqn: TeacherDqn, transitions: list[Transition], targets=None):
    """Mean squared TD error for one task; returns ``(loss, head_grads, trunk_grads)``."""
    t = transitions[0].task
    if targets is None:
        targets = td_targets(dqn, transitions)
    Z = np.stack([tr.state for tr in transitions])
    idx = np.array([action_index(tr.action) for tr in transitions])
    Q, trunk_cache, head_cache = _q_batch(dqn, Z, t)
    m = len(transitions)
    rows = np.arange(m)
    diff = Q[rows, idx] - targets
    dQ = np.zeros_like(Q)
    dQ[rows, idx] = 2.0 * diff / m
    head_grads, dH = dense_backward(dqn.net.heads[t], head_cache, dQ)
    trunk_grads, _ = dense_backward(dqn.net.shared, trunk_cache, dH)
    return float(np.mean(diff ** 2)), head_grads, trunk_grads


def teacher_step(dqn: TeacherDqn, transitions: list[Transition], gn: GradNormConfig, lr: float,
                 adam: AdamWConfig = AdamWConfig()) -> GradStats:
    """One MT-DQN update from exactly one transition per (task, action)."""
    T = dqn.n_tasks
    if len(transitions) != 2 * T:
        raise ContractError(f"expected {2 * T} transitions, got {len(transitions)}")
    by_task = [[] for _ in range(T)]
    for tr in transitions:
        by_task[tr.task].append(tr)
    for t, trs in enumerate(by_task):
        if sorted(action_index(tr.action) for tr in trs) != [0, 1]:
            raise ContractError(f"task {t} needs one transition per action")
    if dqn.replay_capacity > 0:
        # FIFO of past transitions (capacity counted in transitions) trained alongside the fresh ones
        batches = [[tr for tr in dqn.replay if tr.task == t] + by_task[t] for t in range(T)]
        dqn.replay.extend(transitions)
        while len(dqn.replay) > dqn.replay_capacity:
            dqn.replay.popleft()
    else:
        batches = by_task
    losses, head_grads, trunk_grads = [], [], []
    for trs in batches:
        loss, hg, sg = td_loss(dqn, trs)
        losses.append(loss)
        head_grads.append(hg)
        trunk_grads.append(sg)
    return multitask_update(dqn.net, head_grads, trunk_grads, np.array(losses), lr, gn, adam)
