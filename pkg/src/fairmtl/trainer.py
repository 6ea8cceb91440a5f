"""Training loops for L2T-FMT and the baselines (vanilla MTL, G-FMT, fixed trade-off, STL)."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .data import Dataset, Splits, batches
from .errors import ConfigError, EmptyEvaluationError, NumericError
from .losses import (
    Action,
    accuracy_loss,
    fairness_loss,
    fixed_tradeoff_loss,
    greedy_select,
    group_log_losses,
)
from .metrics import MetricsReport, accuracy, confusion_by_group, eo_violation, hard_predictions
from .nn import AdamWConfig, MtlNetwork, dense_forward, forward, mlp_init
from .student import GradNormConfig, apply_losses, student_step, task_losses
from .teacher import (
    ACTIONS,
    BestTracker,
    Transition,
    compute_reward,
    counterfactual_eval,
    decide,
    encode_state,
    teacher_init,
    teacher_step,
)

log = logging.getLogger(__name__)

METHODS = ("l2t", "vanilla", "gfmt", "fixed", "stl")
IMPROVE_TOL = 1e-4


@dataclass
class TrainConfig:
    trunk_dims: list = field(default_factory=lambda: [10, 32, 16])
    n_tasks: int = 1
    lr_student: float = 1e-3
    lr_teacher: float = 1e-3
    lr_w: float = 0.025
    gradnorm_alpha: float = 1.5
    gamma: float = 0.9
    epsilon_explore: float = 0.0
    batch_size: int = 8192
    max_epochs: int = 100
    patience: int = 20
    seed: int = 0
    lambda_fixed: list | None = None
    method: str = "l2t"
    teacher_hidden: list = field(default_factory=lambda: [32, 16])
    weight_decay: float = 0.01
    replay_capacity: int = 0
    decision_granularity: str = "epoch"

    def __post_init__(self):
        self.trunk_dims = [int(x) for x in self.trunk_dims]
        self.teacher_hidden = [int(x) for x in self.teacher_hidden]
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {METHODS}")
        if min(self.lr_student, self.lr_teacher, self.lr_w) <= 0:
            raise ConfigError("learning rates must be positive")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ConfigError("batch_size, max_epochs and patience must be >= 1")
        if self.n_tasks < 1:
            raise ConfigError("n_tasks must be >= 1")
        if not 0 <= self.epsilon_explore <= 1:
            raise ConfigError("epsilon_explore must lie in [0, 1]")
        if not 0 <= self.gamma < 1:
            raise ConfigError("gamma must lie in [0, 1)")
        if self.decision_granularity not in ("epoch", "batch"):
            raise ConfigError("decision_granularity must be 'epoch' or 'batch'")
        if self.lambda_fixed is not None:
            self.lambda_fixed = [float(x) for x in self.lambda_fixed]
            if len(self.lambda_fixed) != self.n_tasks or any(x < 0 for x in self.lambda_fixed):
                raise ConfigError("lambda_fixed needs n_tasks non-negative entries")

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})

    def to_dict(self) -> dict:
        return asdict(self)

    def gradnorm(self) -> GradNormConfig:
        return GradNormConfig(self.gradnorm_alpha, self.lr_w)

    def adam(self) -> AdamWConfig:
        return AdamWConfig(weight_decay=self.weight_decay)


@dataclass
class TrainedModel:
    net: MtlNetwork
    best_epoch: int
    history: list[MetricsReport]
    trace: list[list[Action]]
    method: str

    @property
    def epochs_completed(self) -> int:
        return len(self.history)


# -- evaluation and convergence --------------------------------------------

def evaluate(model, split: Dataset) -> MetricsReport:
    """Per-task accuracy and EO violation over the full split (0.5 threshold)."""
    net = model.net if isinstance(model, TrainedModel) else model
    if split.n == 0:
        raise EmptyEvaluationError("cannot evaluate on an empty split")
    P, _ = forward(net, split.U)
    acc, eo = [], []
    for t in range(net.n_tasks):
        pred = hard_predictions(P[t][:, 1])
        acc.append(accuracy(pred, split.Y[:, t]))
        eo.append(eo_violation(confusion_by_group(pred, split.Y[:, t], split.S)))
    return MetricsReport(acc, eo)


def has_converged(history, patience: int, max_epochs: int | None = None) -> bool:
    """True once the best score has not moved by more than 1e-4 for ``patience`` epochs."""
    if max_epochs is not None and len(history) >= max_epochs:
        return True
    best, last = history[0], 0
    for i, x in enumerate(history):
        if x > best + IMPROVE_TOL:
            best, last = x, i
    return len(history) - 1 - last >= patience


# -- loops ------------------------------------------------------------------

class _Checkpointer:
    def __init__(self):
        self.best = None
        self.score = -np.inf
        self.epoch = -1

    def offer(self, net, report, epoch):
        score = report.composite()
        if score > self.score:
            self.best, self.score, self.epoch = net.copy(), score, epoch


def _fit(cfg: TrainConfig, splits: Splits, epoch_fn, n_tasks: int, method: str) -> TrainedModel:
    net = mlp_init(cfg.trunk_dims, n_tasks, cfg.seed)
    if net.input_dim != splits.train.d:
        raise ConfigError(f"trunk input dim {net.input_dim} != data feature dim {splits.train.d}")
    ckpt = _Checkpointer()
    history, trace = [], []
    state = epoch_fn.init(net, splits) if hasattr(epoch_fn, "init") else None
    for epoch in range(cfg.max_epochs):
        idx = batches(splits.train.n, cfg.batch_size, cfg.seed, epoch)
        try:
            row = epoch_fn(net, splits, idx, epoch, state)
        except NumericError as exc:
            raise NumericError(f"{method} epoch {epoch}: {exc}") from exc
        report = evaluate(net, splits.val)
        if hasattr(epoch_fn, "end_epoch"):
            epoch_fn.end_epoch(report, state)
        history.append(report)
        trace.append(row)
        ckpt.offer(net, report, epoch)
        log.debug("%s epoch %d composite %.4f", method, epoch, report.composite())
        if has_converged([r.composite() for r in history], cfg.patience, cfg.max_epochs):
            break
    return TrainedModel(ckpt.best, ckpt.epoch, history, trace, method)


def _batch(train: Dataset, idx):
    return train.U[idx], train.S[idx], train.Y[idx]


class _FixedLossEpoch:
    """Epoch of plain MTL updates where a rule maps forward outputs to per-task losses."""

    def __init__(self, cfg, rule, monitor=None):
        self.cfg, self.rule, self.monitor = cfg, rule, monitor

    def __call__(self, net, splits, idx_batches, epoch, state):
        row = None
        for idx in idx_batches:
            X, S, Y = _batch(splits.train, idx)
            P, cache = forward(net, X)
            losses, actions = self.rule(P, Y, S)
            apply_losses(net, cache, losses, self.cfg.lr_student, self.cfg.gradnorm(), self.cfg.adam(), actions)
            if self.monitor:
                self.monitor("student", net.task_weights)
            if row is None:
                row = list(actions)
        return row


class _L2TEpoch:
    def __init__(self, cfg, policy=None, monitor=None):
        self.cfg, self.policy, self.monitor = cfg, policy, monitor

    def init(self, net, splits):
        cfg = self.cfg
        teacher = None
        if self.policy is None:
            teacher = teacher_init(net.hidden_dim, net.n_tasks, cfg.seed, cfg.teacher_hidden, cfg.gamma,
                                   cfg.epsilon_explore, cfg.replay_capacity)
        tracker = BestTracker.from_report(evaluate(net, splits.val))
        return {"teacher": teacher, "tracker": tracker}

    def _decide(self, net, state):
        states = [encode_state(h) for h in net.heads]
        d = self.policy(states) if self.policy is not None else decide(state["teacher"], states)
        return states, [Action(a) for a in d]

    def _teach(self, snapshot, states, splits, idx_batches, state):
        cfg = self.cfg
        teacher, tracker = state["teacher"], state["tracker"]
        H_train, _ = dense_forward(snapshot.shared, splits.train.U)
        H_val, _ = dense_forward(snapshot.shared, splits.val.U)
        transitions = []
        for t in range(snapshot.n_tasks):
            for a in ACTIONS:
                acc, eo, z_next = counterfactual_eval(snapshot, t, a, splits.train, splits.val, cfg.lr_student,
                                                      batches=idx_batches, adam=cfg.adam(),
                                                      H_train=H_train, H_val=H_val)
                r = compute_reward(acc, eo, tracker.entry(t))
                transitions.append(Transition(t, states[t], a, r, z_next))
        teacher_step(teacher, transitions, cfg.gradnorm(), cfg.lr_teacher, cfg.adam())
        if self.monitor:
            self.monitor("teacher", teacher.env_weights)

    def _student(self, net, splits, idx, d):
        cfg = self.cfg
        student_step(net, _batch(splits.train, idx), d, cfg.lr_student, cfg.gradnorm(), cfg.adam())
        if self.monitor:
            self.monitor("student", net.task_weights)

    def __call__(self, net, splits, idx_batches, epoch, state):
        learn = state["teacher"] is not None
        if self.cfg.decision_granularity == "epoch":
            states, d = self._decide(net, state)
            snapshot = net.copy() if learn else None
            for idx in idx_batches:
                self._student(net, splits, idx, d)
            if learn:
                self._teach(snapshot, states, splits, idx_batches, state)
            return d
        row = None
        for idx in idx_batches:
            states, d = self._decide(net, state)
            snapshot = net.copy() if learn else None
            self._student(net, splits, idx, d)
            if learn:
                self._teach(snapshot, states, splits, [idx], state)
                state["tracker"].update(evaluate(net, splits.val))
            row = row or d
        return row

    def end_epoch(self, report, state):
        state["tracker"].update(report)


def train_l2tfmt(cfg: TrainConfig, splits: Splits, policy=None, monitor=None) -> TrainedModel:
    """Teacher-guided training. ``policy`` replaces the learned teacher when given.

    ``policy(states) -> list[Action]`` receives the flattened task heads; a
    policy disables teacher learning entirely. ``monitor(kind, weights)`` is
    called after every student and teacher update.
    """
    return _fit(cfg, splits, _L2TEpoch(cfg, policy, monitor), cfg.n_tasks, "l2t")


def _vanilla_rule(P, Y, S):
    d = [Action.ACCURACY] * len(P)
    return task_losses(P, Y, S, d), d


def _greedy_rule(P, Y, S):
    picks = [greedy_select(accuracy_loss(P[t], Y[:, t]), fairness_loss(group_log_losses(P[t], Y[:, t], S)))
             for t in range(len(P))]
    return [p[0] for p in picks], [p[1] for p in picks]


def _tradeoff_rule(lams):
    def rule(P, Y, S):
        losses = [fixed_tradeoff_loss(P[t], Y[:, t], S, lams[t]) for t in range(len(P))]
        return losses, [Action.FAIRNESS if lam > 0 else Action.ACCURACY for lam in lams]
    return rule


def train_vanilla(cfg: TrainConfig, splits: Splits, monitor=None) -> TrainedModel:
    return _fit(cfg, splits, _FixedLossEpoch(cfg, _vanilla_rule, monitor), cfg.n_tasks, "vanilla")


def train_gfmt(cfg: TrainConfig, splits: Splits, monitor=None) -> TrainedModel:
    return _fit(cfg, splits, _FixedLossEpoch(cfg, _greedy_rule, monitor), cfg.n_tasks, "gfmt")


def train_fixed(cfg: TrainConfig, splits: Splits, monitor=None) -> TrainedModel:
    if cfg.lambda_fixed is None:
        raise ConfigError("fixed method requires lambda_fixed")
    return _fit(cfg, splits, _FixedLossEpoch(cfg, _tradeoff_rule(cfg.lambda_fixed), monitor), cfg.n_tasks, "fixed")


def stl_lambda(cfg: TrainConfig, t: int) -> float:
    return 1.0 if cfg.lambda_fixed is None else cfg.lambda_fixed[t]


def train_stl(cfg: TrainConfig, splits: Splits, t: int) -> TrainedModel:
    """Single-head network on task ``t`` alone with the fixed trade-off objective."""
    if not 0 <= t < splits.train.T:
        raise ConfigError(f"task index {t} out of range")
    sub = Splits(*(s.task(t) for s in splits))
    rule = _tradeoff_rule([stl_lambda(cfg, t)])
    return _fit(cfg, sub, _FixedLossEpoch(cfg, rule), 1, "stl")


def train_stl_all(cfg: TrainConfig, splits: Splits) -> list[TrainedModel]:
    return [train_stl(cfg, splits, t) for t in range(splits.train.T)]


def evaluate_stl(models: list[TrainedModel], split: Dataset) -> MetricsReport:
    reports = [evaluate(m, split.task(t)) for t, m in enumerate(models)]
    return MetricsReport([r.acc[0] for r in reports], [r.eo[0] for r in reports])


def train(cfg: TrainConfig, splits: Splits, monitor=None) -> TrainedModel:
    if cfg.method == "l2t":
        return train_l2tfmt(cfg, splits, monitor=monitor)
    if cfg.method == "vanilla":
        return train_vanilla(cfg, splits, monitor)
    if cfg.method == "gfmt":
        return train_gfmt(cfg, splits, monitor)
    if cfg.method == "fixed":
        return train_fixed(cfg, splits, monitor)
    raise ConfigError("use train_stl / train_stl_all for the stl method")
