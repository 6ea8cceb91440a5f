"""Student update: task heads on the chosen loss, GradNorm task weights, then the trunk."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, NumericError, ShapeError
from .losses import Action, LossValue, loss_for_action
from .nn import AdamWConfig, MtlCache, MtlNetwork, adamw_step, backward, forward, l2_norm

WEIGHT_FLOOR = 1e-3


@dataclass(frozen=True)
class GradNormConfig:
    alpha: float = 1.5
    lr_w: float = 0.025

    def __post_init__(self):
        if self.alpha < 0 or self.lr_w <= 0:
            raise ContractError("GradNorm needs alpha >= 0 and lr_w > 0")


@dataclass
class GradStats:
    G: np.ndarray
    losses: np.ndarray
    grad_norms: np.ndarray
    G_bar: float
    rho: np.ndarray
    L_grad: float
    alpha: float


def grad_stats(losses: np.ndarray, grad_norms: np.ndarray, w: np.ndarray, alpha: float) -> GradStats:
    """``G_t = w_t * ||grad L_t||`` and the inverse training rates ``L_t / mean(L)``."""
    losses = np.asarray(losses, dtype=np.float64)
    grad_norms = np.asarray(grad_norms, dtype=np.float64)
    G = np.asarray(w, dtype=np.float64) * grad_norms
    G_bar = float(np.mean(G))
    mean_loss = float(np.mean(losses))
    rho = losses / mean_loss if mean_loss > 0 else np.ones_like(losses)
    target = G_bar * rho ** alpha
    return GradStats(G, losses, grad_norms, G_bar, rho, float(np.sum(np.abs(G - target))), alpha)


def renormalize(w: np.ndarray, floor: float = WEIGHT_FLOOR) -> np.ndarray:
    """Clamp at ``floor`` and rescale so the weights sum to ``len(w)``.

    Entries that would fall under the floor after scaling are pinned to it and
    the remaining mass is redistributed over the others.
    """
    w = np.maximum(np.asarray(w, dtype=np.float64), floor)
    T = len(w)
    pinned = np.zeros(T, dtype=bool)
    while True:
        free = ~pinned
        budget = T - floor * pinned.sum()
        cand = w[free] * (budget / w[free].sum())
        low = cand < floor
        if not low.any():
            w[free] = cand
            return w
        idx = np.flatnonzero(free)[low]
        pinned[idx] = True
        w[idx] = floor


def gradnorm_targets(stats: GradStats) -> np.ndarray:
    return stats.G_bar * stats.rho ** stats.alpha


def gradnorm_weight_grad(stats: GradStats) -> np.ndarray:
    """Subgradient of ``L_grad`` in ``w`` with the targets held constant."""
    return np.sign(stats.G - gradnorm_targets(stats)) * stats.grad_norms


def gradnorm_weight_update(stats: GradStats, w: np.ndarray, gn: GradNormConfig) -> np.ndarray:
    if stats.alpha != gn.alpha:
        raise ContractError("stats were computed with a different alpha")
    return renormalize(np.asarray(w, dtype=np.float64) - gn.lr_w * gradnorm_weight_grad(stats))


def multitask_update(
    net: MtlNetwork,
    head_grads: list,
    shared_grads: list,
    losses: np.ndarray,
    lr: float,
    gn: GradNormConfig,
    adam: AdamWConfig = AdamWConfig(),
) -> GradStats:
    """Apply one head step per task, a GradNorm weight step, then one trunk step.

    ``shared_grads[t]`` is the unweighted trunk gradient of task ``t``; the trunk
    moves along ``sum_t w_t * shared_grads[t]`` with the freshly updated weights.
    Gradient norms use the last trunk layer only.
    """
    T = net.n_tasks
    if len(head_grads) != T or len(shared_grads) != T:
        raise ShapeError("need head and trunk gradients for every task")
    opt = dict(betas=adam.betas, eps=adam.eps, weight_decay=adam.weight_decay)
    for t in range(T):
        adamw_step(net.heads[t], head_grads[t], net.opt_state.heads[t], lr, **opt)
    norms = np.array([l2_norm([g[-1]]) for g in shared_grads])
    stats = grad_stats(losses, norms, net.task_weights, gn.alpha)
    net.task_weights = gradnorm_weight_update(stats, net.task_weights, gn)
    combined = []
    for k in range(net.shared.n_layers):
        dW = sum(net.task_weights[t] * shared_grads[t][k][0] for t in range(T))
        db = sum(net.task_weights[t] * shared_grads[t][k][1] for t in range(T))
        combined.append((dW, db))
    adamw_step(net.shared, combined, net.opt_state.shared, lr, **opt)
    return stats


def apply_losses(
    net: MtlNetwork,
    cache: MtlCache,
    losses: list[LossValue],
    lr: float,
    gn: GradNormConfig,
    adam: AdamWConfig = AdamWConfig(),
    labels=None,
) -> GradStats:
    """Update ``net`` in place from per-task losses evaluated on ``cache``."""
    if len(losses) != net.n_tasks:
        raise ShapeError("one loss per task required")
    head_grads, shared_grads = [], []
    for t, loss in enumerate(losses):
        if not (np.isfinite(loss.value) and np.all(np.isfinite(loss.dP))):
            what = f" under action {Action(labels[t]).name}" if labels is not None else ""
            raise NumericError(f"non-finite loss for task {t}{what}")
        g = backward(net, cache, {t: loss.dP}, scope="both")
        head_grads.append(g.heads[t])
        shared_grads.append(g.shared)
    values = np.array([l.value for l in losses])
    return multitask_update(net, head_grads, shared_grads, values, lr, gn, adam)


def task_losses(P: list[np.ndarray], Y: np.ndarray, S: np.ndarray, decision) -> list[LossValue]:
    if len(decision) != len(P):
        raise ShapeError("decision length must equal the number of tasks")
    return [loss_for_action(P[t], Y[:, t], S, a) for t, a in enumerate(decision)]


def student_step(net: MtlNetwork, batch, decision, lr: float, gn: GradNormConfig,
                 adam: AdamWConfig = AdamWConfig()) -> GradStats:
    """One student update on ``batch = (X, S, Y)`` following the teacher's ``decision``."""
    X, S, Y = batch
    if len(X) == 0:
        raise ContractError("student_step needs a non-empty batch")
    P, cache = forward(net, X)
    return apply_losses(net, cache, task_losses(P, Y, S, decision), lr, gn, adam, labels=decision)
