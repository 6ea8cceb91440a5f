"""Per-task training objectives over the 2-column probability output of a head.

Every loss returns its value together with ``dP``, the gradient with respect
to the probability matrix, which :func:`fairmtl.nn.backward` consumes.
Column 1 is ``P(Y=1)`` and column 0 is ``P(Y=0)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

LOG_CLAMP = 1e-12


class Action(str, Enum):
    ACCURACY = "A"
    FAIRNESS = "F"


@dataclass
class LossValue:
    value: float
    dP: np.ndarray


@dataclass
class Term:
    value: float
    dP: np.ndarray
    count: int

    @property
    def empty(self) -> bool:
        return self.count == 0


@dataclass
class GroupLossTerms:
    fnr_g: Term
    fnr_gbar: Term
    fpr_g: Term
    fpr_gbar: Term

    def swapped(self) -> GroupLossTerms:
        return GroupLossTerms(self.fnr_gbar, self.fnr_g, self.fpr_gbar, self.fpr_g)


def _neg_log_mean(P: np.ndarray, col: int, mask: np.ndarray) -> Term:
    """Mean of ``-log P[i, col]`` over rows in ``mask`` with its gradient."""
    dP = np.zeros_like(P)
    count = int(mask.sum())
    if count == 0:
        return Term(0.0, dP, 0)
    p = P[mask, col]
    clamped = p < LOG_CLAMP
    value = -float(np.sum(np.log(np.maximum(p, LOG_CLAMP)))) / count
    g = np.where(clamped, 0.0, -1.0 / (count * np.maximum(p, LOG_CLAMP)))
    dP[mask, col] = g
    return Term(value, dP, count)


def accuracy_loss(P: np.ndarray, y: np.ndarray) -> LossValue:
    """Mean binary negative log-likelihood."""
    P = np.asarray(P, dtype=np.float64)
    y = np.asarray(y).astype(bool)
    n = len(y)
    safe = np.maximum(P, LOG_CLAMP)
    picked = np.where(y, safe[:, 1], safe[:, 0])
    value = -float(np.sum(np.log(picked))) / n
    dP = np.zeros_like(P)
    dP[y, 1] = np.where(P[y, 1] < LOG_CLAMP, 0.0, -1.0 / (n * safe[y, 1]))
    dP[~y, 0] = np.where(P[~y, 0] < LOG_CLAMP, 0.0, -1.0 / (n * safe[~y, 0]))
    return LossValue(value, dP)


def group_log_losses(P: np.ndarray, y: np.ndarray, s: np.ndarray) -> GroupLossTerms:
    """Group-wise log losses on positives (FNR-type) and negatives (FPR-type).

    Each term is normalised by the size of its (label, group) cell.
    """
    P = np.asarray(P, dtype=np.float64)
    y = np.asarray(y).astype(bool)
    s = np.asarray(s).astype(bool)
    return GroupLossTerms(
        fnr_g=_neg_log_mean(P, 1, y & s),
        fnr_gbar=_neg_log_mean(P, 1, y & ~s),
        fpr_g=_neg_log_mean(P, 0, ~y & s),
        fpr_gbar=_neg_log_mean(P, 0, ~y & ~s),
    )


def _worst(a: Term, b: Term) -> Term | None:
    if a.empty and b.empty:
        return None
    if b.empty:
        return a
    if a.empty:
        return b
    return a if a.value >= b.value else b


def fairness_loss(terms: GroupLossTerms) -> LossValue:
    """Worst-group FNR term plus worst-group FPR term.

    The gradient follows only the selected term of each pair; ties pick ``g``
    and empty cells never win a pair.
    """
    value = 0.0
    dP = np.zeros_like(terms.fnr_g.dP)
    for pick in (_worst(terms.fnr_g, terms.fnr_gbar), _worst(terms.fpr_g, terms.fpr_gbar)):
        if pick is not None:
            value += pick.value
            dP = dP + pick.dP
    return LossValue(value, dP)


def fixed_tradeoff_loss(P, y, s, lam: float) -> LossValue:
    acc = accuracy_loss(P, y)
    if lam == 0:
        return acc
    fair = fairness_loss(group_log_losses(P, y, s))
    return LossValue(acc.value + lam * fair.value, acc.dP + lam * fair.dP)


def greedy_select(acc: LossValue, fair: LossValue) -> tuple[LossValue, Action]:
    if fair.value > acc.value:
        return fair, Action.FAIRNESS
    return acc, Action.ACCURACY


def loss_for_action(P, y, s, action: Action) -> LossValue:
    if Action(action) is Action.ACCURACY:
        return accuracy_loss(P, y)
    return fairness_loss(group_log_losses(P, y, s))
