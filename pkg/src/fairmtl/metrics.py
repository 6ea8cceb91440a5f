"""Group-conditional confusion counts, equalized-odds violation and relative scores.

Group ``g`` (protected) is ``protected == 1``; ``gbar`` is ``protected == 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyEvaluationError, ShapeError

EPS_EO = 1e-4


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def tpr(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else float("nan")

    @property
    def fnr(self) -> float:
        return 1.0 - self.tpr

    @property
    def fpr(self) -> float:
        return self.fp / (self.fp + self.tn) if self.fp + self.tn else float("nan")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class GroupRates:
    g: Confusion
    gbar: Confusion

    def swapped(self) -> GroupRates:
        return GroupRates(self.gbar, self.g)


def _binary(name, a):
    a = np.asarray(a)
    if a.size and not np.all((a == 0) | (a == 1)):
        raise ShapeError(f"{name} must be binary")
    return a.astype(bool)


def hard_predictions(P1: np.ndarray) -> np.ndarray:
    """Threshold ``P(Y=1)`` at 0.5; ties go to class 1."""
    return (np.asarray(P1) >= 0.5).astype(np.int64)


def confusion_by_group(pred, label, protected) -> GroupRates:
    pred, label, protected = (_binary(n, a) for n, a in (("pred", pred), ("label", label), ("protected", protected)))
    if not (pred.shape == label.shape == protected.shape) or pred.ndim != 1:
        raise ShapeError("pred, label and protected must be 1-d vectors of equal length")

    def counts(mask):
        p, y = pred[mask], label[mask]
        return Confusion(
            tp=int(np.sum(p & y)), fp=int(np.sum(p & ~y)),
            tn=int(np.sum(~p & ~y)), fn=int(np.sum(~p & y)),
        )

    return GroupRates(counts(protected), counts(~protected))


def _gap(a: float, b: float) -> float:
    # an undefined rate on either side contributes nothing
    if np.isnan(a) or np.isnan(b):
        return 0.0
    return abs(a - b)


def eo_violation(rates: GroupRates) -> float:
    return _gap(rates.g.fnr, rates.gbar.fnr) + _gap(rates.g.fpr, rates.gbar.fpr)


def accuracy(pred, label) -> float:
    pred, label = np.asarray(pred), np.asarray(label)
    if pred.shape != label.shape:
        raise ShapeError("pred and label must have equal length")
    if pred.size == 0:
        raise EmptyEvaluationError("accuracy of an empty evaluation is undefined")
    return float(np.mean(pred == label))


@dataclass
class MetricsReport:
    acc: np.ndarray
    eo: np.ndarray
    ara: float | None = None
    areo: float | None = None

    def __post_init__(self):
        self.acc = np.asarray(self.acc, dtype=np.float64)
        self.eo = np.asarray(self.eo, dtype=np.float64)
        if self.acc.shape != self.eo.shape or self.acc.ndim != 1:
            raise ShapeError("acc and eo must be vectors of length T")

    @property
    def n_tasks(self) -> int:
        return len(self.acc)

    def composite(self) -> float:
        """Mean over tasks of ``acc - eo``; used for checkpoint selection."""
        return float(np.mean(self.acc - self.eo))

    def to_dict(self) -> dict:
        d = {"acc": [float(x) for x in self.acc], "eo": [float(x) for x in self.eo]}
        if self.ara is not None:
            d["ara"] = float(self.ara)
            d["areo"] = float(self.areo)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> MetricsReport:
        return cls(d["acc"], d["eo"], d.get("ara"), d.get("areo"))


def relative_report(mtl: MetricsReport, stl: MetricsReport, eps_eo: float = EPS_EO) -> tuple[float, float]:
    """Average ratio of MTL to STL accuracy and EO violation across tasks."""
    if mtl.n_tasks != stl.n_tasks:
        raise ShapeError(f"task count mismatch: {mtl.n_tasks} vs {stl.n_tasks}")
    ara = float(np.mean(mtl.acc / stl.acc))
    areo = float(np.mean(mtl.eo / np.maximum(stl.eo, eps_eo)))
    return ara, areo
