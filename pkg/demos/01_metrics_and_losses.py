"""Equalized-odds violation and the two training objectives on a toy batch."""

import numpy as np

from fairmtl.losses import accuracy_loss, fairness_loss, group_log_losses
from fairmtl.metrics import confusion_by_group, eo_violation

rng = np.random.default_rng(0)
n = 12
s = np.array([1] * 6 + [0] * 6)           # first half is the protected group
y = np.array([1, 1, 1, 0, 0, 0] * 2)

# a predictor that misses protected positives more often
p1 = np.where(y == 1, 0.8, 0.2)
p1[:3] = [0.3, 0.45, 0.7]
P = np.stack([1 - p1, p1], axis=1)

rates = confusion_by_group((p1 >= 0.5).astype(int), y, s)
print("protected    ", rates.g, "fnr", round(rates.g.fnr, 3))
print("non-protected", rates.gbar, "fnr", round(rates.gbar.fnr, 3))
print("EO violation ", eo_violation(rates))

terms = group_log_losses(P, y, s)
print("\ngroup log losses")
for name in ("fnr_g", "fnr_gbar", "fpr_g", "fpr_gbar"):
    print(f"  {name:9s} {getattr(terms, name).value:.4f}")
print("accuracy loss", round(accuracy_loss(P, y).value, 4))
print("fairness loss", round(fairness_loss(terms).value, 4))

# the fairness gradient only touches the worst group of each pair
dP = fairness_loss(terms).dP
print("\nrows with fairness gradient:", np.flatnonzero(np.abs(dP).sum(axis=1)).tolist())
