"""Which loss the teacher picks for each task, epoch by epoch."""

import numpy as np

from fairmtl import SynthSpec, TrainConfig, generate_synthetic, split, train_l2tfmt

# task 0 carries strong label bias, task 1 almost none
spec = SynthSpec(n=4000, d=10, T=2, bias=[0.6, 0.05], noise=0.05)
splits = split(generate_synthetic(spec, 1), (0.6, 0.2, 0.2), 1)
cfg = TrainConfig(trunk_dims=[10, 32, 16], n_tasks=2, batch_size=512, max_epochs=40, patience=40, seed=1)

seen = []
model = train_l2tfmt(cfg, splits, monitor=lambda kind, w: seen.append((kind, w.copy())))

trace = np.array([[a.value for a in row] for row in model.trace])
for t in range(trace.shape[1]):
    print(f"task {t}: " + "".join(trace[:, t]) + f"   F share {np.mean(trace[:, t] == 'F'):.2f}")

w_student = np.array([w for k, w in seen if k == "student"])
w_teacher = np.array([w for k, w in seen if k == "teacher"])
print("\nfinal student task weights", np.round(w_student[-1], 4), "sum", w_student[-1].sum())
print("final teacher env weights ", np.round(w_teacher[-1], 4), "sum", w_teacher[-1].sum())
