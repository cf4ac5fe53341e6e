"""Lagged vs incremental state construction on a damped oscillation.

The lagged form stacks past outputs; the incremental form stacks discrete
differences, so its components read as position / velocity / acceleration.
Both carry the same information: the incremental state is an integer
linear transform of the lagged one, demonstrated numerically below.
"""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from xfode.state_repr import (
    SR1,
    SR2,
    StateConfig,
    build_states,
    lag_to_difference_matrix,
)

OUT = os.path.join(os.path.dirname(__file__), "output")
os.makedirs(OUT, exist_ok=True)

t = np.arange(300) * 0.05
y = (np.exp(-0.15 * t) * np.sin(2.2 * t))[:, None]

m = 2
lagged, off = build_states(y, StateConfig(SR1, m))
incremental, _ = build_states(y, StateConfig(SR2, m))

fig, axes = plt.subplots(3, 1, figsize=(9, 7), sharex=True)
labels_sr2 = ["y (position-like)", "dy (velocity-like)", "d2y (acceleration-like)"]
for j in range(3):
    axes[j].plot(t[off:], incremental[:, j], label=f"incremental: {labels_sr2[j]}")
    axes[j].plot(t[off:], lagged[:, j], "--", label=f"lagged: y[k-{j}]" if j else "lagged: y[k]")
    axes[j].legend(fontsize=8, loc="upper right")
axes[-1].set_xlabel("time")
fig.suptitle("state components under the two constructions (m=2)")
fig.tight_layout()
fig.savefig(os.path.join(OUT, "state_forms.png"), dpi=130)
print("wrote", os.path.join(OUT, "state_forms.png"))

T = lag_to_difference_matrix(m)
print("difference weights (rows = orders):")
print(T)
err = np.abs(incremental - lagged @ T.T).max()
print(f"max |incremental - T @ lagged| over the record: {err:.2e}")
