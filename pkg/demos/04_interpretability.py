"""What the additive structure buys: per-input shape functions and clean
antecedent partitions on a trained model.

Each combined-input dimension owns one single-input rule set, so the model
decomposes the state update into per-input curves you can plot directly.
Here we train briefly on the tank benchmark and draw, for every input
dimension, its contribution to the level update, together with the learned
membership functions underneath.
"""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from xfode import fuzzy_models as fm
from xfode.dataset import fit_normalizer, normalize, split_rows
from xfode.evaluation import dimension_names, export_mfs, generate_synthetic
from xfode.membership import PS1, decode, mf_grid
from xfode.state_repr import SR2, StateConfig, build_states, build_trajectories
from xfode.training import TrainConfig, train

OUT = os.path.join(os.path.dirname(__file__), "output")
os.makedirs(OUT, exist_ok=True)

ds = generate_synthetic("tank_like", 2000, seed=3)
train_raw, _ = split_rows(ds, 1500)
stats = fit_normalizer(train_raw)
train_n = normalize(train_raw, stats)
cfg = StateConfig(SR2, m=2)
S = build_trajectories(train_n, cfg, N=20)
states, off = build_states(train_n.outputs, cfg)
domains = fm.data_domains(np.hstack([states, train_n.inputs[off:]]))

dyn = fm.init_additive(PS1, 5, 3, 1, domains, np.random.default_rng(1))
model = fm.FuzzyDynamicsModel(
    kind="xfode", dynamics=dyn, n_u=1, n_y=1, m=2, sr_mode=SR2, norm_stats=stats
)
train(model, S, TrainConfig(epochs=60, seed=1))

dims = dimension_names(model)
fig, axes = plt.subplots(2, len(dims), figsize=(3.2 * len(dims), 5.5), sharex="col")
for i, (dim, block) in enumerate(zip(dims, dyn.blocks)):
    mfs = decode(block.chain)
    z, grades = mf_grid(mfs, points=401)
    # top: this input's contribution to the level update (output 0)
    shape = fm.fls_infer(block, z)[:, 0]
    axes[0, i].plot(z, shape, lw=1.5, color="tab:red")
    axes[0, i].axhline(0, color="gray", lw=0.6)
    axes[0, i].set_title(f"$z_{i + 1}$ = {dim['name']}", fontsize=10)
    # bottom: the partition it reasons over
    for p in range(grades.shape[1]):
        axes[1, i].plot(z, grades[:, p], lw=1.0)
    axes[1, i].set_xlabel(dim["description"], fontsize=8)
axes[0, 0].set_ylabel("update contribution")
axes[1, 0].set_ylabel("membership grade")
fig.suptitle("additive decomposition: per-input shape functions over their partitions")
fig.tight_layout()
fig.savefig(os.path.join(OUT, "interpretability.png"), dpi=130)
print("wrote", os.path.join(OUT, "interpretability.png"))

# the same curves are exportable as CSVs for external tooling
written = export_mfs(model, os.path.join(OUT, "mf_export"))
print(f"exported {len(written)} files to {os.path.join(OUT, 'mf_export')}")
