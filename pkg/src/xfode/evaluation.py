"""Benchmark harness: synthetic data, free-run RMSE, multi-seed aggregation,
and interpretability exports.

The harness accepts any CSV record conforming to the dataset schema and also
ships deterministic synthetic generators so every experiment here is
self-contained. RMSE is computed on outputs over the full free-run test
simulation and reported in both normalized and original units.
"""

from __future__ import annotations

import concurrent.futures
import csv
import json
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from . import fuzzy_models as fm
from . import membership as mb
from .dataset import (
    NormStats,
    RawDataset,
    fit_normalizer,
    load_csv,
    normalize,
    split_rows,
)
from .errors import (
    AllSeedsDivergedError,
    DivergedRunError,
    NumericalDivergenceError,
    ShapeMismatchError,
    XfodeError,
)
from .fuzzy_models import FuzzyDynamicsModel, count_parameters
from .rollout import simulate
from .state_repr import SR1, SR2, StateConfig, build_states, build_trajectories
from .training import TrainConfig, train


def rmse(y_true: np.ndarray, y_pred: np.ndarray) -> np.ndarray:
    """Per-channel root-mean-square error of (T, n_y) sequences."""
    y_true = np.atleast_2d(np.asarray(y_true, dtype=float))
    y_pred = np.atleast_2d(np.asarray(y_pred, dtype=float))
    if y_true.shape != y_pred.shape:
        raise ShapeMismatchError(f"shapes differ: {y_true.shape} vs {y_pred.shape}")
    return np.sqrt(np.mean((y_true - y_pred) ** 2, axis=0))


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------

SYNTHETIC_KINDS = ("tank_like", "damper_like", "fuzzy_ground_truth")


def multilevel_input(n, rng, levels, hold_min=20, hold_max=60):
    """Piecewise-constant excitation: random level, random hold length."""
    u = np.empty(n)
    k = 0
    while k < n:
        hold = int(rng.integers(hold_min, hold_max + 1))
        u[k : k + hold] = rng.choice(levels)
        k += hold
    return u


def tank_response(u: np.ndarray, y0=1.0, a=0.4, b=0.5, dt=0.1) -> np.ndarray:
    """Level of a draining tank: dy/dt = -a*sqrt(y) + b*u, Euler, floored at
    empty (the discretization may otherwise step below zero)."""
    y = np.empty(u.size)
    y[0] = y0
    for k in range(u.size - 1):
        y[k + 1] = max(y[k] + dt * (-a * np.sqrt(max(y[k], 0.0)) + b * u[k]), 0.0)
    return y


def damper_response(u, y0=0.0, v0=0.0, k_spring=2.0, c0=0.2, c1=0.8, gain=1.5, dt=0.05):
    """Second-order system with velocity-dependent damping."""
    y = np.empty(u.size)
    v = v0
    y[0] = y0
    for k in range(u.size - 1):
        acc = -k_spring * y[k] - (c0 + c1 * abs(v)) * v + gain * u[k]
        y[k + 1] = y[k] + dt * v
        v = v + dt * acc
    return y


def _tank_dataset(n_samples, seed):
    rng = np.random.default_rng(seed)
    u = multilevel_input(n_samples, rng, np.linspace(0.0, 1.0, 6))
    y = tank_response(u)
    return RawDataset(inputs=u[:, None], outputs=y[:, None], name="tank_like")


def _damper_dataset(n_samples, seed):
    rng = np.random.default_rng(seed)
    u = multilevel_input(n_samples, rng, np.linspace(-1.0, 1.0, 7), 20, 80)
    y = damper_response(u)
    return RawDataset(inputs=u[:, None], outputs=y[:, None], name="damper_like")


def fuzzy_ground_truth(n_samples: int, seed: int):
    """A record generated by an additive fuzzy model, plus that model.

    The generator uses the incremental state [y, Dy] (m=1); its second
    output row is tied to the first so the rolled states stay exactly
    consistent with differences of the recorded output. Training a
    same-structure model on this data can therefore reach zero residual.
    Unstable draws are rejected and redrawn (deterministic given seed).
    """
    rng = np.random.default_rng(seed)
    P = 5
    u = multilevel_input(n_samples, rng, np.linspace(-1.0, 1.0, 7))
    for _ in range(60):
        raw = np.stack(
            [
                mb.init_chain(mb.PS1, P, -1.5, 1.5).raw,
                mb.init_chain(mb.PS1, P, -0.8, 0.8).raw,
                mb.init_chain(mb.PS1, P, -1.2, 1.2).raw,
            ]
        )
        raw += rng.normal(0, 0.15, raw.shape)
        # output-0 slopes carry a stabilizing bias: leak on y, momentum on Dy
        a0 = rng.uniform(-0.08, 0.08, (3, P)) + np.array([-0.1, 0.3, 0.0])[:, None]
        b0 = rng.uniform(-0.05, 0.05, (3, P))
        slopes = np.stack([a0, a0.copy()], axis=-1)  # (n_z, P, n_x=2)
        intercepts = np.stack([b0, b0.copy()], axis=-1)
        # tie the second state row to the first: Dy update = y update - Dy
        slopes[1, :, 1] -= 1.0
        dyn = fm.AdditiveDynamics(mb.PS1, P, raw, slopes, intercepts, n_u=1)
        x = np.zeros(2)
        y = np.empty(n_samples)
        y[0] = y[1] = 0.0
        ok = True
        mfs = dyn.decoded()
        for k in range(1, n_samples - 1):
            x = x + dyn.infer(np.array([[x[0], x[1], u[k]]]), mfs=mfs)[0]
            if not np.isfinite(x).all() or np.abs(x).max() > 3.0:
                ok = False
                break
            y[k + 1] = x[0]
        if ok:
            ds = RawDataset(inputs=u[:, None], outputs=y[:, None], name="fuzzy_ground_truth")
            model = FuzzyDynamicsModel(
                kind="xfode", dynamics=dyn, n_u=1, n_y=1, m=1, sr_mode=SR2
            )
            return ds, model
    raise XfodeError("could not draw a stable ground-truth model")


def generate_synthetic(kind: str, n_samples: int, seed: int) -> RawDataset:
    """Deterministic synthetic record of the requested kind."""
    if n_samples < 100:
        raise ValueError("n_samples must be >= 100")
    if kind == "tank_like":
        return _tank_dataset(n_samples, seed)
    if kind == "damper_like":
        return _damper_dataset(n_samples, seed)
    if kind == "fuzzy_ground_truth":
        return fuzzy_ground_truth(n_samples, seed)[0]
    raise ValueError(f"unknown synthetic kind {kind!r}; choose from {SYNTHETIC_KINDS}")


# ---------------------------------------------------------------------------
# Experiment specification
# ---------------------------------------------------------------------------

_INT_KEYS = {
    "nu", "ny", "train_rows", "m", "rules", "rollout", "stride",
    "epochs", "mbs", "n_samples", "data_seed", "sr", "ps",
}
_FLOAT_KEYS = {"lr", "clip", "consequent_scale"}
_LIST_KEYS = {"seeds"}
_STR_KEYS = {"data", "synthetic", "model", "name"}


@dataclass
class ExperimentSpec:
    """Everything benchmark() needs; mirrors the config-file schema."""

    # data source: a CSV path or a synthetic kind
    data: str | None = None
    synthetic: str | None = None
    n_samples: int = 3000
    data_seed: int = 12345
    nu: int = 1
    ny: int = 1
    train_rows: int = 1500
    # model
    model: str = "xfode"
    ps: int = 1
    sr: int = 2
    m: int = 2
    rules: int = 5
    rollout: int = 20
    stride: int = 1
    consequent_scale: float = 0.1
    # training
    seeds: list = field(default_factory=lambda: [0])
    epochs: int = 150
    mbs: int = 32
    lr: float = 1e-3
    clip: float | None = 10.0
    name: str = "experiment"

    def __post_init__(self):
        if self.model not in ("xfode", "afode", "fode"):
            raise ValueError(f"model must be xfode|afode|fode, got {self.model!r}")
        if self.ps not in (1, 2, 3):
            raise ValueError("ps must be 1, 2 or 3")
        if self.sr not in (1, 2):
            raise ValueError("sr must be 1 or 2")
        if not self.seeds:
            raise ValueError("seed list must be non-empty")
        if self.data is None and self.synthetic is None:
            raise ValueError("either a data path or a synthetic kind is required")

    @property
    def strategy(self) -> str:
        return f"ps{self.ps}"

    @property
    def state_config(self) -> StateConfig:
        return StateConfig(mode=SR1 if self.sr == 1 else SR2, m=self.m)

    def to_dict(self) -> dict:
        return asdict(self)


def load_experiment_spec(path: str, overrides: dict | None = None) -> ExperimentSpec:
    """Parse a key = value config file (# starts a comment)."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, val = line.partition("=")
            key = key.strip().lower()
            val = val.strip()
            if key in _INT_KEYS:
                values[key] = int(val)
            elif key in _FLOAT_KEYS:
                values[key] = None if val.lower() == "none" else float(val)
            elif key in _LIST_KEYS:
                values[key] = [int(v) for v in val.replace(",", " ").split()]
            elif key in _STR_KEYS:
                values[key] = val
            else:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentSpec(**values)


# ---------------------------------------------------------------------------
# Benchmark
# ---------------------------------------------------------------------------


def _acquire_dataset(spec: ExperimentSpec) -> RawDataset:
    if spec.data is not None:
        return load_csv(spec.data, spec.nu, spec.ny)
    return generate_synthetic(spec.synthetic, spec.n_samples, spec.data_seed)


def build_model(spec: ExperimentSpec, domains, rng) -> FuzzyDynamicsModel:
    cfg = spec.state_config
    n_x = cfg.n_x(spec.ny)
    if spec.model == "fode":
        dyn = fm.init_fode(spec.rules, n_x, spec.nu, domains, rng, spec.consequent_scale)
    else:
        strategy = mb.FREE_GAUSS if spec.model == "afode" else spec.strategy
        dyn = fm.init_additive(
            strategy, spec.rules, n_x, spec.nu, domains, rng, spec.consequent_scale
        )
    return FuzzyDynamicsModel(
        kind=spec.model,
        dynamics=dyn,
        n_u=spec.nu,
        n_y=spec.ny,
        m=spec.m,
        sr_mode=cfg.mode,
    )


def run_single_seed(spec: ExperimentSpec, seed: int) -> dict:
    """Train and evaluate one seed; returns a plain-dict result row."""
    ds = _acquire_dataset(spec)
    train_raw, test_raw = split_rows(ds, spec.train_rows)
    stats = fit_normalizer(train_raw)
    train_n = normalize(train_raw, stats)
    test_n = normalize(test_raw, stats)
    cfg = spec.state_config
    S = build_trajectories(train_n, cfg, spec.rollout, spec.stride)
    states, offset = build_states(train_n.outputs, cfg)
    Z = np.hstack([states, train_n.inputs[offset:]])
    domains = fm.data_domains(Z)
    rng = np.random.default_rng(seed)
    model = build_model(spec, domains, rng)
    model.norm_stats = stats
    tc = TrainConfig(
        epochs=spec.epochs,
        mbs=spec.mbs,
        learning_rate=spec.lr,
        rollout=spec.rollout,
        seed=seed,
        gradient_clip=spec.clip,
    )
    row = {"seed": seed}
    try:
        run = train(model, S, tc)
        y_pred_n = simulate(model, test_n, cfg)
    except (DivergedRunError, NumericalDivergenceError) as err:
        row.update(diverged=True, reason=str(err))
        return row
    y_true_n = test_n.outputs[cfg.m :]
    r_norm = rmse(y_true_n, y_pred_n)
    y_pred = y_pred_n * stats.output_std + stats.output_mean
    y_true = test_raw.outputs[cfg.m :]
    r_denorm = rmse(y_true, y_pred)
    row.update(
        diverged=False,
        rmse_norm=r_norm.tolist(),
        rmse_denorm=r_denorm.tolist(),
        final_loss=float(run.loss_trace[-1]),
        best_loss=float(run.loss_trace.min()),
        initial_loss=float(run.loss_trace[0]),
        best_epoch=run.best_epoch,
        skipped_batches=run.skipped_batches,
        model=model,
    )
    return row


def _worker(payload):
    spec = ExperimentSpec(**payload[0])
    row = run_single_seed(spec, payload[1])
    row.pop("model", None)  # models stay with the parent process runs only
    return row


@dataclass
class EvalReport:
    config: dict
    n_lp: int
    seeds: list
    aggregates: dict
    excluded_seeds: list
    single_seed: bool

    def to_json(self) -> str:
        doc = {
            "config": self.config,
            "n_lp": self.n_lp,
            "seeds": self.seeds,
            "aggregates": self.aggregates,
            "excluded_seeds": self.excluded_seeds,
            "single_seed": self.single_seed,
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    def table(self) -> str:
        agg = self.aggregates
        lines = [
            f"experiment: {self.config.get('name')}",
            f"model: {self.config.get('model')} ps={self.config.get('ps')} "
            f"sr={self.config.get('sr')} m={self.config.get('m')} "
            f"P={self.config.get('rules')} N={self.config.get('rollout')}",
            f"#LP: {self.n_lp}",
            f"seeds used: {len(self.seeds) - len(self.excluded_seeds)}"
            f" (excluded: {len(self.excluded_seeds)})",
        ]
        for unit in ("norm", "denorm"):
            mean = agg[f"rmse_{unit}_mean"]
            se = agg[f"rmse_{unit}_stderr"]
            cells = "  ".join(
                f"y{j + 1}: {m:.4g} +/- {s:.2g}" for j, (m, s) in enumerate(zip(mean, se))
            )
            lines.append(f"RMSE ({unit}): {cells}")
        return "\n".join(lines)


def _worker_count() -> int:
    env = os.environ.get("XFODE_THREADS", "")
    if env.strip():
        return max(1, int(env))
    return os.cpu_count() or 1


def benchmark(spec: ExperimentSpec, keep_models: bool = False):
    """Run every seed of an experiment and aggregate RMSE statistics.

    Returns (EvalReport, models) where models maps seed -> trained model for
    the seeds run in-process (kept only when keep_models is True).
    """
    workers = _worker_count()
    models = {}
    rows = []
    if workers > 1 and len(spec.seeds) > 1 and not keep_models:
        payloads = [(spec.to_dict(), seed) for seed in spec.seeds]
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_worker, payloads))
    else:
        for seed in spec.seeds:
            row = run_single_seed(spec, seed)
            model = row.pop("model", None)
            if keep_models and model is not None:
                models[seed] = model
            rows.append(row)
    good = [r for r in rows if not r["diverged"]]
    excluded = [r["seed"] for r in rows if r["diverged"]]
    if not good:
        raise AllSeedsDivergedError(f"all {len(rows)} seeds diverged")
    aggregates = {}
    for unit in ("norm", "denorm"):
        vals = np.asarray([r[f"rmse_{unit}"] for r in good])  # (n_good, n_y)
        aggregates[f"rmse_{unit}_mean"] = vals.mean(axis=0).tolist()
        if len(good) > 1:
            se = vals.std(axis=0, ddof=1) / np.sqrt(len(good))
        else:
            se = np.zeros(vals.shape[1])
        aggregates[f"rmse_{unit}_stderr"] = se.tolist()
    dummy_rng = np.random.default_rng(0)
    n_x = spec.state_config.n_x(spec.ny)
    probe = build_model(spec, [(-1.0, 1.0)] * (n_x + spec.nu), dummy_rng)
    report = EvalReport(
        config=spec.to_dict(),
        n_lp=count_parameters(probe),
        seeds=rows,
        aggregates=aggregates,
        excluded_seeds=excluded,
        single_seed=len(good) == 1,
    )
    return report, models


# ---------------------------------------------------------------------------
# Interpretability export
# ---------------------------------------------------------------------------


def dimension_names(model: FuzzyDynamicsModel) -> list[dict]:
    """Human-readable identity of every combined-input dimension."""
    names = []
    if model.sr_mode == SR2:
        for t in range(model.m + 1):
            for j in range(model.n_y):
                if t == 0:
                    names.append((f"y{j + 1}", f"output {j + 1}"))
                elif t == 1:
                    names.append((f"dy{j + 1}", f"output {j + 1}, first difference"))
                else:
                    names.append(
                        (f"d{t}y{j + 1}", f"output {j + 1}, difference order {t}")
                    )
    else:
        for t in range(model.m + 1):
            for j in range(model.n_y):
                if t == 0:
                    names.append((f"y{j + 1}", f"output {j + 1} (current)"))
                else:
                    names.append((f"y{j + 1}_lag{t}", f"output {j + 1}, lag {t}"))
    for i in range(model.n_u):
        names.append((f"u{i + 1}", f"input {i + 1}"))
    return [
        {"index": idx, "name": n, "description": d}
        for idx, (n, d) in enumerate(names)
    ]


def _per_dimension_mfs(model: FuzzyDynamicsModel):
    dyn = model.dynamics
    if isinstance(dyn, fm.AdditiveDynamics):
        return [fm.decode(b.chain) for b in dyn.blocks]
    sigma = mb.softplus(dyn.sigma_raw)
    out = []
    for i in range(dyn.n_z):
        order = np.argsort(dyn.centers[:, i], kind="stable")
        mfs = mb.DecodedMFs(
            strategy=mb.FREE_GAUSS,
            P=dyn.P,
            params={"center": dyn.centers[order, i], "sigma": sigma[order, i]},
        )
        out.append(mfs)
    return out


def export_mfs(model: FuzzyDynamicsModel, out_dir: str, points: int = 501) -> list[str]:
    """One CSV of sampled grades per combined-input dimension plus a manifest.

    Each CSV has columns z, mu_1 .. mu_P on a uniform grid spanning the
    decoded centers with a 10% margin. Returns the written file paths.
    """
    os.makedirs(out_dir, exist_ok=True)
    dims = dimension_names(model)
    written = []
    manifest = {"model_kind": model.kind, "strategy": model.strategy, "dimensions": []}
    for dim, mfs in zip(dims, _per_dimension_mfs(model)):
        z, grades = mb.mf_grid(mfs, points)
        fname = f"mf_z{dim['index'] + 1}_{dim['name']}.csv"
        path = os.path.join(out_dir, fname)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["z"] + [f"mu_{p + 1}" for p in range(model.P)])
            for zi, row in zip(z, grades):
                writer.writerow([repr(float(zi))] + [repr(float(g)) for g in row])
        written.append(path)
        manifest["dimensions"].append({**dim, "file": fname})
    mpath = os.path.join(out_dir, "manifest.json")
    with open(mpath, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    written.append(mpath)
    return written
