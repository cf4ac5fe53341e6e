"""Mini-batched gradient training of rollout predictions.

The loss is the batch mean of the summed absolute state errors over an
N-step rollout. Gradients are exact reverse-mode: the forward pass tapes
each step, the backward pass walks the recurrence, pushing adjoints through
the fuzzy inference, the spread reparameterization and the center chaining.
Subgradient conventions: sign(0) = 0 for the absolute value, triangular-MF
kinks take the right-hand branch.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DivergedRunError,
    NumericalDivergenceError,
    ShapeMismatchError,
)
from .fuzzy_models import FuzzyDynamicsModel
from .rollout import rollout_batch
from .state_repr import TrajectorySet

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 150
    mbs: int = 32
    learning_rate: float = 1e-3
    rollout: int = 20
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    gradient_clip: float | None = 10.0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.mbs < 1:
            raise ValueError("mbs must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")


@dataclass
class TrainRun:
    """Outcome of one training run."""

    best_params: np.ndarray
    loss_trace: np.ndarray
    seed: int
    wall_time: float
    skipped_batches: int = 0
    best_epoch: int = 0
    extras: dict = field(default_factory=dict)


def l1_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean over trajectories of the summed absolute state errors.

    pred/target: (B, N, n_x) (or any matching shapes with the batch first).
    """
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ShapeMismatchError(f"shapes differ: {pred.shape} vs {target.shape}")
    return float(np.abs(pred - target).sum() / pred.shape[0])


def _dyn(model):
    return model.dynamics if isinstance(model, FuzzyDynamicsModel) else model


def _grad_accumulator(dyn):
    from .fuzzy_models import AdditiveDynamics

    if isinstance(dyn, AdditiveDynamics):
        return {
            "raw": np.zeros_like(dyn.raw),
            "slopes": np.zeros_like(dyn.slopes),
            "intercepts": np.zeros_like(dyn.intercepts),
        }
    return {
        "centers": np.zeros_like(dyn.centers),
        "sigma_raw": np.zeros_like(dyn.sigma_raw),
        "slopes": np.zeros_like(dyn.slopes),
        "intercepts": np.zeros_like(dyn.intercepts),
    }


def _acc_to_flat(dyn, acc):
    from .fuzzy_models import AdditiveDynamics

    if isinstance(dyn, AdditiveDynamics):
        return dyn._flat_from_parts(acc["raw"], acc["slopes"], acc["intercepts"])
    return dyn._flat_from_parts(
        acc["centers"], acc["sigma_raw"], acc["slopes"], acc["intercepts"]
    )


def loss_and_gradient(model, batch: TrajectorySet):
    """L1 loss of the batch rollout and its exact gradient (flat vector)."""
    dyn = _dyn(model)
    X = batch.x
    U = batch.u[:, : batch.N]
    B = batch.B
    N = batch.N
    n_x = batch.n_x
    states, tape = rollout_batch(dyn, X[:, 0], U, record_tape=True)
    resid = states[:, 1:] - X[:, 1:]
    loss = float(np.abs(resid).sum() / B)
    mfs = dyn.decoded()
    acc = _grad_accumulator(dyn)
    lam = np.sign(resid[:, N - 1]) / B
    for t in range(N - 1, -1, -1):
        z_bar = dyn.backward_step(mfs, tape[t], lam, acc)
        if t > 0:
            lam = lam + z_bar[:, :n_x] + np.sign(resid[:, t - 1]) / B
    return loss, _acc_to_flat(dyn, acc)


def compute_gradient(model, batch: TrajectorySet) -> np.ndarray:
    """Exact reverse-mode gradient of l1_loss through the full rollout."""
    return loss_and_gradient(model, batch)[1]


class Adam:
    """Standard Adam on a flat parameter vector."""

    def __init__(self, size, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params, grad):
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _clip(grad, limit):
    if limit is None:
        return grad
    norm = float(np.linalg.norm(grad))
    if norm > limit:
        return grad * (limit / norm)
    return grad


def train(model, S: TrajectorySet, cfg: TrainConfig) -> TrainRun:
    """Seeded mini-batch training; leaves the model at the best-epoch snapshot.

    Per epoch: shuffle trajectories, partition into mini-batches, roll out,
    backpropagate, Adam-update. Mini-batches whose rollout diverges are
    skipped (counted, excluded from the epoch mean). The snapshot with the
    lowest epoch-mean loss is kept.
    """
    if S.B < 1:
        raise ValueError("empty trajectory set")
    dyn = _dyn(model)
    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    params = dyn.get_flat()
    adam = Adam(params.size, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)
    mbs = min(cfg.mbs, S.B)
    trace = np.empty(cfg.epochs)
    best_loss = np.inf
    best_params = params.copy()
    best_epoch = 0
    skipped_total = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(S.B)
        losses = []
        skipped = 0
        for lo in range(0, S.B, mbs):
            idx = order[lo : lo + mbs]
            batch = S.subset(idx)
            try:
                loss, grad = loss_and_gradient(dyn, batch)
            except NumericalDivergenceError as err:
                skipped += 1
                log.debug("skipping diverged mini-batch (epoch %d): %s", epoch, err)
                continue
            losses.append(loss)
            params = adam.step(params, _clip(grad, cfg.gradient_clip))
            dyn.set_flat(params)
        if not losses:
            raise DivergedRunError(f"every mini-batch diverged in epoch {epoch}")
        if skipped:
            skipped_total += skipped
            log.warning("epoch %d: skipped %d diverged mini-batches", epoch, skipped)
        epoch_loss = float(np.mean(losses))
        trace[epoch] = epoch_loss
        if epoch_loss < best_loss:
            best_loss = epoch_loss
            best_params = params.copy()
            best_epoch = epoch
        log.info("epoch %d  loss %.6g  skipped %d", epoch, epoch_loss, skipped)
    dyn.set_flat(best_params)
    return TrainRun(
        best_params=best_params,
        loss_trace=trace,
        seed=cfg.seed,
        wall_time=time.perf_counter() - t0,
        skipped_batches=skipped_total,
        best_epoch=best_epoch,
    )
