"""Multi-step state propagation: the unit-step Euler update driving both
training inference and free-run simulation.

One rollout is inherently sequential; batches of independent trajectories
advance together through vectorized model steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import RawDataset
from .errors import DimensionMismatchError, NumericalDivergenceError
from .fuzzy_models import AdditiveDynamics, FuzzyDynamicsModel
from .state_repr import StateConfig, build_states, output_of_state

# A normalized state beyond this magnitude is treated as divergence.
DIVERGE_LIMIT = 1e6


@dataclass
class RolloutResult:
    """states: (N+1, n_x) with row 0 the given initial state.
    contributions: (N, n_z, n_x) per-step per-block updates, or None."""

    states: np.ndarray
    contributions: np.ndarray | None = None


def _dyn(model):
    return model.dynamics if isinstance(model, FuzzyDynamicsModel) else model


def _check_finite(x, step):
    # NaN fails the <= comparison too, so one reduction covers both cases
    mag = np.abs(x).max()
    if not mag <= DIVERGE_LIMIT:
        if not np.isfinite(x).all():
            raise NumericalDivergenceError(step, np.inf)
        raise NumericalDivergenceError(step, float(mag))


def rollout_batch(dyn, X0: np.ndarray, U: np.ndarray, record_tape: bool = False):
    """Advance B trajectories N steps. X0 (B, n_x), U (B, N, n_u).

    Returns (states (B, N+1, n_x), tape) where tape is the list of per-step
    caches when record_tape else None. Raises NumericalDivergenceError on a
    non-finite or runaway state.
    """
    X0 = np.asarray(X0, dtype=float)
    U = np.asarray(U, dtype=float)
    B, n_x = X0.shape
    N = U.shape[1]
    if X0.shape[1] != dyn.n_x or U.shape[2] != dyn.n_z - dyn.n_x:
        raise DimensionMismatchError(
            f"model expects n_x={dyn.n_x}, n_u={dyn.n_z - dyn.n_x}; "
            f"got x0 {X0.shape}, u {U.shape}"
        )
    mfs = dyn.decoded()
    states = np.empty((B, N + 1, n_x))
    states[:, 0] = X0
    tape = [] if record_tape else None
    x = X0
    for k in range(N):
        Z = np.concatenate([x, U[:, k]], axis=1)
        if record_tape:
            dx, cache = dyn.infer_tape(Z, mfs)
            tape.append(cache)
        else:
            dx = dyn.infer(Z, mfs=mfs)
        x = x + dx
        _check_finite(x, k + 1)
        states[:, k + 1] = x
    return states, tape


def rollout(model, x0, u_seq, with_contributions: bool = False) -> RolloutResult:
    """Free-run one trajectory: x0 (n_x,), u_seq (N, n_u)."""
    dyn = _dyn(model)
    x0 = np.asarray(x0, dtype=float).ravel()
    u_seq = np.atleast_2d(np.asarray(u_seq, dtype=float))
    if with_contributions and not isinstance(dyn, AdditiveDynamics):
        raise ValueError("per-block contributions are only defined for additive models")
    if not with_contributions:
        states, _ = rollout_batch(dyn, x0[None, :], u_seq[None, :, :])
        return RolloutResult(states=states[0])
    mfs = dyn.decoded()
    N = u_seq.shape[0]
    states = np.empty((N + 1, x0.size))
    contribs = np.empty((N, dyn.n_z, dyn.n_x))
    states[0] = x0
    x = x0
    for k in range(N):
        z = np.concatenate([x, u_seq[k]])
        dx, per_block = dyn.infer(z[None, :], mfs=mfs, return_blocks=True)
        contribs[k] = per_block[0]
        x = x + dx[0]
        _check_finite(x, k + 1)
        states[k + 1] = x
    return RolloutResult(states=states, contributions=contribs)


def simulate(model, ds: RawDataset, cfg: StateConfig | None = None) -> np.ndarray:
    """Free-run over a whole record; returns predicted outputs (K - m, n_y).

    The initial state is built from the first m+1 measured outputs; after
    that only measured inputs are used. The record must be in the same
    (normalized) units the model was trained in.
    """
    return simulate_detailed(model, ds, cfg).outputs


@dataclass
class SimulationResult:
    outputs: np.ndarray  # (K - m, n_y) predicted outputs
    states: np.ndarray  # (K - m, n_x) predicted states
    offset: int  # original sample index of row 0
    contributions: np.ndarray | None = None


def simulate_detailed(
    model,
    ds: RawDataset,
    cfg: StateConfig | None = None,
    with_contributions: bool = False,
) -> SimulationResult:
    """simulate plus the full state trajectory and, for additive models,
    optional per-step per-block update contributions."""
    if cfg is None:
        if not isinstance(model, FuzzyDynamicsModel):
            raise ValueError("a bare dynamics object needs an explicit StateConfig")
        cfg = StateConfig(mode=model.sr_mode, m=model.m)
    dyn = _dyn(model)
    states, offset = build_states(ds.outputs, cfg)
    x0 = states[0]
    U = ds.inputs[offset : ds.K - 1]
    if with_contributions:
        res = rollout(dyn, x0, U, with_contributions=True)
        traj, contribs = res.states, res.contributions
    else:
        batch, _ = rollout_batch(dyn, x0[None, :], U[None, :, :])
        traj, contribs = batch[0], None
    return SimulationResult(
        outputs=output_of_state(traj, ds.n_y),
        states=traj,
        offset=offset,
        contributions=contribs,
    )
