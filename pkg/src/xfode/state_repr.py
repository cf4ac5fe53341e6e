"""State construction from measured outputs, and rollout training windows.

Two state forms are supported for a record y_0 .. y_{K-1} with n_y channels:

* lagged (sr1):      x_k = [y_k, y_{k-1}, ..., y_{k-m}]
* incremental (sr2): x_k = [y_k, Dy_k, ..., D^m y_k], D^j y = D^{j-1}y_k - D^{j-1}y_{k-1}

Both give state dimension n_x = (m+1) * n_y and are defined for k >= m.
The current output is always the first n_y state components.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .dataset import RawDataset
from .errors import DimensionMismatchError, InsufficientSamplesError

SR1 = "sr1"
SR2 = "sr2"


@dataclass(frozen=True)
class StateConfig:
    mode: str = SR2
    m: int = 2

    def __post_init__(self):
        if self.mode not in (SR1, SR2):
            raise ValueError(f"mode must be '{SR1}' or '{SR2}', got {self.mode!r}")
        if self.m < 0:
            raise ValueError("m must be >= 0")

    def n_x(self, n_y: int) -> int:
        return (self.m + 1) * n_y


@dataclass
class TrajectorySet:
    """B rollout windows of N+1 aligned (input, state) samples.

    u: (B, N+1, n_u), x: (B, N+1, n_x).
    """

    u: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        if self.u.ndim != 3 or self.x.ndim != 3:
            raise DimensionMismatchError("u and x must be (B, N+1, dim) arrays")
        if self.u.shape[:2] != self.x.shape[:2]:
            raise DimensionMismatchError("u and x disagree on (B, N+1)")

    @property
    def B(self) -> int:
        return self.u.shape[0]

    @property
    def N(self) -> int:
        return self.u.shape[1] - 1

    @property
    def n_u(self) -> int:
        return self.u.shape[2]

    @property
    def n_x(self) -> int:
        return self.x.shape[2]

    def subset(self, idx) -> "TrajectorySet":
        return TrajectorySet(self.u[idx], self.x[idx])


def build_states(outputs: np.ndarray, cfg: StateConfig) -> tuple[np.ndarray, int]:
    """Turn a (K, n_y) output record into (K - m, n_x) state rows.

    Returns (states, offset); row i of states is the state at original sample
    index i + offset, with offset = m.
    """
    outputs = np.atleast_2d(np.asarray(outputs, dtype=float))
    K = outputs.shape[0]
    m = cfg.m
    if K <= m:
        raise InsufficientSamplesError(f"need more than m={m} samples, got K={K}")
    if m == 0:
        return outputs.copy(), 0
    if cfg.mode == SR1:
        blocks = [outputs[m - j : K - j] for j in range(m + 1)]
    else:
        blocks = []
        d = outputs
        for j in range(m + 1):
            blocks.append(d[m - j :][: K - m])
            d = np.diff(d, axis=0)
    return np.hstack(blocks), m


def output_of_state(x: np.ndarray, n_y: int) -> np.ndarray:
    """Current output block of a state vector (first n_y components)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] % n_y != 0:
        raise DimensionMismatchError(
            f"state length {x.shape[-1]} is not a multiple of n_y={n_y}"
        )
    return x[..., :n_y]


def lag_to_difference_matrix(m: int) -> np.ndarray:
    """Integer matrix T with sr2_state = (T kron I_ny) @ sr1_state.

    Row j holds the signed binomial weights of the j-th discrete difference:
    T[j, i] = (-1)^i * C(j, i).
    """
    T = np.zeros((m + 1, m + 1))
    for j in range(m + 1):
        for i in range(j + 1):
            T[j, i] = (-1) ** i * comb(j, i)
    return T


def combined_affine(stats, cfg: StateConfig):
    """How the combined input z = [x; u] transforms under channel z-scoring.

    Normalizing y shifts/scales the current-output block; difference
    components only scale (shifts cancel), lagged components shift like y.
    Returns (shift (n_z,), scale (n_z,), state_scale (n_x,)) such that
    raw_z = scale * normalized_z + shift.
    """
    n_u = stats.n_u
    mean_y, std_y = stats.output_mean, stats.output_std
    shifts, scales = [mean_y], [std_y]
    for _ in range(cfg.m):
        shifts.append(mean_y if cfg.mode == SR1 else np.zeros_like(mean_y))
        scales.append(std_y)
    x_shift = np.concatenate(shifts)
    x_scale = np.concatenate(scales)
    shift = np.concatenate([x_shift, stats.mean[:n_u]])
    scale = np.concatenate([x_scale, stats.std[:n_u]])
    return shift, scale, x_scale


def build_trajectories(
    ds: RawDataset, cfg: StateConfig, N: int, stride: int = 1
) -> TrajectorySet:
    """Carve a record into overlapping rollout windows.

    Windows of N+1 samples start at state indices 0, stride, 2*stride, ...
    so the window count is B = floor((K' - N - 1) / stride) + 1 where
    K' = K - m is the number of valid states.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if N < 1:
        raise ValueError("N must be >= 1")
    states, offset = build_states(ds.outputs, cfg)
    Kp = states.shape[0]
    if Kp < N + 1:
        raise InsufficientSamplesError(
            f"record gives {Kp} states but a window needs {N + 1}"
        )
    starts = np.arange(0, Kp - N, stride)
    x = np.stack([states[s : s + N + 1] for s in starts])
    u = np.stack([ds.inputs[offset + s : offset + s + N + 1] for s in starts])
    return TrajectorySet(u=u, x=x)
