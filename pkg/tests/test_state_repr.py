"""State construction (lagged and incremental), windows, and their algebra."""

import numpy as np
import pytest

from xfode.dataset import RawDataset
from xfode.errors import InsufficientSamplesError
from xfode.state_repr import (
    SR1,
    SR2,
    StateConfig,
    build_states,
    build_trajectories,
    lag_to_difference_matrix,
    output_of_state,
)


def test_sr2_direct_differencing():
    states, offset = build_states(np.array([[1.0], [2.0], [4.0]]), StateConfig(SR2, 2))
    assert offset == 2
    assert np.array_equal(states, [[4.0, 2.0, 1.0]])


def test_sr1_direct_stacking():
    states, offset = build_states(np.array([[1.0], [2.0], [4.0]]), StateConfig(SR1, 2))
    assert offset == 2
    assert np.array_equal(states, [[4.0, 2.0, 1.0]])


def test_m_zero_identity():
    y = np.arange(6.0).reshape(-1, 2)
    for mode in (SR1, SR2):
        states, offset = build_states(y, StateConfig(mode, 0))
        assert offset == 0
        assert np.array_equal(states, y)


def test_insufficient_samples():
    with pytest.raises(InsufficientSamplesError):
        build_states(np.ones((2, 1)), StateConfig(SR2, 2))


def test_output_of_state():
    assert np.array_equal(output_of_state(np.array([4.0, 2.0, 1.0]), 1), [4.0])
    assert np.array_equal(
        output_of_state(np.array([1.0, 2.0, 3.0, 4.0]), 2), [1.0, 2.0]
    )


def test_output_of_state_roundtrip():
    rng = np.random.default_rng(0)
    y = rng.normal(size=(40, 2))
    for mode in (SR1, SR2):
        cfg = StateConfig(mode, 3)
        states, offset = build_states(y, cfg)
        assert np.allclose(output_of_state(states, 2), y[offset:])


def test_sr2_is_integer_transform_of_sr1():
    # m=2 weights are the signed binomials of repeated differencing
    T = lag_to_difference_matrix(2)
    assert np.array_equal(T, [[1, 0, 0], [1, -1, 0], [1, -2, 1]])
    rng = np.random.default_rng(5)
    y = rng.normal(size=(30, 1))
    for m in (1, 2, 4):
        s1, _ = build_states(y, StateConfig(SR1, m))
        s2, _ = build_states(y, StateConfig(SR2, m))
        assert np.allclose(s2, s1 @ lag_to_difference_matrix(m).T, atol=1e-12)


def test_sr2_transform_multichannel():
    rng = np.random.default_rng(6)
    y = rng.normal(size=(25, 2))
    m = 2
    s1, _ = build_states(y, StateConfig(SR1, m))
    s2, _ = build_states(y, StateConfig(SR2, m))
    T = np.kron(lag_to_difference_matrix(m), np.eye(2))
    assert np.allclose(s2, s1 @ T.T, atol=1e-12)


def _dataset(K, n_u=1, n_y=1, seed=0):
    rng = np.random.default_rng(seed)
    return RawDataset(rng.normal(size=(K, n_u)), rng.normal(size=(K, n_y)))


def test_window_counts_non_overlapping():
    # 41 valid states, N=20, stride=20 -> 2 windows
    ds = _dataset(43)
    S = build_trajectories(ds, StateConfig(SR2, 2), N=20, stride=20)
    assert S.B == 2 and S.N == 20


def test_window_counts_overlapping():
    ds = _dataset(24)
    S = build_trajectories(ds, StateConfig(SR2, 2), N=20, stride=1)
    assert S.B == 2


def test_window_consistency_oracle():
    # every emitted window must match states re-derived from the raw outputs
    ds = _dataset(60, seed=9)
    for mode in (SR1, SR2):
        cfg = StateConfig(mode, 2)
        S = build_trajectories(ds, cfg, N=5, stride=3)
        states, offset = build_states(ds.outputs, cfg)
        for j in range(S.B):
            s = j * 3
            assert np.array_equal(S.x[j], states[s : s + 6])
            assert np.array_equal(S.u[j], ds.inputs[offset + s : offset + s + 6])


def test_window_insufficient():
    ds = _dataset(20)
    with pytest.raises(InsufficientSamplesError):
        build_trajectories(ds, StateConfig(SR2, 2), N=20)
