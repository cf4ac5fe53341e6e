"""Membership families, partition couplings, and the softplus machinery."""

import numpy as np
import pytest

from xfode.errors import NonFiniteParameterError, NonPositiveInputError
from xfode.membership import (
    FREE_GAUSS,
    PS1,
    PS2,
    PS3,
    AntecedentChain,
    active_pair,
    decode,
    evaluate,
    evaluate_all,
    init_chain,
    memberships,
    mf_grid,
    softplus,
    softplus_inverse,
)


def _chain(strategy, P, c0, spreads_decoded):
    raw = np.concatenate([[c0], softplus_inverse(np.asarray(spreads_decoded))])
    return AntecedentChain(strategy, P, raw)


# -- softplus ---------------------------------------------------------------


def test_softplus_closed_forms():
    assert softplus(0.0) == pytest.approx(np.log(2), abs=1e-15)
    assert softplus(50.0) == pytest.approx(50.0, abs=1e-12)
    assert softplus_inverse(1.0) == pytest.approx(np.log(np.e - 1), abs=1e-12)


def test_softplus_roundtrip_and_stability():
    v = np.concatenate([10.0 ** np.arange(-10, 3.0), [0.5, 2.0, 123.0]])
    back = softplus(softplus_inverse(v))
    assert np.all(np.abs(back - v) / v < 1e-10)
    # no overflow anywhere in a wide raw range
    raw = np.linspace(-1e3, 1e3, 2001)
    assert np.isfinite(softplus(raw)).all()
    assert softplus(1000.0) == 1000.0


def test_softplus_inverse_rejects_nonpositive():
    with pytest.raises(NonPositiveInputError):
        softplus_inverse(0.0)


# -- decode -----------------------------------------------------------------


def test_decode_ps1_chain_arithmetic():
    mfs = decode(_chain(PS1, 3, 0.0, [1.0, 1.0, 1.0, 1.0]))
    assert np.allclose(mfs.params["left"], [-1, 0, 1], atol=1e-9)
    assert np.allclose(mfs.params["center"], [0, 1, 2], atol=1e-9)
    assert np.allclose(mfs.params["right"], [1, 2, 3], atol=1e-9)


def test_decode_ps2_four_sigma_spacing():
    mfs = decode(_chain(PS2, 3, 0.0, [0.5, 0.5, 0.5, 0.5]))
    assert np.allclose(mfs.centers, [0, 2, 4], atol=1e-9)
    assert np.allclose(mfs.params["sigma_l"], 0.5, atol=1e-12)
    assert np.allclose(mfs.params["sigma_r"], 0.5, atol=1e-12)


def test_decode_adjacent_coupling():
    rng = np.random.default_rng(2)
    mfs = decode(AntecedentChain(PS1, 5, rng.normal(0, 2, 7)))
    # triangles share support edges with their neighbors' centers
    assert np.array_equal(mfs.params["right"][:-1], mfs.centers[1:])
    assert np.array_equal(mfs.params["left"][1:], mfs.centers[:-1])
    mfs = decode(AntecedentChain(PS2, 5, rng.normal(0, 2, 7)))
    assert np.array_equal(mfs.params["sigma_l"][1:], mfs.params["sigma_r"][:-1])
    gaps = np.diff(mfs.centers)
    assert np.allclose(gaps, 4 * mfs.params["sigma_r"][:-1], rtol=1e-12)


def test_decode_centers_strictly_increasing_property():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        strategy = rng.choice([PS1, PS2, PS3])
        P = int(rng.integers(2, 8))
        mfs = decode(AntecedentChain(strategy, P, rng.normal(0, 3, P + 2)))
        assert np.all(np.diff(mfs.centers) > 0)


def test_decode_rejects_nonfinite():
    raw = np.zeros(7)
    raw[3] = np.nan
    with pytest.raises(NonFiniteParameterError):
        decode(AntecedentChain(PS1, 5, raw))


# -- evaluation -------------------------------------------------------------


def test_trimf_values():
    # middle triangle of this chain is (l, c, r) = (0, 1, 2)
    mfs = decode(_chain(PS1, 3, 0.0, [1.0, 1.0, 1.0, 1.0]))
    assert evaluate(mfs, 1, 1.0) == pytest.approx(1.0)
    assert evaluate(mfs, 1, 0.5) == pytest.approx(0.5)
    assert evaluate(mfs, 1, 3.0) == 0.0


def test_trimf_shoulders():
    mfs = decode(_chain(PS1, 3, 0.0, [1.0, 1.0, 1.0, 1.0]))
    assert evaluate(mfs, 0, -5.0) == 1.0
    assert evaluate(mfs, 2, 5.0) == 1.0


def test_gauss2_asymmetric_tails():
    mfs = decode(_chain(PS2, 2, 0.0, [1.0, 1.0, 2.0]))
    # first MF: c=0, sigma_l=1, sigma_r=1; grades at 2 sigma
    assert evaluate(mfs, 0, 0.0) == pytest.approx(1.0)
    assert evaluate(mfs, 0, -2.0) == pytest.approx(np.exp(-2))
    assert evaluate(mfs, 0, 2.0) == pytest.approx(np.exp(-2))


def test_ps3_definitional_complements():
    rng = np.random.default_rng(4)
    mfs = decode(AntecedentChain(PS3, 3, rng.normal(0, 1, 5)))
    c1 = mfs.centers[1]
    assert evaluate(mfs, 0, c1) == pytest.approx(0.0, abs=1e-15)
    assert evaluate(mfs, 0, c1 - 50.0) == pytest.approx(1.0)
    assert evaluate(mfs, 2, c1) == pytest.approx(0.0, abs=1e-15)
    # left of the anchor, first complement mirrors it exactly
    z = c1 - 0.7
    assert evaluate(mfs, 0, z) + evaluate(mfs, 1, z) == 1.0


def test_grades_bounded_everywhere():
    rng = np.random.default_rng(8)
    for strategy in (PS1, PS2, PS3, FREE_GAUSS):
        n = 2 * 4 if strategy == FREE_GAUSS else 6
        mfs = decode(AntecedentChain(strategy, 4, rng.normal(0, 2, n)))
        z = rng.uniform(-50, 50, 500)
        mu = memberships(mfs, z)
        assert np.all(mu >= 0) and np.all(mu <= 1)


# -- init -------------------------------------------------------------------


def test_init_ps2_arithmetic():
    mfs = decode(init_chain(PS2, 5, -1.0, 1.0))
    assert np.allclose(mfs.params["sigma_r"], 0.125, rtol=1e-12)
    assert np.allclose(mfs.centers, [-1, -0.5, 0, 0.5, 1], atol=1e-9)


def test_init_ps1_arithmetic():
    mfs = decode(init_chain(PS1, 5, -1.0, 1.0))
    assert np.allclose(mfs.centers, [-1, -0.5, 0, 0.5, 1], atol=1e-9)
    assert np.allclose(
        mfs.params["right"] - mfs.centers, 0.5, rtol=1e-9
    )


def test_init_degenerate_domain_fallback():
    mfs = decode(init_chain(PS1, 3, 2.0, 2.0))
    assert mfs.centers[0] == pytest.approx(1.5, abs=1e-9)
    assert mfs.centers[-1] == pytest.approx(2.5, abs=1e-9)


def test_init_chain_decodes_valid_for_random_domains():
    rng = np.random.default_rng(13)
    for _ in range(200):
        lo = rng.normal(0, 10)
        hi = lo + abs(rng.normal(0, 5)) + 1e-3
        strategy = rng.choice([PS1, PS2, PS3, FREE_GAUSS])
        P = int(rng.integers(2, 7))
        mfs = decode(init_chain(strategy, P, lo, hi))
        assert np.all(np.diff(mfs.centers) > 0)
        assert mfs.centers[0] == pytest.approx(lo, abs=1e-6)
        assert mfs.centers[-1] == pytest.approx(hi, abs=1e-6)


# -- active pair ------------------------------------------------------------


def test_active_pair_segments():
    mfs = decode(_chain(PS1, 5, 0.0, np.ones(6)))  # centers 0..4
    assert active_pair(mfs, 1.5) == (1, False)
    assert active_pair(mfs, 2.0) == (2, False)  # tie goes right
    assert active_pair(mfs, -10.0) == (0, True)
    assert active_pair(mfs, 10.0) == (3, True)


def test_active_pair_covers_all_firing_rules():
    # every nonzero grade must belong to the returned pair
    rng = np.random.default_rng(3)
    for strategy in (PS1, PS3):
        for _ in range(100):
            P = int(rng.choice([2, 3, 4, 5, 7]))
            mfs = decode(AntecedentChain(strategy, P, rng.normal(0, 1.5, P + 2)))
            z = rng.uniform(mfs.centers[0] - 3, mfs.centers[-1] + 3, 100)
            p_star, _ = active_pair(mfs, z)
            mu = memberships(mfs, z)
            for i in range(z.size):
                live = np.nonzero(mu[i])[0]
                assert set(live) <= {p_star[i], p_star[i] + 1}


# -- partition invariants (module-level; acceptance re-runs these at scale) --


def test_ps1_partition_of_unity():
    rng = np.random.default_rng(21)
    for _ in range(100):
        mfs = decode(AntecedentChain(PS1, 5, rng.normal(0, 2, 7)))
        z = rng.uniform(mfs.centers[0], mfs.centers[-1], 100)
        total = memberships(mfs, z).sum(axis=-1)
        assert np.max(np.abs(total - 1)) < 1e-12


def test_ps3_complement_segments_sum_exactly():
    rng = np.random.default_rng(22)
    for _ in range(100):
        mfs = decode(AntecedentChain(PS3, 5, rng.normal(0, 1.5, 7)))
        c = mfs.centers
        for anchor in (1, 3):
            comp = anchor + 1
            hi = 0.5 * (c[anchor] + c[anchor + 2]) if anchor + 2 <= 4 else c[-1] + 5
            z = rng.uniform(c[anchor], hi, 50)
            mu = memberships(mfs, z)
            assert np.all(mu[:, anchor] + mu[:, comp] == 1.0)


def test_evaluate_index_range():
    mfs = decode(init_chain(PS1, 3, 0, 1))
    with pytest.raises(IndexError):
        evaluate(mfs, 3, 0.5)


def test_mf_grid_schema():
    mfs = decode(init_chain(PS2, 5, -1, 1))
    z, grades = mf_grid(mfs)
    assert z.shape == (501,) and grades.shape == (501, 5)
    span = mfs.centers[-1] - mfs.centers[0]
    assert z[0] == pytest.approx(mfs.centers[0] - span / 10)
    assert z[-1] == pytest.approx(mfs.centers[-1] + span / 10)


def test_membership_gradients_match_finite_differences():
    # d(mu)/d(raw) through decode, checked per strategy at safe points
    rng = np.random.default_rng(30)
    h = 1e-6
    for strategy in (PS1, PS2, PS3, FREE_GAUSS):
        P = 5
        n = 2 * P if strategy == FREE_GAUSS else P + 2
        raw = rng.normal(0, 1.0, n)
        chain = AntecedentChain(strategy, P, raw)
        mfs = decode(chain)
        z = rng.uniform(mfs.centers[0], mfs.centers[-1], 7)
        ev = evaluate_all(mfs, z)
        for p in range(P):
            mu_bar = np.zeros((7, P))
            mu_bar[:, p] = 1.0
            _, bars = ev.vjp(mu_bar)
            from xfode.membership import decoded_bars_to_raw

            g = decoded_bars_to_raw(mfs, bars) / 7  # mean over the z batch
            fd = np.zeros(n)
            for i in range(n):
                rp, rm = raw.copy(), raw.copy()
                rp[i] += h
                rm[i] -= h
                up = memberships(decode(AntecedentChain(strategy, P, rp)), z)[:, p]
                um = memberships(decode(AntecedentChain(strategy, P, rm)), z)[:, p]
                fd[i] = (up - um).mean() / (2 * h)
            assert np.allclose(g, fd, atol=2e-5), (strategy, p)
