"""TSK inference, additive composition, the multi-input baseline, counting,
and model-file round-trips."""

import numpy as np
import pytest

from xfode.errors import DimensionMismatchError
from xfode.fuzzy_models import (
    AdditiveDynamics,
    FodeDynamics,
    FuzzyDynamicsModel,
    SingleInputFls,
    additive_infer,
    count_parameters,
    fls_infer,
    fls_infer_two_rule,
    fode_infer,
    init_additive,
    init_fode,
    load_model,
    save_model,
    transform_to_normalized,
)
from xfode.membership import (
    FREE_GAUSS,
    PS1,
    PS2,
    PS3,
    AntecedentChain,
    decode,
    init_chain,
    memberships,
    softplus,
    softplus_inverse,
)


def _fls(strategy, P, consequents, c0=0.0, spread=1.0):
    raw = np.concatenate([[c0], softplus_inverse(np.full(P + 1, spread))])
    return SingleInputFls(AntecedentChain(strategy, P, raw), np.asarray(consequents, float))


def test_fls_symmetric_average():
    # halfway between two triangle centers both grades are 0.5
    cons = np.zeros((2, 1, 2))
    cons[0, 0, 1] = 1.0  # rule 0 constant 1
    cons[1, 0, 1] = 3.0  # rule 1 constant 3
    fls = _fls(PS1, 2, cons)
    out = fls_infer(fls, 0.5)
    assert out == pytest.approx([2.0])


def test_fls_single_rule_affine():
    # at a center only that rule fires: d = 2 * z + 1 at z = 3
    cons = np.zeros((2, 1, 2))
    cons[0] = [[2.0, 1.0]]
    fls = _fls(PS1, 2, cons, c0=3.0)
    assert fls_infer(fls, 3.0) == pytest.approx([7.0])


def test_fls_batched_matches_scalar():
    rng = np.random.default_rng(0)
    fls = _fls(PS2, 4, rng.normal(size=(4, 3, 2)))
    z = rng.uniform(-1, 5, 20)
    batch = fls_infer(fls, z)
    for i, zi in enumerate(z):
        assert np.allclose(batch[i], fls_infer(fls, zi))


def _random_fls(strategy, P, n_x, rng, scale=0.25):
    # unit-scale setup: centers near [-1, 1], consequent values order one
    chain = init_chain(strategy, P, -1.0, 1.0)
    chain.raw = chain.raw + rng.normal(0, 0.25, chain.raw.shape)
    return SingleInputFls(chain, rng.uniform(-scale, scale, (P, n_x, 2)))


def test_two_rule_equals_full_sum_for_hard_partitions():
    rng = np.random.default_rng(1)
    for strategy in (PS1, PS3):
        for _ in range(30):
            fls = _random_fls(strategy, 5, 2, rng)
            c = decode(fls.chain).centers
            z = rng.uniform(c[0] - 1, c[-1] + 1, 200)
            assert np.array_equal(fls_infer(fls, z), fls_infer_two_rule(fls, z))


def test_two_rule_close_for_soft_partition():
    rng = np.random.default_rng(2)
    for _ in range(30):
        fls = _random_fls(PS2, 5, 2, rng)
        c = decode(fls.chain).centers
        z = rng.uniform(c[0], c[-1], 200)
        diff = np.abs(fls_infer(fls, z) - fls_infer_two_rule(fls, z))
        assert diff.max() < 5e-4


def test_fls_normalization_invariance():
    # scaling all grades by one positive constant cannot change the output;
    # check against an unnormalized implementation scaled by hand
    rng = np.random.default_rng(3)
    fls = _random_fls(PS2, 5, 2, rng)
    mfs = decode(fls.chain)
    z = rng.uniform(mfs.centers[0], mfs.centers[-1], 50)
    mu = memberships(mfs, z)
    d = fls.consequents[:, :, 0] * z[:, None, None] + fls.consequents[:, :, 1]
    for scale in (0.25, 7.0):
        ref = (scale * mu[..., None] * d).sum(1) / (scale * mu).sum(1)[:, None]
        assert np.allclose(ref, fls_infer(fls, z), atol=1e-12)


def test_fls_output_in_active_hull():
    rng = np.random.default_rng(4)
    for strategy in (PS1, PS3):
        fls = _random_fls(strategy, 5, 1, rng)
        mfs = decode(fls.chain)
        c = mfs.centers
        z = rng.uniform(c[0], c[-1], 300)
        from xfode.membership import active_pair

        p_star, _ = active_pair(mfs, z)
        d = fls.consequents[:, 0, 0] * z[:, None] + fls.consequents[:, 0, 1]
        d2 = np.take_along_axis(d, np.stack([p_star, p_star + 1], -1), axis=-1)
        out = fls_infer(fls, z)[:, 0]
        assert np.all(out >= d2.min(-1) - 1e-12)
        assert np.all(out <= d2.max(-1) + 1e-12)


def test_fls_continuity_on_dense_grid():
    rng = np.random.default_rng(5)
    for strategy in (PS1, PS2, PS3, FREE_GAUSS):
        fls = _random_fls(strategy, 5, 1, rng)
        c = decode(fls.chain).centers
        z = np.linspace(c[0] - 0.5, c[-1] + 0.5, 4001)
        out = fls_infer(fls, z)[:, 0]
        step = z[1] - z[0]
        # generous Lipschitz ballpark: consequent scale over min spread
        jumps = np.abs(np.diff(out))
        assert jumps.max() < 50 * step + 1e-3


def test_additive_zero_consequents():
    rng = np.random.default_rng(6)
    dyn = init_additive(PS1, 3, 2, 1, [(-1, 1)] * 3, rng, consequent_scale=0.0)
    z = rng.normal(size=(10, 3))
    assert np.array_equal(additive_infer(dyn, z), np.zeros((10, 2)))


def test_additive_block_sum():
    blocks = []
    for const in (np.array([1.0, 0.0]), np.array([0.5, -1.0])):
        cons = np.zeros((2, 2, 2))
        cons[:, :, 1] = const
        blocks.append(SingleInputFls(init_chain(PS1, 2, -1, 1), cons))
    dyn = AdditiveDynamics.from_blocks(blocks, n_u=0)
    out = additive_infer(dyn, np.array([[0.3, -0.4]]))
    assert np.allclose(out, [[1.5, -1.0]])


def test_additive_matches_per_block_queries():
    rng = np.random.default_rng(7)
    for strategy in (PS1, PS2, PS3, FREE_GAUSS):
        dyn = init_additive(strategy, 4, 2, 2, [(-1.5, 1.5)] * 4, rng)
        dyn.raw += rng.normal(0, 0.3, dyn.raw.shape)
        z = rng.normal(0, 1, (25, 4))
        expect = np.zeros((25, 2))
        for i, block in enumerate(dyn.blocks):
            expect += fls_infer(block, z[:, i])
        total, per_block = additive_infer(dyn, z, return_contributions=True)
        assert np.allclose(total, expect, atol=1e-12)
        assert np.allclose(per_block.sum(axis=1), total, atol=1e-12)


def test_additive_dimension_check():
    rng = np.random.default_rng(8)
    dyn = init_additive(PS1, 3, 2, 1, [(-1, 1)] * 3, rng)
    with pytest.raises(DimensionMismatchError):
        additive_infer(dyn, np.zeros((5, 4)))


# -- multi-input baseline ----------------------------------------------------


def _reference_fode(dyn, Z):
    """Straightforward loop implementation used as an independent oracle."""
    sig = np.log(1 + np.exp(dyn.sigma_raw))
    out = np.zeros((Z.shape[0], dyn.n_x))
    for b, z in enumerate(Z):
        w = np.zeros(dyn.P)
        for p in range(dyn.P):
            w[p] = np.prod(
                np.exp(-((z - dyn.centers[p]) ** 2) / (2 * sig[p] ** 2))
            )
        num = np.zeros(dyn.n_x)
        for p in range(dyn.P):
            d_p = dyn.slopes[p] @ z + dyn.intercepts[p]
            num += w[p] * d_p
        out[b] = num / w.sum()
    return out


def test_fode_single_rule_is_affine():
    rng = np.random.default_rng(9)
    dyn = init_fode(2, 2, 1, [(-1, 1)] * 3, rng)
    # collapse to one effective rule by making both rules identical
    dyn.centers[1] = dyn.centers[0]
    dyn.sigma_raw[1] = dyn.sigma_raw[0]
    dyn.slopes[1] = dyn.slopes[0]
    dyn.intercepts[1] = dyn.intercepts[0]
    z = rng.normal(size=(10, 3))
    expect = np.einsum("oi,bi->bo", dyn.slopes[0], z) + dyn.intercepts[0]
    assert np.allclose(fode_infer(dyn, z), expect, atol=1e-12)


def test_fode_shared_consequent_invariance():
    rng = np.random.default_rng(10)
    dyn = init_fode(5, 2, 2, [(-1, 1)] * 4, rng)
    dyn.slopes[:] = dyn.slopes[0]
    dyn.intercepts[:] = dyn.intercepts[0]
    z = rng.normal(size=(10, 4))
    expect = np.einsum("oi,bi->bo", dyn.slopes[0], z) + dyn.intercepts[0]
    assert np.allclose(fode_infer(dyn, z), expect, atol=1e-10)


def test_fode_matches_reference_implementation():
    rng = np.random.default_rng(11)
    dyn = init_fode(5, 3, 1, [(-2, 2)] * 4, rng)
    dyn.centers += rng.normal(0, 0.4, dyn.centers.shape)
    z = rng.uniform(-2, 2, (40, 4))
    assert np.allclose(fode_infer(dyn, z), _reference_fode(dyn, z), atol=1e-10)


# -- parameter counting -------------------------------------------------------


def _cfg_counts(n_y, n_u, m, P=5):
    n_x = (m + 1) * n_y
    n_z = n_x + n_u
    rng = np.random.default_rng(0)
    domains = [(-1, 1)] * n_z
    xfode = init_additive(PS1, P, n_x, n_u, domains, rng)
    afode = init_additive(FREE_GAUSS, P, n_x, n_u, domains, rng)
    fode = init_fode(P, n_x, n_u, domains, rng)
    return (
        count_parameters(xfode),
        count_parameters(afode),
        count_parameters(fode),
    )


def test_count_closed_forms():
    rng = np.random.default_rng(1)
    for n_y, n_u, m, P in [(1, 1, 2, 5), (1, 2, 1, 3), (2, 2, 1, 4), (1, 1, 0, 2)]:
        n_x = (m + 1) * n_y
        n_z = n_x + n_u
        domains = [(-1, 1)] * n_z
        assert count_parameters(init_additive(PS1, P, n_x, n_u, domains, rng)) == n_z * (
            2 + P + 2 * P * n_x
        )
        assert count_parameters(
            init_additive(FREE_GAUSS, P, n_x, n_u, domains, rng)
        ) == n_z * (2 * P + 2 * P * n_x)
        assert count_parameters(init_fode(P, n_x, n_u, domains, rng)) == (
            2 * P * n_z + P * (n_z + 1) * n_x
        )


def test_published_parameter_counts():
    # single-output, m=2 (three benchmark problems share this shape)
    assert _cfg_counts(1, 1, 2) == (148, 160, 115)
    # single-output, two inputs, m=1
    assert _cfg_counts(1, 2, 1) == (108, 120, 90)
    # two outputs, two inputs, m=1
    assert _cfg_counts(2, 2, 1) == (282, 300, 200)


# -- serialization ------------------------------------------------------------


def _model(kind, strategy, rng):
    if kind == "fode":
        dyn = init_fode(5, 3, 1, [(-1, 1)] * 4, rng)
    else:
        dyn = init_additive(strategy, 5, 3, 1, [(-1, 1)] * 4, rng)
        dyn.raw += rng.normal(0, 0.3, dyn.raw.shape)
    return FuzzyDynamicsModel(kind=kind, dynamics=dyn, n_u=1, n_y=1, m=2, sr_mode="sr2")


@pytest.mark.parametrize(
    "kind,strategy",
    [("xfode", PS1), ("xfode", PS2), ("xfode", PS3), ("afode", FREE_GAUSS), ("fode", None)],
)
def test_save_load_bit_exact(tmp_path, kind, strategy):
    rng = np.random.default_rng(12)
    model = _model(kind, strategy, rng)
    model.metadata = {"seed": 12, "epochs": 0, "final_loss": 0.5}
    path = str(tmp_path / "m.json")
    save_model(model, path)
    back = load_model(path)
    assert np.array_equal(back.dynamics.get_flat(), model.dynamics.get_flat())
    assert back.kind == model.kind and back.m == model.m
    z = rng.normal(size=(20, 4))
    assert np.array_equal(back.dynamics.infer(z), model.dynamics.infer(z))


def test_flat_roundtrip():
    rng = np.random.default_rng(13)
    for kind, strategy in [("xfode", PS1), ("afode", FREE_GAUSS), ("fode", None)]:
        dyn = _model(kind, strategy, rng).dynamics
        flat = dyn.get_flat()
        new = rng.normal(size=flat.shape)
        dyn.set_flat(new)
        assert np.array_equal(dyn.get_flat(), new)


def test_transform_to_normalized_equivalence():
    rng = np.random.default_rng(14)
    for strategy in (PS1, PS2, PS3, FREE_GAUSS):
        dyn = init_additive(strategy, 4, 2, 1, [(-1.5, 1.5)] * 3, rng)
        dyn.raw += rng.normal(0, 0.2, dyn.raw.shape)
        dyn.slopes += rng.normal(0, 0.2, dyn.slopes.shape)
        shift = rng.normal(0, 1, 3)
        scale = rng.uniform(0.5, 2.0, 3)
        out_scale = rng.uniform(0.5, 2.0, 2)
        prim = transform_to_normalized(dyn, shift, scale, out_scale)
        zp = rng.normal(0, 1, (30, 3))
        raw_out = dyn.infer(shift + scale * zp)
        assert np.allclose(prim.infer(zp), raw_out / out_scale, atol=1e-10)
