"""First-order TSK fuzzy models of the state update.

Three model kinds share one inference rule (normalized weighted average of
affine rule consequents) but differ in how the antecedent space is built:

* xfode: one single-input FLS per combined-input dimension, antecedents
  partitioned (ps1/ps2/ps3); block outputs are summed.
* afode: same additive layout with free Gaussian antecedents.
* fode: a single multi-input FLS; rule firing is the product of per-dimension
  Gaussian grades and consequents are affine in the full input vector.

The additive kinds store parameters stacked across blocks so a whole mini-
batch step is a handful of array ops; per-block views are exposed for
inspection. Every model offers a flat parameter vector (antecedents first,
then consequents, block by block) which the trainer and the serializer use.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import membership as mb
from .dataset import NormStats
from .errors import DimensionMismatchError
from .membership import EPS_DENOM, AntecedentChain, DecodedMFs, decode

FORMAT_VERSION = 1


@dataclass
class SingleInputFls:
    """One rule set over a scalar input: antecedent chain + P affine consequents.

    consequents has shape (P, n_x, 2): [..., 0] slope, [..., 1] intercept,
    so rule p contributes a_p * z + b_p to every output dimension.
    """

    chain: AntecedentChain
    consequents: np.ndarray

    def __post_init__(self):
        self.consequents = np.asarray(self.consequents, dtype=float)
        if self.consequents.ndim != 3 or self.consequents.shape[::2] != (
            self.chain.P,
            2,
        ):
            raise DimensionMismatchError(
                f"consequents must be (P={self.chain.P}, n_x, 2), "
                f"got {self.consequents.shape}"
            )

    @property
    def P(self) -> int:
        return self.chain.P

    @property
    def n_x(self) -> int:
        return self.consequents.shape[1]


def _consequent_values(slopes, intercepts, z):
    """Affine rule outputs d_p(z); z (...,), slopes/intercepts (..., P, n_x)."""
    return slopes * z[..., None, None] + intercepts


def _normalized_weights(mu, centers, z):
    """mu / sum(mu) guarded: all-but-vanished firing snaps to the nearest rule."""
    s = mu.sum(axis=-1)
    bad = s < EPS_DENOM
    if np.any(bad):
        nearest = np.argmin(np.abs(z[..., None] - centers), axis=-1)
        onehot = np.zeros_like(mu)
        np.put_along_axis(onehot, nearest[..., None], 1.0, axis=-1)
        w = np.where(bad[..., None], onehot, mu / np.where(bad, 1.0, s)[..., None])
    else:
        w = mu / s[..., None]
    return w, s, bad


def _normalized_average(mu, d, centers, z):
    """sum(mu * d) / sum(mu) with the vanished-firing guard.

    Keeping the division last means dropping exactly-zero grades from the
    sums cannot change the result, so two-rule and full-sum evaluation agree
    bit for bit on hard partitions.
    """
    num = (mu[..., None] * d).sum(axis=-2)
    den = mu.sum(axis=-1)
    bad = den < EPS_DENOM
    out = num / np.where(bad, 1.0, den)[..., None]
    if np.any(bad):
        nearest = np.argmin(np.abs(z[..., None] - centers), axis=-1)
        fallback = np.take_along_axis(d, nearest[..., None, None], axis=-2)[..., 0, :]
        out = np.where(bad[..., None], fallback, out)
    return out


def fls_infer(fls: SingleInputFls, z):
    """Normalized TSK output over all P rules; z scalar or array (...,).

    Returns (..., n_x).
    """
    z = np.asarray(z, dtype=float)
    mfs = decode(fls.chain)
    mu = mb.memberships(mfs, z)
    d = _consequent_values(fls.consequents[..., 0], fls.consequents[..., 1], z)
    return _normalized_average(mu, d, mfs.centers, z)


def fls_infer_two_rule(fls: SingleInputFls, z):
    """TSK output using only the two rules that can fire at z.

    For partitioned antecedents this equals fls_infer exactly (ps1/ps3) or to
    within the neglected Gaussian tails (ps2).
    """
    z = np.asarray(z, dtype=float)
    mfs = decode(fls.chain)
    p_star, _ = mb.active_pair(mfs, z)
    mu = mb.memberships(mfs, z)
    pair = np.stack([np.asarray(p_star), np.asarray(p_star) + 1], axis=-1)
    mu2 = np.take_along_axis(mu, pair, axis=-1)
    d = _consequent_values(fls.consequents[..., 0], fls.consequents[..., 1], z)
    d2 = np.take_along_axis(d, pair[..., None], axis=-2)
    c2 = np.take_along_axis(np.broadcast_to(mfs.centers, mu.shape), pair, axis=-1)
    return _normalized_average(mu2, d2, c2, z)


class AdditiveDynamics:
    """Sum of single-input FLS blocks, one per combined-input dimension.

    Parameters are stored stacked: raw antecedents (n_z, n_raw), slopes and
    intercepts (n_z, P, n_x).
    """

    def __init__(self, strategy, P, raw, slopes, intercepts, n_u):
        self.strategy = strategy
        self.P = P
        self.raw = np.asarray(raw, dtype=float)
        self.slopes = np.asarray(slopes, dtype=float)
        self.intercepts = np.asarray(intercepts, dtype=float)
        self.n_u = n_u
        n_z = self.raw.shape[0]
        if self.slopes.shape != (n_z, P, self.n_x) or self.intercepts.shape != (
            n_z,
            P,
            self.n_x,
        ):
            raise DimensionMismatchError("consequent arrays disagree with (n_z, P, n_x)")
        if self.n_x + n_u != n_z:
            raise DimensionMismatchError(
                f"n_z={n_z} must equal n_x={self.n_x} + n_u={n_u}"
            )

    @property
    def n_z(self) -> int:
        return self.raw.shape[0]

    @property
    def n_x(self) -> int:
        return self.slopes.shape[2]

    @property
    def blocks(self) -> list[SingleInputFls]:
        """Per-dimension views (shared memory) as standalone FLS objects."""
        out = []
        for i in range(self.n_z):
            cons = np.stack([self.slopes[i], self.intercepts[i]], axis=-1)
            out.append(
                SingleInputFls(
                    AntecedentChain(self.strategy, self.P, self.raw[i]), cons
                )
            )
        return out

    @classmethod
    def from_blocks(cls, blocks: list[SingleInputFls], n_u: int) -> "AdditiveDynamics":
        strategy = blocks[0].chain.strategy
        P = blocks[0].P
        for b in blocks:
            if b.chain.strategy != strategy or b.P != P:
                raise DimensionMismatchError("all blocks must share strategy and P")
        raw = np.stack([b.chain.raw for b in blocks])
        slopes = np.stack([b.consequents[..., 0] for b in blocks])
        intercepts = np.stack([b.consequents[..., 1] for b in blocks])
        return cls(strategy, P, raw, slopes, intercepts, n_u)

    def decoded(self) -> DecodedMFs:
        return decode(AntecedentChain(self.strategy, self.P, self.raw))

    # -- flat parameter vector: per block, raw antecedents then consequents --

    def get_flat(self) -> np.ndarray:
        per_block = [
            np.concatenate(
                [
                    self.raw[i],
                    np.stack(
                        [self.slopes[i], self.intercepts[i]], axis=-1
                    ).ravel(),
                ]
            )
            for i in range(self.n_z)
        ]
        return np.concatenate(per_block)

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=float)
        n_raw = self.raw.shape[1]
        n_cons = self.P * self.n_x * 2
        step = n_raw + n_cons
        if flat.size != step * self.n_z:
            raise DimensionMismatchError(
                f"flat vector has {flat.size} entries, expected {step * self.n_z}"
            )
        for i in range(self.n_z):
            seg = flat[i * step : (i + 1) * step]
            self.raw[i] = seg[:n_raw]
            cons = seg[n_raw:].reshape(self.P, self.n_x, 2)
            self.slopes[i] = cons[..., 0]
            self.intercepts[i] = cons[..., 1]

    def _flat_from_parts(self, raw_bar, slope_bar, intercept_bar) -> np.ndarray:
        per_block = [
            np.concatenate(
                [
                    raw_bar[i],
                    np.stack([slope_bar[i], intercept_bar[i]], axis=-1).ravel(),
                ]
            )
            for i in range(self.n_z)
        ]
        return np.concatenate(per_block)

    # -- batched inference ---------------------------------------------------

    def infer(self, Z, mfs=None, return_blocks=False):
        """State update for inputs Z (..., n_z) -> (..., n_x)."""
        Z = np.asarray(Z, dtype=float)
        if Z.shape[-1] != self.n_z:
            raise DimensionMismatchError(
                f"input has {Z.shape[-1]} dims, model expects {self.n_z}"
            )
        if mfs is None:
            mfs = self.decoded()
        ev = mb.evaluate_all(mfs, Z)
        w, _, _ = _normalized_weights(ev.mu, mfs.centers, Z)
        d = _consequent_values(self.slopes, self.intercepts, Z)
        per_block = (w[..., None] * d).sum(axis=-2)  # (..., n_z, n_x)
        total = per_block.sum(axis=-2)
        if return_blocks:
            return total, per_block
        return total

    def infer_tape(self, Z, mfs):
        """Forward step retaining what the backward pass needs."""
        ev = mb.evaluate_all(mfs, Z)
        w, s, bad = _normalized_weights(ev.mu, mfs.centers, Z)
        d = _consequent_values(self.slopes, self.intercepts, Z)
        per_block = (w[..., None] * d).sum(axis=-2)
        total = per_block.sum(axis=-2)
        return total, (Z, ev, w, s, bad, d)

    def backward_step(self, mfs, tape, g_bar, acc):
        """Adjoint of one step; accumulates parameter gradients into acc.

        g_bar is the adjoint of the step output (..., n_x); returns the
        adjoint of Z (..., n_z).
        """
        Z, ev, w, s, bad, d = tape
        gb = g_bar[..., None, None, :]  # broadcast over blocks and rules
        d_bar = w[..., None] * gb
        acc["slopes"] += (d_bar * Z[..., None, None]).sum(axis=0)
        acc["intercepts"] += d_bar.sum(axis=0)
        w_bar = (gb * d).sum(axis=-1)
        # normalized-weights adjoint; frozen where the guard replaced weights
        s_safe = np.where(bad, 1.0, s)
        mu_bar = (w_bar - (w_bar * w).sum(axis=-1, keepdims=True)) / s_safe[..., None]
        mu_bar = np.where(bad[..., None], 0.0, mu_bar)
        z_bar_mu, bars = ev.vjp(mu_bar)
        acc["raw"] += mb.decoded_bars_to_raw(mfs, bars)
        z_bar_cons = (w * (gb * self.slopes).sum(axis=-1)).sum(axis=-1)
        return z_bar_mu + z_bar_cons


class FodeDynamics:
    """Single multi-input FLS: Gaussian antecedents per rule and dimension,
    product-t-norm firing, consequents affine in the whole input vector."""

    def __init__(self, centers, sigma_raw, slopes, intercepts, n_u):
        self.centers = np.asarray(centers, dtype=float)  # (P, n_z)
        self.sigma_raw = np.asarray(sigma_raw, dtype=float)  # (P, n_z)
        self.slopes = np.asarray(slopes, dtype=float)  # (P, n_x, n_z)
        self.intercepts = np.asarray(intercepts, dtype=float)  # (P, n_x)
        self.n_u = n_u
        P, n_z = self.centers.shape
        if self.sigma_raw.shape != (P, n_z):
            raise DimensionMismatchError("sigma_raw must match centers shape")
        if self.slopes.shape[::2] != (P, n_z) or self.intercepts.shape != (
            P,
            self.n_x,
        ):
            raise DimensionMismatchError("consequent arrays disagree with (P, n_x, n_z)")
        if self.n_x + n_u != n_z:
            raise DimensionMismatchError(
                f"n_z={n_z} must equal n_x={self.n_x} + n_u={n_u}"
            )

    @property
    def P(self) -> int:
        return self.centers.shape[0]

    @property
    def n_z(self) -> int:
        return self.centers.shape[1]

    @property
    def n_x(self) -> int:
        return self.slopes.shape[1]

    def get_flat(self) -> np.ndarray:
        return np.concatenate(
            [
                self.centers.ravel(),
                self.sigma_raw.ravel(),
                self.slopes.ravel(),
                self.intercepts.ravel(),
            ]
        )

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=float)
        sizes = [
            self.centers.size,
            self.sigma_raw.size,
            self.slopes.size,
            self.intercepts.size,
        ]
        if flat.size != sum(sizes):
            raise DimensionMismatchError(
                f"flat vector has {flat.size} entries, expected {sum(sizes)}"
            )
        parts = np.split(flat, np.cumsum(sizes)[:-1])
        self.centers[:] = parts[0].reshape(self.centers.shape)
        self.sigma_raw[:] = parts[1].reshape(self.sigma_raw.shape)
        self.slopes[:] = parts[2].reshape(self.slopes.shape)
        self.intercepts[:] = parts[3].reshape(self.intercepts.shape)

    def _flat_from_parts(self, c_bar, sr_bar, a_bar, b_bar) -> np.ndarray:
        return np.concatenate(
            [c_bar.ravel(), sr_bar.ravel(), a_bar.ravel(), b_bar.ravel()]
        )

    def decoded(self):
        return None  # antecedents are free Gaussians; nothing to chain

    def _firing(self, Z):
        sig = mb.softplus(self.sigma_raw)
        diff = Z[..., None, :] - self.centers  # (..., P, n_z)
        expo = -0.5 * ((diff / sig) ** 2).sum(axis=-1)
        wr = np.exp(expo)
        s = wr.sum(axis=-1)
        bad = s < EPS_DENOM
        if np.any(bad):
            nearest = np.argmax(expo, axis=-1)
            onehot = np.zeros_like(wr)
            np.put_along_axis(onehot, nearest[..., None], 1.0, axis=-1)
            w = np.where(bad[..., None], onehot, wr / np.where(bad, 1.0, s)[..., None])
        else:
            w = wr / s[..., None]
        return w, wr, s, bad, diff, sig

    def infer(self, Z, mfs=None, return_blocks=False):
        Z = np.asarray(Z, dtype=float)
        if Z.shape[-1] != self.n_z:
            raise DimensionMismatchError(
                f"input has {Z.shape[-1]} dims, model expects {self.n_z}"
            )
        if return_blocks:
            raise ValueError("per-block contributions are only defined for additive models")
        w, *_ = self._firing(Z)
        d = np.einsum("poi,...i->...po", self.slopes, Z) + self.intercepts
        return np.einsum("...p,...po->...o", w, d)

    def infer_tape(self, Z, mfs):
        w, wr, s, bad, diff, sig = self._firing(Z)
        d = np.einsum("poi,...i->...po", self.slopes, Z) + self.intercepts
        total = np.einsum("...p,...po->...o", w, d)
        return total, (Z, w, wr, s, bad, diff, sig, d)

    def backward_step(self, mfs, tape, g_bar, acc):
        Z, w, wr, s, bad, diff, sig, d = tape
        d_bar = w[..., None] * g_bar[..., None, :]  # (..., P, n_x)
        acc["slopes"] += np.einsum("bpo,bi->poi", d_bar, Z)
        acc["intercepts"] += d_bar.sum(axis=0)
        w_bar = (g_bar[..., None, :] * d).sum(axis=-1)
        s_safe = np.where(bad, 1.0, s)
        wr_bar = (w_bar - (w_bar * w).sum(axis=-1, keepdims=True)) / s_safe[..., None]
        wr_bar = np.where(bad[..., None], 0.0, wr_bar)
        e_bar = wr_bar * wr  # adjoint of the log-firing exponent
        scaled = diff / (sig * sig)
        acc["centers"] += np.einsum("bp,bpi->pi", e_bar, scaled)
        sig_bar = np.einsum("bp,bpi->pi", e_bar, scaled * diff / sig)
        acc["sigma_raw"] += sig_bar * mb._sigmoid(self.sigma_raw)
        z_bar = -np.einsum("bp,bpi->bi", e_bar, scaled)
        z_bar += np.einsum("bp,poi,bo->bi", w, self.slopes, g_bar)
        return z_bar


def additive_infer(model: AdditiveDynamics, z, return_contributions=False):
    """Sum of per-block outputs at combined input z (..., n_z)."""
    return model.infer(z, return_blocks=return_contributions)


def fode_infer(model: FodeDynamics, z):
    return model.infer(z)


@dataclass
class FuzzyDynamicsModel:
    """A complete parameterized vector field plus the metadata to use it."""

    kind: str  # 'xfode' | 'afode' | 'fode'
    dynamics: AdditiveDynamics | FodeDynamics
    n_u: int
    n_y: int
    m: int
    sr_mode: str
    norm_stats: NormStats | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("xfode", "afode", "fode"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        expect_nx = (self.m + 1) * self.n_y
        if self.dynamics.n_x != expect_nx:
            raise DimensionMismatchError(
                f"dynamics n_x={self.dynamics.n_x}, config implies {expect_nx}"
            )

    @property
    def n_x(self) -> int:
        return self.dynamics.n_x

    @property
    def n_z(self) -> int:
        return self.dynamics.n_z

    @property
    def P(self) -> int:
        return self.dynamics.P

    @property
    def strategy(self) -> str | None:
        return getattr(self.dynamics, "strategy", None)


def count_parameters(model) -> int:
    """Number of learnable reals (length of the flat parameter vector)."""
    dyn = model.dynamics if isinstance(model, FuzzyDynamicsModel) else model
    return int(dyn.get_flat().size)


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------


def init_additive(
    strategy,
    P,
    n_x,
    n_u,
    domains,
    rng,
    consequent_scale: float = 0.1,
) -> AdditiveDynamics:
    """Fresh additive model: chains spanning per-dimension domains, consequent
    slopes and intercepts i.i.d. uniform in [-scale, scale]."""
    n_z = n_x + n_u
    if len(domains) != n_z:
        raise DimensionMismatchError(f"need {n_z} domains, got {len(domains)}")
    raw = np.stack(
        [mb.init_chain(strategy, P, lo, hi).raw for lo, hi in domains]
    )
    slopes = rng.uniform(-consequent_scale, consequent_scale, (n_z, P, n_x))
    intercepts = rng.uniform(-consequent_scale, consequent_scale, (n_z, P, n_x))
    return AdditiveDynamics(strategy, P, raw, slopes, intercepts, n_u)


def init_fode(P, n_x, n_u, domains, rng, consequent_scale: float = 0.1) -> FodeDynamics:
    """Fresh multi-input model: rule centers on the domain diagonal, spreads
    half the center gap, consequents i.i.d. uniform."""
    n_z = n_x + n_u
    centers = np.stack(
        [np.linspace(lo, hi, P) for lo, hi in domains], axis=1
    )  # (P, n_z)
    sigma = np.stack(
        [np.full(P, max(hi - lo, 1.0) / (2 * (P - 1))) for lo, hi in domains], axis=1
    )
    slopes = rng.uniform(-consequent_scale, consequent_scale, (P, n_x, n_z))
    intercepts = rng.uniform(-consequent_scale, consequent_scale, (P, n_x))
    return FodeDynamics(centers, mb.softplus_inverse(sigma), slopes, intercepts, n_u)


def data_domains(Z: np.ndarray) -> list[tuple[float, float]]:
    """Per-column (min, max) of a (n, n_z) matrix of combined inputs."""
    return [(float(lo), float(hi)) for lo, hi in zip(Z.min(axis=0), Z.max(axis=0))]


def transform_to_normalized(
    dyn: AdditiveDynamics, shift: np.ndarray, scale: np.ndarray, out_scale: np.ndarray
) -> AdditiveDynamics:
    """Re-express an additive model in normalized coordinates.

    If z_i = scale_i * z'_i + shift_i and x'_o = x_o / out_scale_o, the model
    class is closed under the change of variables; this returns the
    equivalent model acting on primed quantities.
    """
    raw = dyn.raw.copy()
    if dyn.strategy == mb.FREE_GAUSS:
        P = dyn.P
        raw[:, :P] = (raw[:, :P] - shift[:, None]) / scale[:, None]
        raw[:, P:] = mb.softplus_inverse(mb.softplus(raw[:, P:]) / scale[:, None])
    else:
        raw[:, 0] = (raw[:, 0] - shift) / scale
        raw[:, 1:] = mb.softplus_inverse(mb.softplus(raw[:, 1:]) / scale[:, None])
    slopes = dyn.slopes * scale[:, None, None] / out_scale[None, None, :]
    intercepts = (
        dyn.intercepts + dyn.slopes * shift[:, None, None]
    ) / out_scale[None, None, :]
    return AdditiveDynamics(dyn.strategy, dyn.P, raw, slopes, intercepts, dyn.n_u)


# ---------------------------------------------------------------------------
# Serialization: JSON, parameters kept bit-exact through repr round-trip
# ---------------------------------------------------------------------------


def save_model(model: FuzzyDynamicsModel, path: str) -> None:
    dyn = model.dynamics
    doc = {
        "format_version": FORMAT_VERSION,
        "model_kind": model.kind,
        "strategy": model.strategy,
        "P": model.P,
        "n_u": model.n_u,
        "n_y": model.n_y,
        "m": model.m,
        "sr_mode": model.sr_mode,
        "norm_stats": None
        if model.norm_stats is None
        else {
            "mean": model.norm_stats.mean.tolist(),
            "std": model.norm_stats.std.tolist(),
            "n_u": model.norm_stats.n_u,
        },
        "metadata": model.metadata,
    }
    if isinstance(dyn, AdditiveDynamics):
        doc["blocks"] = [
            {
                "raw_chain_params": dyn.raw[i].tolist(),
                "consequents": np.stack(
                    [dyn.slopes[i], dyn.intercepts[i]], axis=-1
                ).tolist(),
            }
            for i in range(dyn.n_z)
        ]
    else:
        doc["blocks"] = [
            {
                "raw_chain_params": np.concatenate(
                    [dyn.centers.ravel(), dyn.sigma_raw.ravel()]
                ).tolist(),
                "consequents": np.concatenate(
                    [dyn.slopes.ravel(), dyn.intercepts.ravel()]
                ).tolist(),
            }
        ]
        doc["fode_shape"] = {"n_z": dyn.n_z, "n_x": dyn.n_x}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)


def load_model(path: str) -> FuzzyDynamicsModel:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format {doc.get('format_version')!r}")
    kind = doc["model_kind"]
    P = doc["P"]
    n_u = doc["n_u"]
    n_y = doc["n_y"]
    m = doc["m"]
    n_x = (m + 1) * n_y
    if kind == "fode":
        shape = doc["fode_shape"]
        n_z = shape["n_z"]
        ants = np.asarray(doc["blocks"][0]["raw_chain_params"], dtype=float)
        cons = np.asarray(doc["blocks"][0]["consequents"], dtype=float)
        centers = ants[: P * n_z].reshape(P, n_z)
        sigma_raw = ants[P * n_z :].reshape(P, n_z)
        slopes = cons[: P * n_x * n_z].reshape(P, n_x, n_z)
        intercepts = cons[P * n_x * n_z :].reshape(P, n_x)
        dyn = FodeDynamics(centers, sigma_raw, slopes, intercepts, n_u)
    else:
        strategy = doc["strategy"]
        raw = np.stack(
            [np.asarray(b["raw_chain_params"], dtype=float) for b in doc["blocks"]]
        )
        cons = np.stack(
            [np.asarray(b["consequents"], dtype=float) for b in doc["blocks"]]
        )
        dyn = AdditiveDynamics(strategy, P, raw, cons[..., 0], cons[..., 1], n_u)
    stats = None
    if doc.get("norm_stats") is not None:
        ns = doc["norm_stats"]
        stats = NormStats(
            mean=np.asarray(ns["mean"], dtype=float),
            std=np.asarray(ns["std"], dtype=float),
            n_u=ns["n_u"],
        )
    return FuzzyDynamicsModel(
        kind=kind,
        dynamics=dyn,
        n_u=n_u,
        n_y=n_y,
        m=m,
        sr_mode=doc["sr_mode"],
        norm_stats=stats,
        metadata=doc.get("metadata", {}),
    )
