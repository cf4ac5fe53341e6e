"""Membership-function families and coupled antecedent partitions.

Four antecedent layouts are supported for a single scalar input:

* free_gauss: P independent Gaussians (center, spread each).
* ps1: P triangles chained so adjacent supports share an edge; for any input
  at most two grades are nonzero and grades sum to 1 on [c_0, c_{P-1}].
* ps2: P two-sided Gaussians whose centers sit 4 right-spreads apart and
  whose adjacent spreads are shared, giving near-two-rule activation.
* ps3: the ps2 chain, but only every second function keeps its Gaussian
  shape ("anchor"); the functions between anchors are local complements
  (1 - neighbor grade), restoring exact two-rule activation.

All positive spreads are stored through a softplus reparameterization so the
raw parameter vector is unconstrained. ``decode`` turns raw parameters into
concrete per-function parameters together with the Jacobian of that map,
which the trainer uses to backpropagate into the raw vector.

Raw layouts (last axis):
  ps1 / ps2 / ps3: [c_0, left_spread_raw, right_spread_raw[0..P-1]]  (P+2)
  free_gauss:      [c_0..c_{P-1}, spread_raw_0..spread_raw_{P-1}]    (2P)

Leading axes broadcast everywhere, so a stack of chains (one per model input
dimension) decodes and evaluates in one call.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteParameterError, NonPositiveInputError

FREE_GAUSS = "free_gauss"
PS1 = "ps1"
PS2 = "ps2"
PS3 = "ps3"
STRATEGIES = (FREE_GAUSS, PS1, PS2, PS3)

# Below this total firing strength, inference falls back to the nearest rule.
EPS_DENOM = 1e-12


def softplus(raw):
    """log(1 + e^raw), overflow-free for any float input."""
    return np.logaddexp(0.0, np.asarray(raw, dtype=float))


def softplus_inverse(value):
    """Inverse of softplus; value must be strictly positive."""
    v = np.asarray(value, dtype=float)
    if np.any(v <= 0):
        raise NonPositiveInputError("softplus_inverse needs a positive input")
    # log(expm1(v)) keeps full precision for small v but overflows for large
    # v, where v + log1p(-e^-v) is exact; split at a point safe for both.
    small = v < 20.0
    out = np.empty_like(v)
    out[small] = np.log(np.expm1(v[small]))
    out[~small] = v[~small] + np.log1p(-np.exp(-v[~small]))
    return out if out.ndim else float(out)


def _sigmoid(raw):
    out = np.empty_like(raw, dtype=float)
    pos = raw >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-raw[pos]))
    e = np.exp(raw[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def raw_param_count(strategy: str, P: int) -> int:
    return 2 * P if strategy == FREE_GAUSS else P + 2


@dataclass
class AntecedentChain:
    """Unconstrained parameter vector of one input dimension's partition."""

    strategy: str
    P: int
    raw: np.ndarray

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.P < 2:
            raise ValueError("P must be >= 2")
        self.raw = np.asarray(self.raw, dtype=float)
        if self.raw.shape[-1] != raw_param_count(self.strategy, self.P):
            raise ValueError(
                f"{self.strategy} with P={self.P} needs "
                f"{raw_param_count(self.strategy, self.P)} raw parameters, "
                f"got {self.raw.shape[-1]}"
            )

    def copy(self) -> "AntecedentChain":
        return AntecedentChain(self.strategy, self.P, self.raw.copy())


@dataclass
class DecodedMFs:
    """Concrete membership-function parameters plus the raw-parameter Jacobian.

    ``params`` maps array names to (..., P) arrays; ``jac`` maps the same
    names to (..., P, n_raw) Jacobians d(param)/d(raw). ps3 additionally
    carries activity windows: anchors are live on [anchor_lo, anchor_hi) and
    each complement is live on the window of whichever anchor it mirrors.
    """

    strategy: str
    P: int
    params: dict = field(default_factory=dict)
    jac: dict = field(default_factory=dict)
    windows: dict = field(default_factory=dict)
    _jac_stack: np.ndarray | None = None

    @property
    def centers(self) -> np.ndarray:
        return self.params["center"]

    @property
    def param_names(self) -> tuple:
        if self.strategy == PS1:
            return ("left", "center", "right")
        if self.strategy in (PS2, PS3):
            return ("center", "sigma_l", "sigma_r")
        return ("center", "sigma")

    @property
    def jac_stack(self) -> np.ndarray:
        """All Jacobians as one (..., n_names, P, n_raw) array."""
        if self._jac_stack is None:
            self._jac_stack = np.stack(
                [self.jac[n] for n in self.param_names], axis=-3
            )
        return self._jac_stack


def decode(chain: AntecedentChain) -> DecodedMFs:
    """Turn raw parameters into concrete MF parameters and their Jacobians."""
    raw = chain.raw
    if not np.isfinite(raw).all():
        raise NonFiniteParameterError("raw antecedent parameters must be finite")
    P = chain.P
    if chain.strategy == FREE_GAUSS:
        return _decode_free_gauss(raw, P)
    if chain.strategy == PS1:
        return _decode_ps1(raw, P)
    return _decode_ps_gauss2(raw, P, chain.strategy)


def _chain_centers(raw, P, gap_scale):
    """Centers c_p = c_0 + gap_scale * sum_{q<p} softplus(raw_spread_q)."""
    c0 = raw[..., 0]
    spread = softplus(raw[..., 2:])
    slope = _sigmoid(raw[..., 2:])
    csum = np.cumsum(spread, axis=-1)
    centers = c0[..., None] + gap_scale * np.concatenate(
        [np.zeros_like(c0)[..., None], csum[..., :-1]], axis=-1
    )
    n_raw = P + 2
    jac = np.zeros(raw.shape[:-1] + (P, n_raw))
    jac[..., :, 0] = 1.0
    # strictly-lower-triangular dependence of c_p on right spreads q < p
    tri = np.tril(np.ones((P, P)), k=-1)
    jac[..., :, 2:] = gap_scale * tri * slope[..., None, :]
    return centers, jac, spread, slope


def _decode_ps1(raw, P):
    centers, jc, spread, slope = _chain_centers(raw, P, gap_scale=1.0)
    left = np.concatenate(
        [(centers[..., :1] - softplus(raw[..., 1:2])), centers[..., :-1]], axis=-1
    )
    right = np.concatenate(
        [centers[..., 1:], (centers[..., -1:] + spread[..., -1:])], axis=-1
    )
    jl = np.concatenate([jc[..., :1, :], jc[..., :-1, :]], axis=-2).copy()
    jl[..., 0, 1] -= _sigmoid(raw[..., 1])
    jr = np.concatenate([jc[..., 1:, :], jc[..., -1:, :]], axis=-2).copy()
    jr[..., -1, 2 + P - 1] += slope[..., -1]
    return DecodedMFs(
        strategy=PS1,
        P=P,
        params={"left": left, "center": centers, "right": right},
        jac={"left": jl, "center": jc, "right": jr},
    )


def _decode_ps_gauss2(raw, P, strategy):
    centers, jc, spread, slope = _chain_centers(raw, P, gap_scale=4.0)
    sigma_r = spread
    sigma_l = np.concatenate([softplus(raw[..., 1:2]), spread[..., :-1]], axis=-1)
    n_raw = P + 2
    jr = np.zeros(raw.shape[:-1] + (P, n_raw))
    idx = np.arange(P)
    jr[..., idx, 2 + idx] = slope
    jl = np.zeros_like(jr)
    jl[..., 0, 1] = _sigmoid(raw[..., 1])
    jl[..., idx[1:], 2 + idx[:-1]] = slope[..., :-1]
    mfs = DecodedMFs(
        strategy=strategy,
        P=P,
        params={"center": centers, "sigma_l": sigma_l, "sigma_r": sigma_r},
        jac={"center": jc, "sigma_l": jl, "sigma_r": jr},
    )
    if strategy == PS3:
        mfs.windows = _ps3_windows(centers, P)
    return mfs


def _ps3_windows(centers, P):
    """Activity windows for the ps3 anchor/complement arrangement.

    0-based: odd indices are anchors (Gaussian shape), even indices are
    complements. A window pair (lo, hi) means live on [lo, hi); unused
    entries get an empty window (lo=+inf).
    """
    shape = centers.shape
    inf = np.inf
    a_lo = np.full(shape, inf)
    a_hi = np.full(shape, -inf)
    cl_lo = np.full(shape, inf)  # complement using its left anchor
    cl_hi = np.full(shape, -inf)
    cr_lo = np.full(shape, inf)  # complement using its right anchor
    cr_hi = np.full(shape, -inf)

    def mid(i, j):
        return 0.5 * (centers[..., i] + centers[..., j])

    for k in range(1, P, 2):  # anchors
        a_lo[..., k] = mid(k - 2, k) if k - 2 >= 1 else -inf
        a_hi[..., k] = mid(k, k + 2) if k + 2 <= P - 1 else inf
    for j in range(0, P, 2):  # complements
        if j + 1 <= P - 1:  # has a right anchor
            cr_lo[..., j] = mid(j - 1, j + 1) if j - 1 >= 1 else -inf
            cr_hi[..., j] = centers[..., j + 1]
        if j - 1 >= 1:  # has a left anchor
            cl_lo[..., j] = centers[..., j - 1]
            cl_hi[..., j] = mid(j - 1, j + 1) if j + 1 <= P - 1 else inf
    return {
        "anchor_lo": a_lo,
        "anchor_hi": a_hi,
        "compl_lo": cl_lo,
        "compl_hi": cl_hi,
        "compr_lo": cr_lo,
        "compr_hi": cr_hi,
    }


def _decode_free_gauss(raw, P):
    centers = raw[..., :P].copy()
    sigma = softplus(raw[..., P:])
    slope = _sigmoid(raw[..., P:])
    jc = np.zeros(raw.shape[:-1] + (P, 2 * P))
    idx = np.arange(P)
    jc[..., idx, idx] = 1.0
    js = np.zeros_like(jc)
    js[..., idx, P + idx] = slope
    return DecodedMFs(
        strategy=FREE_GAUSS,
        P=P,
        params={"center": centers, "sigma": sigma},
        jac={"center": jc, "sigma": js},
    )


def init_chain(
    strategy: str, P: int, domain_min: float, domain_max: float
) -> AntecedentChain:
    """Chain whose decoded centers span [domain_min, domain_max] uniformly.

    A degenerate domain (max <= min) falls back to [min - 0.5, max + 0.5].
    """
    if domain_max <= domain_min:
        domain_min, domain_max = domain_min - 0.5, domain_max + 0.5
    span = domain_max - domain_min
    if strategy == FREE_GAUSS:
        centers = np.linspace(domain_min, domain_max, P)
        sigma = np.full(P, span / (2 * (P - 1)))
        raw = np.concatenate([centers, softplus_inverse(sigma)])
        return AntecedentChain(strategy, P, raw)
    gap = span / (P - 1)
    spread = gap if strategy == PS1 else gap / 4.0
    raw = np.empty(P + 2)
    raw[0] = domain_min
    raw[1:] = softplus_inverse(spread)
    return AntecedentChain(strategy, P, raw)


# ---------------------------------------------------------------------------
# Evaluation. All evaluators take decoded parameter arrays (..., P) and an
# input z broadcastable to the leading dims, and return the grades together
# with the local partial derivatives needed for backpropagation.
# ---------------------------------------------------------------------------


def _tri_eval(left, center, right, z):
    """Shouldered triangular grades and partials (stacked left/center/right).

    The first MF is 1 left of its center and the last is 1 right of its
    center, so inference never sees an all-zero firing vector. At the kinks
    the right-hand branch is used.
    """
    zz = z[..., None]
    P = center.shape[-1]
    first = np.zeros(P, dtype=bool)
    first[0] = True
    last = np.zeros(P, dtype=bool)
    last[-1] = True

    lt_c = zz < center
    shoulder = (first & lt_c) | (last & ~lt_c)
    asc = lt_c & (zz >= left) & ~first
    desc = ~lt_c & (zz < right) & ~last

    inv_cl = 1.0 / (center - left)
    inv_rc = 1.0 / (right - center)
    mu_asc = asc * ((zz - left) * inv_cl)
    mu_desc = desc * ((right - zz) * inv_rc)
    d_c = zz - center

    mu = shoulder + mu_asc + mu_desc
    dz = asc * inv_cl - desc * inv_rc
    dstack = np.stack(
        [
            asc * (d_c * inv_cl * inv_cl),  # d/d left
            mu_desc * inv_rc - mu_asc * inv_cl,  # d/d center
            desc * (d_c * inv_rc * inv_rc),  # d/d right
        ],
        axis=-2,
    )
    return mu, dz, dstack


def _gauss2_eval(center, sigma_l, sigma_r, z):
    """Two-sided Gaussian grades and partials (left branch for z <= c),
    stacked center/sigma_l/sigma_r."""
    zz = z[..., None]
    d = zz - center
    is_left = d <= 0
    sig = np.where(is_left, sigma_l, sigma_r)
    mu = np.exp(-(d * d) / (2.0 * sig * sig))
    common = mu * d / (sig * sig)
    ds = common * d / sig
    dstack = np.stack([common, is_left * ds, (~is_left) * ds], axis=-2)
    return mu, -common, dstack


def _gauss_eval(center, sigma, z):
    zz = z[..., None]
    d = zz - center
    mu = np.exp(-(d * d) / (2.0 * sigma * sigma))
    common = mu * d / (sigma * sigma)
    dstack = np.stack([common, common * d / sigma], axis=-2)
    return mu, -common, dstack


def _shift_up(a):
    """out[..., k] = a[..., k-1] (zero-filled)."""
    out = np.zeros_like(a)
    out[..., 1:] = a[..., :-1]
    return out


def _shift_down(a):
    """out[..., k] = a[..., k+1] (zero-filled)."""
    out = np.zeros_like(a)
    out[..., :-1] = a[..., 1:]
    return out


class _MfEval:
    """Grades plus everything needed to pull adjoints back to raw params."""

    __slots__ = ("mfs", "mu", "dz", "dstack", "masks")

    def __init__(self, mfs, mu, dz, dstack, masks=None):
        self.mfs = mfs
        self.mu = mu
        self.dz = dz
        self.dstack = dstack  # (..., n_names, P) partials, param_names order
        self.masks = masks

    def dparams(self) -> dict:
        """Per-name view of the stacked partials."""
        return dict(zip(self.mfs.param_names, np.moveaxis(self.dstack, -2, 0)))

    def vjp(self, mu_bar):
        """Map an adjoint of the grades to (z adjoint, stacked param adjoints).

        The stacked adjoint has shape (..., n_names, P), aligned with
        DecodedMFs.jac_stack.
        """
        z_bar = (mu_bar * self.dz).sum(axis=-1)
        if self.mfs.strategy == PS3:
            # complements mirror an anchor, so their adjoints fold back onto
            # the anchor's parameters with a sign flip
            mA, mL, mR = self.masks
            w = mu_bar * mA - _shift_down(mu_bar * mL) - _shift_up(mu_bar * mR)
            bars = w[..., None, :] * self.dstack
        else:
            bars = mu_bar[..., None, :] * self.dstack
        return z_bar, bars


def evaluate_all(mfs: DecodedMFs, z) -> _MfEval:
    """Grades of all P functions at z, with partials for backprop.

    z broadcasts against the decoded arrays' leading dims; the grade array
    gains a trailing axis of length P.
    """
    z = np.asarray(z, dtype=float)
    p = mfs.params
    if mfs.strategy == PS1:
        mu, dz, dstack = _tri_eval(p["left"], p["center"], p["right"], z)
        return _MfEval(mfs, mu, dz, dstack)
    if mfs.strategy == PS2:
        mu, dz, dstack = _gauss2_eval(p["center"], p["sigma_l"], p["sigma_r"], z)
        return _MfEval(mfs, mu, dz, dstack)
    if mfs.strategy == FREE_GAUSS:
        mu, dz, dstack = _gauss_eval(p["center"], p["sigma"], z)
        return _MfEval(mfs, mu, dz, dstack)
    return _ps3_eval(mfs, z)


def _ps3_eval(mfs, z):
    g, gdz, gdstack = _gauss2_eval(
        mfs.params["center"], mfs.params["sigma_l"], mfs.params["sigma_r"], z
    )
    w = mfs.windows
    zz = z[..., None]
    mA = ((zz >= w["anchor_lo"]) & (zz < w["anchor_hi"])).astype(float)
    mL = ((zz >= w["compl_lo"]) & (zz < w["compl_hi"])).astype(float)
    mR = ((zz >= w["compr_lo"]) & (zz < w["compr_hi"])).astype(float)
    mu = mA * g + mL * (1.0 - _shift_up(g)) + mR * (1.0 - _shift_down(g))
    dz = mA * gdz - mL * _shift_up(gdz) - mR * _shift_down(gdz)
    return _MfEval(mfs, mu, dz, gdstack, masks=(mA, mL, mR))


def memberships(mfs: DecodedMFs, z) -> np.ndarray:
    """Grade array (..., P) at z; values lie in [0, 1]."""
    return evaluate_all(mfs, z).mu


def evaluate(mfs: DecodedMFs, rule: int, z):
    """Grade of one function (0-based rule index) at z."""
    if not 0 <= rule < mfs.P:
        raise IndexError(f"rule index {rule} outside [0, {mfs.P})")
    return memberships(mfs, z)[..., rule]


def decoded_bars_to_raw(mfs: DecodedMFs, bars: np.ndarray) -> np.ndarray:
    """Chain stacked decoded-parameter adjoints through the decode Jacobians.

    bars is (..., n_names, P) as returned by _MfEval.vjp; extra leading
    (batch) axes are summed out. Returns an adjoint shaped like the raw
    parameter block (..., n_raw).
    """
    jac = mfs.jac_stack
    extra = bars.ndim - (jac.ndim - 1)
    if extra > 0:
        bars = bars.sum(axis=tuple(range(extra)))
    return np.einsum("...np,...npr->...r", bars, jac)


def active_pair(mfs: DecodedMFs, z):
    """Index p such that only rules (p, p+1) can fire at z, plus a clamp flag.

    Ties at a boundary go to the right segment. Outside [c_0, c_{P-1}] the
    nearest valid segment is returned with clamped=True.
    """
    z = np.asarray(z, dtype=float)
    c = mfs.centers
    if c.ndim != 1:
        raise ValueError("active_pair expects a single decoded chain")
    P = mfs.P
    if mfs.strategy == PS3:
        knots = [c[1]]
        for j in range(2, P - 1, 2):
            knots.append(0.5 * (c[j - 1] + c[j + 1]))
            if j + 2 <= P - 1:
                knots.append(c[j + 1])
        seg = np.searchsorted(np.asarray(knots), z, side="right")
    else:
        seg = np.searchsorted(c, z, side="right") - 1
    p_star = np.clip(seg, 0, P - 2)
    clamped = (z < c[0]) | (z > c[-1])
    if np.isscalar(z) or z.ndim == 0:
        return int(p_star), bool(clamped)
    return p_star.astype(int), clamped


def mf_grid(mfs: DecodedMFs, points: int = 501, margin: float = 0.1):
    """Uniform sampling of all grades for plotting/export.

    Grid spans [c_0 - span*margin, c_{P-1} + span*margin] where span is the
    center range. Returns (z_grid, grades (points, P)).
    """
    c = mfs.centers
    span = float(c[-1] - c[0])
    if span <= 0:
        span = 1.0
    z = np.linspace(c[0] - margin * span, c[-1] + margin * span, points)
    return z, memberships(mfs, z)
