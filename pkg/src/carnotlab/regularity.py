"""Decay sequences over dyadic cylinders, exponent fits, dyadic checks and blow-up scaling."""

from __future__ import annotations

import warnings
from itertools import product
from dataclasses import dataclass, field

import numpy as np

from .calculus import ProblemSpec, ScalarField, as_field, apply_H, holder_norm_estimate, taylor_p
from .groups import GroupSpec, SpaceTimePoint, compose, dilate, invert
from .metrics import Box, Cylinder, cylinder_mask, substream

ANCHORS = ("obstacle", "boundary")
MIN_CYLINDER_NODES = 5


class DecayTruncated(UserWarning):
    """A decay sequence stopped early because a cylinder held too few nodes."""


@dataclass
class DecaySequence:
    kind: str
    entries: list[tuple[int, float]]
    base_point: SpaceTimePoint
    gamma_target: float | None = None
    gamma_fitted: float | None = None
    node_counts: list[int] = field(default_factory=list)
    truncated: bool = False

    def __post_init__(self):
        if self.kind not in ("past", "future", "full"):
            raise ValueError(f"decay kind must be past or future, got {self.kind!r}")
        if not self.entries:
            raise ValueError("decay sequence needs at least one entry")
        ks = [k for k, _ in self.entries]
        if ks != list(range(len(ks))):
            raise ValueError("decay sequence indices must run 0, 1, 2, ...")
        if any(s < 0 for _, s in self.entries):
            raise ValueError("decay sequence values must be nonnegative")

    @property
    def ks(self) -> np.ndarray:
        return np.array([k for k, _ in self.entries])

    @property
    def values(self) -> np.ndarray:
        return np.array([s for _, s in self.entries], dtype=float)

    def envelope(self, gamma: float | None = None) -> float:
        """``c = max_k S_k 2^{k gamma}``."""
        g = self.gamma_target if gamma is None else gamma
        if g is None:
            raise ValueError("no exponent given and no target stored")
        return float(np.max(self.values * 2.0 ** (self.ks * g)))


def build_F(m: int, anchor: str, data, base: SpaceTimePoint, spec: GroupSpec, alpha: float = 0.5,
            h: float = 1e-4):
    """Comparison function and target exponent: ``(P_0 data, alpha)``, ``(P_1 data, 1+alpha)`` or ``(data, 2)``.

    ``anchor`` names which datum is passed in: the obstacle for interior
    estimates, the boundary datum for initial-state estimates.
    """
    if m not in (0, 1, 2):
        raise ValueError(f"m must be 0, 1 or 2, got {m}")
    if anchor not in ANCHORS:
        raise ValueError(f"anchor must be one of {ANCHORS}")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    data = as_field(data)
    if m == 2:
        return data, 2.0
    return taylor_p(m, data, base, spec, h), (alpha if m == 0 else 1.0 + alpha)


def decay_sequence(u, F, base: SpaceTimePoint, kind: str, kmax: int, spec: GroupSpec,
                   gamma_target: float | None = None, min_nodes: int = MIN_CYLINDER_NODES) -> DecaySequence:
    """``S_k = max |u - F|`` over grid nodes inside ``C_{2^-k}^{kind}(base)``, ``k = 0..kmax``."""
    if kmax < 0:
        raise ValueError("kmax must be nonnegative")
    F = as_field(F)
    x, t = u.grid.node_coords()
    xf = x.reshape(-1, spec.n)
    tf = t.reshape(-1)
    vals = u.values.reshape(-1)
    entries, counts = [], []
    truncated = False
    for k in range(kmax + 1):
        cyl = Cylinder(base, 2.0 ** -k, kind)
        mask = cylinder_mask(cyl, xf, tf, spec)
        cnt = int(np.count_nonzero(mask))
        if cnt < min_nodes:
            truncated = True
            warnings.warn(f"decay sequence truncated at k={k}: cylinder holds {cnt} nodes "
                          f"(< {min_nodes}); grid too coarse for kmax={kmax}", DecayTruncated, stacklevel=2)
            break
        diff = np.abs(vals[mask] - F(xf[mask], tf[mask]))
        entries.append((k, float(np.max(diff))))
        counts.append(cnt)
    if not entries:
        raise ValueError("the largest cylinder holds too few grid nodes")
    return DecaySequence(kind, entries, base, gamma_target, None, counts, truncated)


def fit_exponent(seq: DecaySequence, k_range=range(1, 6)) -> float:
    """Negated least-squares slope of ``log2 S_k`` against ``k``; ``inf`` for an all-zero range."""
    ks = set(int(k) for k in k_range)
    pts = [(k, s) for k, s in seq.entries if k in ks]
    if pts and all(s == 0 for _, s in pts):
        seq.gamma_fitted = float("inf")
        return seq.gamma_fitted
    pos = [(k, s) for k, s in pts if s > 0]
    if len(pos) < 3:
        raise ValueError(f"need at least 3 positive entries in the fit range, have {len(pos)}")
    k_arr = np.array([k for k, _ in pos], dtype=float)
    y = np.log2([s for _, s in pos])
    slope = np.polyfit(k_arr, y, 1)[0]
    seq.gamma_fitted = float(-slope)
    return seq.gamma_fitted


def check_dyadic(seq: DecaySequence, gamma: float, c: float):
    """``S_{k+1} <= max(c 2^{-(k+1) gamma}, S_k 2^{-gamma}, ..., S_0 2^{-(k+1) gamma})`` for all ``k``.

    Returns ``(ok, worst_k)`` where ``worst_k`` is the index with the largest
    violation ratio (``None`` when every inequality holds).
    """
    if not (gamma > 0 and c > 0):
        raise ValueError("gamma and c must be positive")
    s = seq.values
    worst_k, worst = None, 1.0
    for k1 in range(1, len(s)):
        prior = s[:k1] * 2.0 ** (-(k1 - np.arange(k1)) * gamma)
        bound = max(c * 2.0 ** (-k1 * gamma), float(np.max(prior)))
        ratio = s[k1] / bound
        # relative slack absorbs rounding in the envelope constant
        if ratio > 1.0 + 1e-12 and ratio > worst:
            worst, worst_k = ratio, k1
    return worst_k is None, worst_k


# ---------------------------------------------------------------------------
# blow-up scaling


def _pullback(spec: GroupSpec, r: float, base: SpaceTimePoint):
    bx, bt = base.x, base.t

    def phi(x, t):
        x = np.asarray(x, dtype=float)
        return compose(spec, bx, dilate(spec, r, x)), bt + r * r * np.asarray(t, dtype=float)

    return phi


def rescale_function(u, r: float, base: SpaceTimePoint, spec: GroupSpec) -> ScalarField:
    """``u^r(x, t) = u(base o delta_r(x, t))``.

    Intended for ``r`` in ``(0, 1]``; any ``r > 0`` is accepted so that a
    blow-up can be undone.
    """
    if not r > 0:
        raise ValueError("scale r must be positive")
    u = as_field(u)
    pull = _pullback(spec, r, base)

    def ur(x, t):
        y, s = pull(x, t)
        return u(y, s)

    return ScalarField(ur, None, u.smoothness, label=f"{u.label}^r")


def inverse_base(spec: GroupSpec, r: float, base: SpaceTimePoint) -> SpaceTimePoint:
    """Base point ``b'`` with ``(u^{r,base})^{1/r,b'} = u``."""
    return SpaceTimePoint(dilate(spec, 1.0 / r, invert(spec, base.x)), -base.t / (r * r))


def _rescaled_box(spec, box: Box, r, base) -> Box:
    # x -> delta_{1/r}(base^{-1} o x) is affine for step-two laws, so corners bound the image
    corners = np.array(list(product(*zip(box.lower, box.upper))), dtype=float)
    img = dilate(spec, 1.0 / r, compose(spec, invert(spec, base.x), corners))
    return Box(tuple(img.min(axis=0)), tuple(img.max(axis=0)),
               (box.t0 - base.t) / (r * r), (box.t1 - base.t) / (r * r))


def rescale_problem(p: ProblemSpec, r: float, base: SpaceTimePoint) -> ProblemSpec:
    """Coefficients ``a^r``, ``r b^r`` and data ``r^2 f^r``, ``g^r``, ``phi^r`` pulled back through ``base o delta_r``.

    The generators are unchanged: they are left-invariant and homogeneous of
    degree one, so ``X_i(u^r) = r (X_i u)^r``.
    """
    if not r > 0:
        raise ValueError("scale r must be positive")
    spec = p.spec
    pull = _pullback(spec, r, base)

    def a_r(x, t):
        return p.a_at(*pull(x, t))

    def b_r(x, t):
        return r * p.b_at(*pull(x, t))

    f = as_field(p.f)
    f_r = ScalarField(lambda x, t: r * r * f(*pull(x, t)), label="r^2 f^r")
    g_r = rescale_function(p.g, r, base, spec)
    phi_r = rescale_function(p.phi, r, base, spec) if p.phi is not None else None
    return ProblemSpec(spec, a_r, b_r, f_r, g_r, phi_r, _rescaled_box(spec, p.domain, r, base),
                       p.Lambda, p.alpha, dict(p.meta, rescaled=(r, tuple(base.x), base.t)))


def verify_rescaling_identity(p: ProblemSpec, u, r: float, base: SpaceTimePoint, h: float = 1e-3,
                              samples: int = 64, seed: int = 0, margin: float = 0.1) -> float:
    """``sup |H_r(u^r) - r^2 (H u)^r|`` at sampled points mapped into ``p.domain``."""
    spec = p.spec
    u = as_field(u)
    ur = rescale_function(u, r, base, spec)
    pr = rescale_problem(p, r, base)
    rng = substream(seed, "rescaling-identity")
    box = p.domain
    lo = np.asarray(box.lower) + margin * (np.asarray(box.upper) - np.asarray(box.lower))
    hi = np.asarray(box.upper) - margin * (np.asarray(box.upper) - np.asarray(box.lower))
    y = lo + rng.uniform(size=(samples, spec.n)) * (hi - lo)
    span = box.t1 - box.t0
    s = box.t0 + span * (margin + (1 - 2 * margin) * rng.uniform(size=samples))
    # (x, t) with base o delta_r (x, t) = (y, s)
    x = dilate(spec, 1.0 / r, compose(spec, invert(spec, base.x), y))
    t = (s - base.t) / (r * r)
    lhs = apply_H(pr, ur, (x, t), h)
    rhs = r * r * apply_H(p, u, (y, s), h)
    return float(np.max(np.abs(lhs - rhs)))


# ---------------------------------------------------------------------------
# class membership


def class_membership(p: ProblemSpec, u, m: int, bounds, alpha: float | None = None,
                     sample_pairs: int = 2048, seed: int = 0) -> dict:
    """Check ``(u, f, g[, phi])`` against the class bounds.

    ``bounds = (M1, M2, M3)`` bounds ``||u||_inf``, ``||f||_{0,alpha}`` and
    ``||phi||_{m,alpha}`` (or ``||g||_{m,alpha}`` without an obstacle);
    a fourth entry switches to the four-constant class where ``M3`` bounds
    ``g`` and ``M4`` bounds ``phi``.
    """
    alpha = p.alpha if alpha is None else alpha
    bounds = tuple(float(b) for b in bounds)
    if len(bounds) not in (3, 4) or any(b <= 0 for b in bounds):
        raise ValueError("bounds must be three or four positive numbers")
    spec, box = p.spec, p.domain
    checks = []

    def add(name, measured, bound):
        checks.append({"check": name, "status": "pass" if measured <= bound else "fail",
                       "measured": float(measured), "bound": float(bound)})

    add("u_sup", float(np.max(np.abs(u.values))), bounds[0])
    add("f_holder", holder_norm_estimate(p.f, 0, alpha, box, spec, sample_pairs, seed), bounds[1])
    if p.phi is None:
        add("g_norm", holder_norm_estimate(p.g, m, alpha, box, spec, sample_pairs, seed), bounds[2])
    elif len(bounds) == 3:
        add("phi_norm", holder_norm_estimate(p.phi, m, alpha, box, spec, sample_pairs, seed), bounds[2])
    else:
        add("g_norm", holder_norm_estimate(p.g, m, alpha, box, spec, sample_pairs, seed), bounds[2])
        add("phi_norm", holder_norm_estimate(p.phi, m, alpha, box, spec, sample_pairs, seed), bounds[3])
    if p.phi is not None:
        grid = u.grid
        x, t = grid.node_coords()
        mask = grid.boundary_mask()
        gap = float(np.min(p.g(x[mask], t[mask]) - p.phi(x[mask], t[mask])))
        checks.append({"check": "g_ge_phi", "status": "pass" if gap >= -1e-12 else "fail",
                       "measured": gap, "bound": 0.0})
    return {"m": m, "alpha": alpha, "checks": checks,
            "passed": all(c["status"] == "pass" for c in checks)}


__all__ = [
    "DecaySequence", "DecayTruncated", "build_F", "check_dyadic", "class_membership", "decay_sequence",
    "fit_exponent", "inverse_base", "rescale_function", "rescale_problem", "verify_rescaling_identity",
]
