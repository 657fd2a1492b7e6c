"""Horizontal calculus: X_i derivatives, the operator H, Taylor polynomials and norms.

Generator indices are zero-based throughout (``i = 0`` is ``X_1``).
Space-time arguments are either a :class:`SpaceTimePoint` or an ``(x, t)``
pair of arrays; the pair form broadcasts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import qmc

from .groups import GroupSpec, SpaceTimePoint, _check_point, flow
from .metrics import Box, Cylinder, cylinder_mask, parabolic_distance, substream

Evaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]
SMOOTHNESS = ("analytic", "grid-interpolated")


class DomainError(ValueError):
    """A field was evaluated outside its declared box."""


@dataclass(frozen=True)
class ScalarField:
    """A vectorised evaluator ``u(x, t)`` with an optional declared box."""

    fn: Evaluator
    box: Box | None = None
    smoothness: str = "analytic"
    label: str = ""

    def __post_init__(self):
        if self.smoothness not in SMOOTHNESS:
            raise ValueError(f"smoothness must be one of {SMOOTHNESS}")

    def __call__(self, x, t) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        if self.box is not None and not np.all(self.box.contains(x, t, slack=1e-9)):
            raise DomainError(f"field {self.label or '<anonymous>'} evaluated outside its box")
        out = np.asarray(self.fn(x, t), dtype=float)
        shape = np.broadcast_shapes(x.shape[:-1], t.shape)
        if out.shape != shape:
            out = np.broadcast_to(out, shape).copy()
        if not np.all(np.isfinite(out)):
            raise FloatingPointError(f"field {self.label or '<anonymous>'} produced non-finite values")
        return out

    def at(self, z: SpaceTimePoint) -> float:
        return float(self(z.x, z.t))


def constant_field(value: float, box: Box | None = None) -> ScalarField:
    v = float(value)
    return ScalarField(lambda x, t: np.full(np.broadcast_shapes(x.shape[:-1], np.shape(t)), v),
                       box, label=f"const({v:g})")


def as_field(u) -> ScalarField:
    """Accept a ScalarField, a bare callable or a grid function."""
    if isinstance(u, ScalarField):
        return u
    if hasattr(u, "as_field"):
        return u.as_field()
    if callable(u):
        return ScalarField(u)
    raise TypeError(f"cannot use {type(u).__name__} as a scalar field")


def _split(z):
    if isinstance(z, SpaceTimePoint):
        return z.x, np.asarray(z.t)
    x, t = z
    return np.asarray(x, dtype=float), np.asarray(t, dtype=float)


# ---------------------------------------------------------------------------
# coefficients and problems


def constant_matrix(a) -> Callable:
    a = np.asarray(a, dtype=float)

    def coeff(x, t):
        shape = np.broadcast_shapes(np.shape(x)[:-1], np.shape(t))
        return np.broadcast_to(a, shape + a.shape)

    return coeff


@dataclass
class ProblemSpec:
    """Coefficients and data for ``H u = sum a_ij X_i X_j u + sum b_i X_i u - d_t u``.

    ``a(x, t)`` returns ``(..., q, q)``, ``b(x, t)`` returns ``(..., q)``.
    ``phi`` is ``None`` for a pure Cauchy-Dirichlet problem.
    """

    spec: GroupSpec
    a: Callable
    b: Callable
    f: ScalarField
    g: ScalarField
    phi: ScalarField | None
    domain: Box
    Lambda: float = 1.0
    alpha: float = 0.5
    meta: dict = field(default_factory=dict)

    def a_at(self, x, t) -> np.ndarray:
        return np.asarray(self.a(np.asarray(x, float), np.asarray(t, float)), dtype=float)

    def b_at(self, x, t) -> np.ndarray:
        return np.asarray(self.b(np.asarray(x, float), np.asarray(t, float)), dtype=float)

    def validate(self, samples: int = 512, seed: int = 0, sym_tol: float = 1e-12) -> None:
        """Sampled checks of symmetry, ellipticity and ``g >= phi`` on the parabolic boundary."""
        if not self.Lambda >= 1.0:
            raise ValueError(f"ellipticity constant must be >= 1, got {self.Lambda}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.domain.n != self.spec.n:
            raise ValueError("domain dimension does not match the group")
        rng = substream(seed, "problem-validate")
        x, t = self.domain.sample(samples, rng)
        a = self.a_at(x, t)
        q = self.spec.q
        if a.shape[-2:] != (q, q):
            raise ValueError(f"a must return q x q matrices, got shape {a.shape}")
        asym = np.max(np.abs(a - np.swapaxes(a, -1, -2)))
        if asym > sym_tol:
            raise ValueError(f"coefficient matrix is not symmetric (max asymmetry {asym:.3g})")
        eig = np.linalg.eigvalsh(a)
        lo, hi = float(eig.min()), float(eig.max())
        if lo < 1.0 / self.Lambda - 1e-12 or hi > self.Lambda + 1e-12:
            raise ValueError(f"ellipticity fails: eigenvalues in [{lo:.4g}, {hi:.4g}], "
                             f"Lambda = {self.Lambda}")
        b = self.b_at(x, t)
        if b.shape[-1] != q:
            raise ValueError("b must return q components")
        if self.phi is not None:
            xb, tb = parabolic_boundary_sample(self.domain, samples, rng)
            gap = self.g(xb, tb) - self.phi(xb, tb)
            if np.min(gap) < -1e-12:
                raise ValueError(f"boundary data below the obstacle (min g - phi = {np.min(gap):.3g})")


def parabolic_boundary_sample(box: Box, count: int, rng: np.random.Generator):
    """Points on the sides ``dOmega x [t0, t1]`` and the initial slice ``Omega x {t0}``."""
    x, t = box.sample(count, rng)
    lo, hi = np.asarray(box.lower), np.asarray(box.upper)
    side = rng.integers(0, 2 * box.n + 1, size=count)
    for k in range(box.n):
        x[side == 2 * k, k] = lo[k]
        x[side == 2 * k + 1, k] = hi[k]
    t = np.where(side == 2 * box.n, box.t0, t)
    return x, t


# ---------------------------------------------------------------------------
# derivatives along the generators


def xdiff(spec: GroupSpec, u, i: int, z, h: float = 1e-4) -> np.ndarray:
    """Central difference of ``u`` along the flow of ``X_i``."""
    if not h > 0:
        raise ValueError("step h must be positive")
    u = as_field(u)
    x, t = _split(z)
    x = _check_point(spec, x)
    return (u(flow(spec, i, h, x), t) - u(flow(spec, i, -h, x), t)) / (2.0 * h)


def xxdiff(spec: GroupSpec, u, i: int, j: int, z, h: float = 1e-3) -> np.ndarray:
    """``X_i (X_j u)``: three-point rule for ``i == j``, composed-flow stencil otherwise."""
    if not h > 0:
        raise ValueError("step h must be positive")
    u = as_field(u)
    x, t = _split(z)
    x = _check_point(spec, x)
    if i == j:
        return (u(flow(spec, i, h, x), t) - 2.0 * u(x, t) + u(flow(spec, i, -h, x), t)) / (h * h)
    total = 0.0
    for si in (1.0, -1.0):
        y = flow(spec, i, si * h, x)
        for sj in (1.0, -1.0):
            total = total + si * sj * u(flow(spec, j, sj * h, y), t)
    return total / (4.0 * h * h)


def tdiff(u, z, h: float = 1e-3) -> np.ndarray:
    u = as_field(u)
    x, t = _split(z)
    return (u(x, t + h) - u(x, t - h)) / (2.0 * h)


def apply_H(p: ProblemSpec, u, z, h: float = 1e-3) -> np.ndarray:
    """``H u = sum a_ij X_i X_j u + sum b_i X_i u - d_t u`` by finite differences."""
    u = as_field(u)
    x, t = _split(z)
    spec = p.spec
    a = p.a_at(x, t)
    b = p.b_at(x, t)
    out = -tdiff(u, (x, t), h)
    for i in range(spec.q):
        out = out + b[..., i] * xdiff(spec, u, i, (x, t), h)
        for j in range(spec.q):
            out = out + a[..., i, j] * xxdiff(spec, u, i, j, (x, t), h)
    return out


# ---------------------------------------------------------------------------
# Taylor polynomials


def taylor_p(m: int, u, base: SpaceTimePoint, spec: GroupSpec, h: float = 1e-4) -> ScalarField:
    """``P_0 = u(base)``; ``P_1 = u(base) + sum_{i<q} X_i u(base) (x_i - xi_i)``."""
    if m not in (0, 1):
        raise ValueError(f"Taylor polynomials are available for m in {{0, 1}}, got {m}")
    u = as_field(u)
    u0 = float(u(base.x, base.t))
    if m == 0:
        return ScalarField(lambda x, t: np.full(np.broadcast_shapes(np.shape(x)[:-1], np.shape(t)), u0),
                           label="P0")
    grad = np.array([float(xdiff(spec, u, i, base, h)) for i in range(spec.q)])
    xi = base.x[: spec.q].copy()
    q = spec.q

    def p1(x, t):
        x = np.asarray(x, dtype=float)
        val = u0 + (x[..., :q] - xi) @ grad
        return np.broadcast_to(val, np.broadcast_shapes(val.shape, np.shape(t))).copy()

    return ScalarField(p1, label="P1")


# ---------------------------------------------------------------------------
# norms


def _region_box(region, spec) -> Box:
    if isinstance(region, Box):
        return region
    if isinstance(region, Cylinder):
        r = region.radius
        half = r ** np.asarray(spec.sigma, dtype=float) * 2.0
        c = region.center
        t0 = c.t - r * r if region.kind != "future" else c.t
        t1 = c.t + r * r if region.kind != "past" else c.t
        return Box(tuple(c.x - half), tuple(c.x + half), t0, t1 if t1 > t0 else t0 + 1e-12)
    raise TypeError("region must be a Box or a Cylinder")


def _region_points(region, spec, unit: np.ndarray):
    """Map unit-cube samples of dimension n+1 into the region (rejection for cylinders)."""
    box = _region_box(region, spec)
    lo = np.append(box.lower, box.t0)
    hi = np.append(box.upper, box.t1)
    pts = lo + unit * (hi - lo)
    x, t = pts[..., :-1], pts[..., -1]
    if isinstance(region, Cylinder):
        keep = cylinder_mask(region, x, t, spec)
        return x, t, keep
    return x, t, np.ones(x.shape[:-1], dtype=bool)


def sample_pairs(region, spec: GroupSpec, count: int, seed: int = 0):
    """Deterministic low-discrepancy pair sample; a longer request extends a shorter one.

    Even-indexed pairs are independent points of the region, odd-indexed pairs
    are near-diagonal with a log-uniform separation down to ``2^-10`` of the
    region size.
    """
    d = spec.n + 1
    eng = qmc.Halton(d=2 * d, scramble=True, seed=substream(seed, "pair-sampling"))
    unit = eng.random(count)
    first = unit[:, :d]
    second = unit[:, d:].copy()
    near = np.arange(count) % 2 == 1
    scale = 2.0 ** (-10.0 * second[near, :1])
    second[near] = np.clip(first[near] + scale * (second[near] - 0.5), 0.0, 1.0)
    x1, t1, k1 = _region_points(region, spec, first)
    x2, t2, k2 = _region_points(region, spec, second)
    keep = k1 & k2 & (np.max(np.abs(first - second), axis=-1) > 0)
    return x1[keep], t1[keep], x2[keep], t2[keep]


def _grid_neighbor_pairs(u, region, spec):
    """All nearest-neighbour node pairs (each axis and time) inside the region."""
    grid = u.grid
    x, t = grid.node_coords()
    inside = _region_points_mask(region, spec, x, t)
    pairs = []
    for axis in range(x.ndim - 1):
        sl_a = [slice(None)] * (x.ndim - 1)
        sl_b = list(sl_a)
        sl_a[axis] = slice(0, -1)
        sl_b[axis] = slice(1, None)
        sa, sb = tuple(sl_a), tuple(sl_b)
        ok = inside[sa] & inside[sb]
        pairs.append((x[sa][ok], t[sa][ok], x[sb][ok], t[sb][ok]))
    return [np.concatenate(c) for c in zip(*pairs)]


def _region_points_mask(region, spec, x, t):
    if isinstance(region, Cylinder):
        return cylinder_mask(region, x, t, spec)
    return _region_box(region, spec).contains(x, t, slack=1e-12)


def _holder_quotient(vals1, vals2, dp, alpha):
    ok = dp > 0
    if not np.any(ok):
        return 0.0
    return float(np.max(np.abs(vals1[ok] - vals2[ok]) / dp[ok] ** alpha, initial=0.0))


def holder_norm_estimate(u, m: int, alpha: float, region, spec: GroupSpec, sample_pairs_count: int = 2048,
                         seed: int = 0, h: float = 1e-4, return_parts: bool = False):
    """Sampled estimate of the ``C_X^{m,alpha}`` norm on ``region``.

    The zero-order part is ``sup|u| + [u]_alpha``.  For ``m >= 1`` the
    lower-order seminorm ``[u]_alpha`` is replaced by the derivative terms
    ``sum_i (sup|X_i u| + [X_i u]_alpha)`` and the first-order quotient;
    for ``m = 2`` the terms for ``X_i X_j u`` and ``d_t u`` are added.
    Distances are parabolic quasi-distances.  Pairs come from
    :func:`sample_pairs` (so the estimate is non-decreasing in the pair
    count) plus all grid-neighbour pairs when ``u`` is a grid function.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if m not in (0, 1, 2):
        raise ValueError(f"m must be 0, 1 or 2, got {m}")
    field_u = as_field(u)
    x1, t1, x2, t2 = sample_pairs(region, spec, sample_pairs_count, seed)
    if hasattr(u, "grid") and m == 0:
        gx1, gt1, gx2, gt2 = _grid_neighbor_pairs(u, region, spec)
        x1, t1 = np.concatenate([x1, gx1]), np.concatenate([t1, gt1])
        x2, t2 = np.concatenate([x2, gx2]), np.concatenate([t2, gt2])
    if len(x1) == 0:
        raise ValueError("no sample pairs fell inside the region")
    dp = parabolic_distance(spec, (x1, t1), (x2, t2))
    parts = {}

    def zero_order(fn, key):
        v1, v2 = fn(x1, t1), fn(x2, t2)
        parts[key + ".sup"] = float(max(np.max(np.abs(v1)), np.max(np.abs(v2))))
        parts[key + ".holder"] = _holder_quotient(v1, v2, dp, alpha)
        return v1, v2

    u1, u2 = zero_order(field_u, "u")
    total = parts["u.sup"]
    if m == 0:
        total += parts["u.holder"]
    else:
        q = spec.q
        d1 = []
        for i in range(q):
            fi = _derivative_field(spec, field_u, ("x", i), h)
            d1.append(zero_order(fi, f"X{i + 1}u"))
            total += parts[f"X{i + 1}u.sup"] + parts[f"X{i + 1}u.holder"]
        if m == 1:
            # |u(z) - u(zeta) - sum_j (z_j - zeta_j) X_j u(zeta)| / d_p^{1+alpha}, zeta = second point
            lin = np.einsum("pk,kp->p", x1[:, :q] - x2[:, :q], np.array([d[1] for d in d1]))
            ok = dp > 0
            parts["first_order"] = float(np.max(np.abs(u1 - u2 - lin)[ok] / dp[ok] ** (1 + alpha),
                                                initial=0.0))
            total += parts["first_order"]
        else:
            for i in range(q):
                for j in range(q):
                    fij = _derivative_field(spec, field_u, ("xx", i, j), max(h, 1e-3))
                    zero_order(fij, f"X{i + 1}X{j + 1}u")
                    total += parts[f"X{i + 1}X{j + 1}u.sup"] + parts[f"X{i + 1}X{j + 1}u.holder"]
            ft = _derivative_field(spec, field_u, ("t",), max(h, 1e-3))
            zero_order(ft, "dtu")
            total += parts["dtu.sup"] + parts["dtu.holder"]
    parts["pairs"] = int(len(x1))
    return (total, parts) if return_parts else total


def _derivative_field(spec, u, which, h):
    if which[0] == "x":
        return lambda x, t: xdiff(spec, u, which[1], (x, t), h)
    if which[0] == "xx":
        return lambda x, t: xxdiff(spec, u, which[1], which[2], (x, t), h)
    return lambda x, t: tdiff(u, (x, t), h)


def sobolev_sup_estimate(u, p: ProblemSpec, h: float | None = None, region: Box | None = None) -> float:
    """Discrete ``S_X^infty`` norm of a grid function.

    ``sup|u|`` runs over all nodes (of ``region`` when given); the derivative
    sups run over interior nodes whose flow stencils (step ``h``, default one
    spatial cell) stay in the grid box and whose time neighbours exist.
    """
    grid = u.grid
    spec = p.spec
    x, t = grid.node_coords()
    vals = u.values
    if region is not None:
        sel = region.contains(x, t, slack=1e-12)
        if not np.any(sel):
            raise ValueError("region contains no grid nodes")
        total = float(np.max(np.abs(vals[sel])))
    else:
        total = float(np.max(np.abs(vals)))
    if h is None:
        h = float(min(grid.spacing))
    if grid.nt < 2:
        raise ValueError("grid too small: need at least two time steps")
    lv = slice(1, grid.nt)
    xi, ti = x[lv], t[lv]
    mask = grid.box_contains_margin(xi, 2 * h, spec)
    if region is not None:
        mask &= region.contains(xi, ti, slack=1e-12)
    if not np.any(mask):
        raise ValueError(f"grid too small: no interior node with margin {2 * h:g}")
    xs, ts = xi[mask], ti[mask]
    field_u = u.as_field()
    q = spec.q
    for i in range(q):
        total += float(np.max(np.abs(xdiff(spec, field_u, i, (xs, ts), h))))
        for j in range(q):
            total += float(np.max(np.abs(xxdiff(spec, field_u, i, j, (xs, ts), h))))
    dt = grid.dt
    total += float(np.max(np.abs(tdiff(field_u, (xs, ts), dt))))
    return total


def taylor_remainder_check(u, m: int, alpha: float, base: SpaceTimePoint, region, spec: GroupSpec,
                           samples: int = 4096, seed: int = 0, h: float = 1e-4):
    """``sup_z |u(z) - P_m u(z)| / d_p(z, base)^{m+alpha}`` over sampled ``z``."""
    if m not in (0, 1):
        raise ValueError(f"m must be 0 or 1, got {m}")
    u = as_field(u)
    pm = taylor_p(m, u, base, spec, h)
    eng = qmc.Halton(d=spec.n + 1, scramble=True, seed=substream(seed, "taylor-remainder"))
    x, t, keep = _region_points(region, spec, eng.random(samples))
    x, t = x[keep], t[keep]
    dp = parabolic_distance(spec, (x, t), (base.x, base.t))
    ok = dp > 1e-12
    x, t, dp = x[ok], t[ok], dp[ok]
    if len(dp) == 0:
        raise ValueError("no sample points away from the base point")
    quot = np.abs(u(x, t) - pm(x, t)) / dp ** (m + alpha)
    k = int(np.argmax(quot))
    return float(quot[k]), SpaceTimePoint(x[k], float(t[k]))


# ---------------------------------------------------------------------------
# Hormander rank


def _jacobian(fn, x, eps):
    n = x.shape[-1]
    cols = []
    for k in range(n):
        e = np.zeros(n)
        e[k] = eps
        cols.append((fn(x + e) - fn(x - e)) / (2 * eps))
    return np.stack(cols, axis=-1)


def _bracket(fx, fy, eps):
    """``[X, Y]^k = sum_j (X_j d_j Y_k - Y_j d_j X_k)`` as a new coefficient function."""

    def br(x):
        return _jacobian(fy, x, eps) @ fx(x) - _jacobian(fx, x, eps) @ fy(x)

    return br


def hormander_rank(spec: GroupSpec, x, step: int | None = None, fields=None, tol: float = 1e-8,
                   return_singular: bool = False):
    """Rank of ``{X_i}`` and their iterated brackets up to ``step`` at ``x``.

    ``fields`` restricts the generating set (zero-based indices).  The rank
    counts singular values above ``tol`` relative to the largest.
    """
    x = _check_point(spec, np.asarray(x, dtype=float))
    if x.ndim != 1:
        raise ValueError("hormander_rank takes a single point")
    s = spec.step if step is None else int(step)
    if not 1 <= s <= 3:
        raise ValueError("bracket depth must be between 1 and 3")
    idx = list(range(spec.q)) if fields is None else [int(i) for i in fields]
    if not idx or any(not 0 <= i < spec.q for i in idx):
        raise ValueError("invalid generator subset")
    gens = [(lambda y, i=i: spec.fields(y)[..., i, :]) for i in idx]
    level = list(gens)
    family = list(gens)
    eps = 1e-4
    for _ in range(1, s):
        nxt = [_bracket(g, f, eps) for g in gens for f in level]
        family.extend(nxt)
        level = nxt
    mat = np.array([f(x) for f in family])
    sv = np.linalg.svd(mat, compute_uv=False)
    rank = int(np.sum(sv > tol * max(sv[0], 1e-300))) if sv.size and sv[0] > 0 else 0
    return (rank, sv) if return_singular else rank


__all__ = [
    "DomainError", "ProblemSpec", "ScalarField", "apply_H", "as_field", "constant_field",
    "constant_matrix", "holder_norm_estimate", "hormander_rank", "parabolic_boundary_sample",
    "sample_pairs", "sobolev_sup_estimate", "taylor_p", "taylor_remainder_check", "tdiff",
    "xdiff", "xxdiff",
]
