"""Homogeneous Carnot groups on R^n.

A group is carried by a :class:`GroupSpec`: the group law and the
generator coefficients are plain vectorised evaluators, so every structural
law (associativity, dilation automorphism, left invariance) is something we
check by sampling rather than something we assume.

Points are numpy arrays whose last axis has length ``n``; every operation
broadcasts over leading axes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

ComposeLaw = Callable[[np.ndarray, np.ndarray], np.ndarray]
FieldCoeffs = Callable[[np.ndarray], np.ndarray]

FLOW_SUBSTEP = 0.05


@dataclass(frozen=True)
class GroupSpec:
    """A homogeneous Carnot group ``(R^n, compose_law, dilation)``.

    ``field_coeffs(x)`` returns an array of shape ``(..., q, n)`` whose row
    ``i`` holds the coefficients of ``X_i = sum_k c_ik(x) d/dx_k``.
    ``inverse_law`` is optional; without it inverses are found by Newton
    iteration on ``compose(p, r) = 0``.  ``exp_law`` (also optional) maps
    first-layer coefficients ``w`` to ``Exp(sum_i w_i X_i)`` exactly; without
    it the exponential is integrated numerically.
    """

    name: str
    layer_dims: tuple[int, ...]
    compose_law: ComposeLaw
    field_coeffs: FieldCoeffs
    inverse_law: Callable[[np.ndarray], np.ndarray] | None = None
    exp_law: Callable[[np.ndarray], np.ndarray] | None = None
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        if not dims or any(d <= 0 for d in dims):
            raise ValueError(f"layer dimensions must be positive, got {self.layer_dims}")
        object.__setattr__(self, "layer_dims", dims)

    @property
    def n(self) -> int:
        return sum(self.layer_dims)

    @property
    def q(self) -> int:
        return self.layer_dims[0]

    @property
    def step(self) -> int:
        return len(self.layer_dims)

    @property
    def sigma(self) -> tuple[int, ...]:
        return tuple(j + 1 for j, d in enumerate(self.layer_dims) for _ in range(d))

    def fields(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.asarray(self.field_coeffs(x), dtype=float)


@dataclass(frozen=True)
class SpaceTimePoint:
    """A point ``(x, t)`` of the parabolic group on R^{n+1}."""

    x: np.ndarray
    t: float

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        t = float(self.t)
        if x.ndim != 1 or not (np.all(np.isfinite(x)) and math.isfinite(t)):
            raise ValueError("space-time point needs a finite 1-D x and a finite t")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "t", t)

    def __eq__(self, other):
        if not isinstance(other, SpaceTimePoint):
            return NotImplemented
        return self.t == other.t and np.array_equal(self.x, other.x)

    def __hash__(self):
        return hash((self.t, tuple(self.x)))

    def as_array(self) -> np.ndarray:
        return np.append(self.x, self.t)


def _check_point(spec: GroupSpec, p, what: str = "point") -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim == 0 or p.shape[-1] != spec.n:
        raise ValueError(f"{what} has dimension {p.shape[-1] if p.ndim else 0}, "
                         f"group '{spec.name}' needs {spec.n}")
    return p


def compose(spec: GroupSpec, p, r) -> np.ndarray:
    p = _check_point(spec, p)
    r = _check_point(spec, r)
    return np.asarray(spec.compose_law(p, r), dtype=float)


def invert(spec: GroupSpec, p, tol: float = 1e-14, max_iter: int = 50) -> np.ndarray:
    p = _check_point(spec, p)
    if spec.inverse_law is not None:
        return np.asarray(spec.inverse_law(p), dtype=float)
    return _newton_inverse(spec, p, tol, max_iter)


def _newton_inverse(spec, p, tol, max_iter):
    # Jacobian of r -> p∘r by central differences, one Newton solve per point.
    r = -p.copy()
    eps = 1e-6
    eye = np.eye(spec.n)
    for _ in range(max_iter):
        res = compose(spec, p, r)
        if np.max(np.abs(res), initial=0.0) < tol:
            break
        cols = [(compose(spec, p, r + eps * e) - compose(spec, p, r - eps * e)) / (2 * eps)
                for e in eye]
        jac = np.stack(cols, axis=-1)
        r = r - np.linalg.solve(jac, res[..., None])[..., 0]
    return r


def dilate(spec: GroupSpec, lam: float, p) -> np.ndarray:
    if not lam > 0:
        raise ValueError(f"dilation factor must be positive, got {lam}")
    p = _check_point(spec, p)
    return p * np.power(float(lam), np.asarray(spec.sigma, dtype=float))


def dilate_st(spec: GroupSpec, lam: float, z: SpaceTimePoint) -> SpaceTimePoint:
    return SpaceTimePoint(dilate(spec, lam, z.x), lam * lam * z.t)


def compose_st(spec: GroupSpec, z1: SpaceTimePoint, z2: SpaceTimePoint) -> SpaceTimePoint:
    return SpaceTimePoint(compose(spec, z1.x, z2.x), z1.t + z2.t)


def invert_st(spec: GroupSpec, z: SpaceTimePoint) -> SpaceTimePoint:
    return SpaceTimePoint(invert(spec, z.x), -z.t)


def hom_norm(spec: GroupSpec, p) -> np.ndarray:
    """``||x||_G = (sum_j |x_j|^(2 l!/sigma_j))^(1/(2 l!))``."""
    p = _check_point(spec, p)
    big = 2 * math.factorial(spec.step)
    roots = np.abs(p) ** (1.0 / np.asarray(spec.sigma, dtype=float))
    scale = np.max(roots, axis=-1)
    safe = np.where(scale > 0, scale, 1.0)
    # |p_j|^(big/sigma_j) / scale^big = (root_j / scale)^big, each ratio in [0, 1]
    inner = np.sum((roots / safe[..., None]) ** big, axis=-1)
    return np.where(scale > 0, safe * inner ** (1.0 / big), 0.0)


def hom_norm_st(spec: GroupSpec, z: SpaceTimePoint | tuple) -> np.ndarray:
    """``||(x,t)||_L = (||x||_G^(2 l!) + |t|^(l!))^(1/(2 l!))``."""
    x, t = (z.x, z.t) if isinstance(z, SpaceTimePoint) else z
    lf = math.factorial(spec.step)
    gx = hom_norm(spec, x)
    st = np.sqrt(np.abs(np.asarray(t, dtype=float)))
    scale = np.maximum(gx, st)
    safe = np.where(scale > 0, scale, 1.0)
    inner = (gx / safe) ** (2 * lf) + (st / safe) ** (2 * lf)
    return np.where(scale > 0, safe * inner ** (1.0 / (2 * lf)), 0.0)


def homogeneous_dimension(spec: GroupSpec) -> int:
    return sum((j + 1) * d for j, d in enumerate(spec.layer_dims))


def combined_field(spec: GroupSpec, w, x) -> np.ndarray:
    """Evaluate ``sum_i w_i X_i`` at ``x``; ``w`` broadcasts against ``x[..., :q]``."""
    c = spec.fields(x)
    w = np.asarray(w, dtype=float)
    return np.einsum("...i,...ik->...k", np.broadcast_to(w, c.shape[:-1]), c)


def flow_combined(spec: GroupSpec, w, h, x) -> np.ndarray:
    """Integrate ``gamma' = sum_i w_i X_i(gamma)`` from ``x`` for time ``h``.

    Classical RK4 with ``ceil(|h| |w| / 0.05)`` substeps (largest over the
    batch), so the step length along the curve never exceeds 0.05.
    """
    x = _check_point(spec, x)
    w = np.asarray(w, dtype=float)
    h = np.asarray(h, dtype=float)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(h)) and np.all(np.isfinite(w))):
        raise ValueError("flow needs finite start point, step and direction")
    speed = np.linalg.norm(np.broadcast_to(w, np.broadcast_shapes(w.shape, x.shape[:-1] + (spec.q,))), axis=-1)
    reach = float(np.max(np.abs(h) * speed, initial=0.0))
    nsub = max(1, math.ceil(reach / FLOW_SUBSTEP - 1e-12))
    dt = (h / nsub)[..., None]

    def rhs(y):
        return combined_field(spec, w, y)

    y = np.array(np.broadcast_to(x, np.broadcast_shapes(x.shape, dt.shape[:-1] + (spec.n,))))
    for _ in range(nsub):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * dt * k1)
        k3 = rhs(y + 0.5 * dt * k2)
        k4 = rhs(y + dt * k3)
        y = y + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
    if not np.all(np.isfinite(y)):
        raise FloatingPointError("flow produced a non-finite state")
    return y


def flow(spec: GroupSpec, field_index: int, h, x) -> np.ndarray:
    """``exp(h X_i)(x)`` for the generator with zero-based index ``field_index``."""
    if not 0 <= field_index < spec.q:
        raise ValueError(f"generator index {field_index} out of range for q={spec.q}")
    w = np.zeros(spec.q)
    w[field_index] = 1.0
    return flow_combined(spec, w, h, x)


def exp_map(spec: GroupSpec, w) -> np.ndarray:
    """``Exp(sum_i w_i X_i) = exp(1 * sum_i w_i X_i)(0)``."""
    w = np.asarray(w, dtype=float)
    if spec.exp_law is not None:
        return np.asarray(spec.exp_law(w), dtype=float)
    origin = np.zeros(w.shape[:-1] + (spec.n,))
    return flow_combined(spec, w, 1.0, origin)


def _exponential_coordinates(n: int):
    # in exponential coordinates Exp(sum w_i X_i) = (w, 0)
    def exp_law(w):
        return np.concatenate([w, np.zeros(w.shape[:-1] + (n - w.shape[-1],))], axis=-1)

    return exp_law


# ---------------------------------------------------------------------------
# built-in instances


def euclidean(n: int) -> GroupSpec:
    if n < 1:
        raise ValueError("Euclidean group needs n >= 1")

    def law(x, y):
        return x + y

    def coeffs(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.eye(n), x.shape[:-1] + (n, n)).copy()

    return GroupSpec(f"euclidean{n}", (n,), law, coeffs, inverse_law=np.negative,
                     exp_law=_exponential_coordinates(n), params={"dim": n})


def step_two(q: int, brackets: Sequence[np.ndarray], name: str | None = None) -> GroupSpec:
    """Step-two Carnot group in exponential coordinates.

    ``brackets[k]`` is an antisymmetric ``q x q`` matrix ``B^k``; the law is
    ``(x, y) o (x', y') = (x + x', y + y' + x^T B x' / 2)`` and
    ``X_i = d/dx_i + sum_k (sum_a x_a B^k_ai / 2) d/dy_k``.
    """
    mats = np.array([np.asarray(b, dtype=float) for b in brackets])
    if mats.ndim != 3 or mats.shape[1:] != (q, q):
        raise ValueError("each bracket matrix must be q x q")
    if not np.allclose(mats, -np.transpose(mats, (0, 2, 1))):
        raise ValueError("bracket matrices must be antisymmetric")
    m = mats.shape[0]
    n = q + m

    def law(p, r):
        xs, xr = p[..., :q], r[..., :q]
        quad = 0.5 * np.einsum("...a,kab,...b->...k", xs, mats, xr)
        return np.concatenate([xs + xr, p[..., q:] + r[..., q:] + quad], axis=-1)

    def coeffs(x):
        x = np.asarray(x, dtype=float)
        c = np.zeros(x.shape[:-1] + (q, n))
        c[..., :, :q] = np.eye(q)
        # second-layer component k of X_i: sum_a x_a B^k_ai / 2
        c[..., :, q:] = 0.5 * np.einsum("...a,kai->...ik", x[..., :q], mats)
        return c

    return GroupSpec(name or f"steptwo{q}x{m}", (q, m), law, coeffs, inverse_law=np.negative,
                     exp_law=_exponential_coordinates(n), params={"q": q, "brackets": mats.tolist()})


def heisenberg() -> GroupSpec:
    """First Heisenberg group: ``(x,y,z) o (x',y',z') = (x+x', y+y', z+z'+(xy'-yx')/2)``."""
    return step_two(2, [np.array([[0.0, 1.0], [-1.0, 0.0]])], name="heisenberg")


GROUPS = {
    "euclidean": euclidean,
    "heisenberg": heisenberg,
}


def make_group(name: str, **params) -> GroupSpec:
    try:
        factory = GROUPS[name]
    except KeyError:
        raise ValueError(f"unknown group '{name}'; registered: {', '.join(sorted(GROUPS))}") from None
    return factory(**params)
