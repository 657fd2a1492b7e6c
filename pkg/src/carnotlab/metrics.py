"""Distances, cylinders and volume growth on a homogeneous group."""

from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .groups import (GroupSpec, SpaceTimePoint, _check_point, compose, exp_map,
                     hom_norm, invert)

CYLINDER_KINDS = ("full", "past", "future")


def substream(seed: int, name: str) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, name)``."""
    key = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, zlib.crc32(name.encode())])
    return np.random.Generator(np.random.Philox(key))


def quasi_distance(spec: GroupSpec, x, y) -> np.ndarray:
    """``d^(x, y) = ||y^{-1} o x||_G``."""
    x = _check_point(spec, x)
    y = _check_point(spec, y)
    return hom_norm(spec, compose(spec, invert(spec, y), x))


def _xt(z):
    if isinstance(z, SpaceTimePoint):
        return z.x, z.t
    x, t = z
    return np.asarray(x, dtype=float), np.asarray(t, dtype=float)


def parabolic_distance(spec: GroupSpec, z1, z2, mode: str = "quasi", budget: int = 40):
    x1, t1 = _xt(z1)
    x2, t2 = _xt(z2)
    if mode == "quasi":
        d = quasi_distance(spec, x1, x2)
    elif mode == "cc":
        d = cc_distance_upper(spec, x1, x2, budget=budget)
    else:
        raise ValueError(f"mode must be 'quasi' or 'cc', got {mode!r}")
    return np.sqrt(d ** 2 + np.abs(np.asarray(t1) - np.asarray(t2)))


# ---------------------------------------------------------------------------
# Carnot-Caratheodory distance, upper bound by explicit sub-unit paths


def _endpoint(spec, start, controls):
    # controls: (..., S, q); segment s lasts 1/S, and its flow from y is y o Exp(w_s / S)
    nseg = controls.shape[-2]
    steps = exp_map(spec, controls / nseg)
    y = start
    for s in range(nseg):
        y = compose(spec, y, steps[..., s, :])
    return y


def _path_length(controls):
    return np.mean(np.linalg.norm(controls, axis=-1), axis=-1)


def _endpoint_jac(spec, x, flat, segments, eps=1e-6):
    """Endpoint and central-difference Jacobian ``(npair, n, S q)``."""
    npair, nparam = flat.shape
    q, n = spec.q, spec.n
    eye = eps * np.eye(nparam)[None]
    pert = np.concatenate([flat[:, None, :] + eye, flat[:, None, :] - eye, flat[:, None, :]], axis=1)
    ends = _endpoint(spec, np.broadcast_to(x[:, None, :], pert.shape[:2] + (n,)),
                     pert.reshape(npair, 2 * nparam + 1, segments, q))
    jac = (ends[:, :nparam] - ends[:, nparam:2 * nparam]).transpose(0, 2, 1) / (2 * eps)
    return ends[:, -1], jac


def _min_norm(jac, rhs):
    gram = jac @ jac.transpose(0, 2, 1) + 1e-12 * np.eye(jac.shape[1])
    lam = np.linalg.solve(gram, rhs[..., None])[..., 0]
    return np.einsum("bkp,bk->bp", jac, lam)


def _cc_batch(spec, x, y, budget, segments, restarts, seed, tol=1e-10, newton=8):
    """Best feasible path length for each pair in the batch.

    Each outer iteration first projects the controls onto the endpoint
    constraint by minimum-norm Newton steps, records the length of feasible
    iterates (endpoint within ``tol`` of ``y``), then replaces the controls by
    their component in the row space of the endpoint Jacobian, which shortens
    the path to first order.  Only feasible iterates are recorded, so the
    result is a genuine upper bound and can only decrease with ``budget``.
    """
    q = spec.q
    npair = x.shape[0]
    best = np.full(npair, np.inf)
    same = np.max(np.abs(x - y), axis=-1) == 0
    best[same] = 0.0
    rng = substream(seed, "cc-restarts")
    scale = (0.5 + np.linalg.norm(y - x, axis=-1))[:, None]
    for rs in range(restarts):
        # First restart starts near the straight first-layer guess, the rest are random.
        guess = np.repeat(y[:, :q] - x[:, :q], segments, axis=-1)
        noise = rng.normal(size=(npair, segments * q))
        flat = guess + (0.05 if rs == 0 else 1.0) * scale * noise
        for _ in range(budget):
            for _ in range(newton):
                end, jac = _endpoint_jac(spec, x, flat, segments)
                miss = y - end
                err = np.max(np.abs(miss), axis=-1)
                if np.all(err < tol):
                    break
                step = _min_norm(jac, miss)
                # cap the Newton step so near-singular Jacobians cannot throw the path away
                norm = np.linalg.norm(step, axis=-1, keepdims=True)
                cap = 2.0 * (1.0 + np.linalg.norm(flat, axis=-1, keepdims=True))
                flat = flat + step * np.minimum(1.0, cap / np.maximum(norm, 1e-300))
            end, jac = _endpoint_jac(spec, x, flat, segments)
            ok = np.max(np.abs(y - end), axis=-1) < tol
            length = _path_length(flat.reshape(npair, segments, q))
            best = np.where(ok & (length < best), length, best)
            flat = _min_norm(jac, np.einsum("bkp,bp->bk", jac, flat))
            if not np.all(np.isfinite(flat)):
                raise FloatingPointError("sub-unit path optimisation diverged")
    return best


def cc_distance_upper(spec: GroupSpec, x, y, budget: int = 40, segments: int = 16,
                      restarts: int = 3, seed: int = 0):
    """Length of the shortest sub-unit path found from ``x`` to ``y``.

    Paths use piecewise-constant controls on ``segments`` pieces.  Returns
    ``inf`` if no restart reached ``y`` within the iteration budget.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    x = _check_point(spec, x)
    y = _check_point(spec, y)
    shape = np.broadcast_shapes(x.shape, y.shape)[:-1]
    xb = np.broadcast_to(x, shape + (spec.n,)).reshape(-1, spec.n)
    yb = np.broadcast_to(y, shape + (spec.n,)).reshape(-1, spec.n)
    out = _cc_batch(spec, xb, yb, budget, segments, restarts, seed)
    return out.reshape(shape) if shape else float(out[0])


def sample_unit_ball(spec: GroupSpec, count: int, rng: np.random.Generator, radius: float = 1.0):
    """Uniform samples of the quasi-ball ``B_d^(0, radius)`` by rejection."""
    half = radius ** np.asarray(spec.sigma, dtype=float)
    out = []
    have = 0
    while have < count:
        cand = rng.uniform(-1.0, 1.0, size=(2 * count, spec.n)) * half
        keep = cand[hom_norm(spec, cand) < radius]
        out.append(keep)
        have += len(keep)
    return np.concatenate(out)[:count]


def distance_equivalence_scan(spec: GroupSpec, pairs, seed: int = 0, budget: int = 40):
    """Range of ``d / d^`` over pairs in the unit quasi-ball.

    ``pairs`` is either a sample count (>= 10) or an explicit ``(X, Y)`` pair
    of point arrays; coincident pairs are dropped.
    """
    if isinstance(pairs, (int, np.integer)):
        if pairs < 10:
            raise ValueError("need at least 10 sample pairs")
        rng = substream(seed, "equivalence-scan")
        xs = sample_unit_ball(spec, int(pairs), rng)
        ys = sample_unit_ball(spec, int(pairs), rng)
    else:
        xs, ys = (np.atleast_2d(np.asarray(a, dtype=float)) for a in pairs)
    keep = np.max(np.abs(xs - ys), axis=-1) > 0
    if not np.any(keep):
        raise ValueError("all requested pairs are coincident")
    xs, ys = xs[keep], ys[keep]
    d = cc_distance_upper(spec, xs, ys, budget=budget, seed=seed)
    dh = quasi_distance(spec, xs, ys)
    ratio = np.atleast_1d(d / dh)
    if not np.all(np.isfinite(ratio)):
        raise FloatingPointError("sub-unit path search failed on some pairs; raise the budget")
    return float(ratio.min()), float(ratio.max())


_MC_CHUNK = 1 << 17


def _mc_count(spec, r, seed, chunk_id, size):
    rng = substream(seed, f"volume-mc/{chunk_id}")
    half = r ** np.asarray(spec.sigma, dtype=float)
    pts = rng.uniform(-1.0, 1.0, size=(size, spec.n)) * half
    return int(np.count_nonzero(hom_norm(spec, pts) < r))


def ball_volume_mc(spec: GroupSpec, r: float, samples: int, seed: int = 0, workers: int = 1) -> float:
    """Monte-Carlo Lebesgue volume of ``B_d^(0, r)``.

    The bounding box is ``prod_j [-r^sigma_j, r^sigma_j]``.  Samples are drawn
    in fixed-size chunks with one keyed substream per chunk, so the estimate
    does not depend on ``workers``.
    """
    if not r > 0:
        raise ValueError("radius must be positive")
    if samples < 10_000:
        raise ValueError("use at least 10^4 samples")
    sizes = [_MC_CHUNK] * (samples // _MC_CHUNK)
    if samples % _MC_CHUNK:
        sizes.append(samples % _MC_CHUNK)
    jobs = list(enumerate(sizes))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            counts = list(pool.map(lambda j: _mc_count(spec, r, seed, *j), jobs))
    else:
        counts = [_mc_count(spec, r, seed, *j) for j in jobs]
    box = float(np.prod(2.0 * r ** np.asarray(spec.sigma, dtype=float)))
    return box * sum(counts) / samples


def volume_growth_exponent(spec: GroupSpec, radii=(0.5, 1.0, 2.0), samples: int = 1_000_000,
                           seed: int = 0, workers: int = 1) -> float:
    """Least-squares slope of ``log vol`` against ``log r`` (independent seeds per radius)."""
    vols = [ball_volume_mc(spec, r, samples, seed=seed + i, workers=workers) for i, r in enumerate(radii)]
    return float(np.polyfit(np.log(radii), np.log(vols), 1)[0])


# ---------------------------------------------------------------------------
# cylinders and boxes


@dataclass(frozen=True)
class Cylinder:
    """``C_r``, ``C_r^-`` or ``C_r^+`` around ``center``, built on quasi-balls.

    Time extents: full ``(t - r^2, t + r^2)``, past ``(t - r^2, t]``,
    future ``(t, t + r^2]``.
    """

    center: SpaceTimePoint
    radius: float
    kind: str = "full"

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("cylinder radius must be positive")
        if self.kind not in CYLINDER_KINDS:
            raise ValueError(f"cylinder kind must be one of {CYLINDER_KINDS}")


def cylinder_mask(c: Cylinder, x, t, spec: GroupSpec) -> np.ndarray:
    """Vectorised membership test for points ``(x[..., :], t[...])``."""
    x = _check_point(spec, x, "cylinder query")
    t = np.asarray(t, dtype=float)
    r2 = c.radius ** 2
    dt = t - c.center.t
    if c.kind == "full":
        tin = (dt > -r2) & (dt < r2)
    elif c.kind == "past":
        tin = (dt > -r2) & (dt <= 0)
    else:
        tin = (dt > 0) & (dt <= r2)
    return tin & (quasi_distance(spec, x, c.center.x) < c.radius)


def cylinder_contains(c: Cylinder, z: SpaceTimePoint, spec: GroupSpec) -> bool:
    return bool(cylinder_mask(c, z.x, z.t, spec))


@dataclass(frozen=True)
class Box:
    """Coordinate box ``prod [lower_j, upper_j] x [t0, t1]``."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    t0: float
    t1: float

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lo) != len(hi):
            raise ValueError("box bounds differ in length")
        if any(h <= l for l, h in zip(lo, hi)) or not self.t1 > self.t0:
            raise ValueError("box has a degenerate extent")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "t1", float(self.t1))

    @property
    def n(self) -> int:
        return len(self.lower)

    def contains(self, x, t, slack: float = 0.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        lo = np.asarray(self.lower) - slack
        hi = np.asarray(self.upper) + slack
        return (np.all((x >= lo) & (x <= hi), axis=-1)
                & (t >= self.t0 - slack) & (t <= self.t1 + slack))

    def sample(self, count: int, rng: np.random.Generator):
        pts = rng.uniform(size=(count, self.n + 1))
        lo = np.append(self.lower, self.t0)
        hi = np.append(self.upper, self.t1)
        pts = lo + pts * (hi - lo)
        return pts[:, :-1], pts[:, -1]


# ---------------------------------------------------------------------------
# measured structural constants


def quasi_triangle_constant(spec: GroupSpec, samples: int = 10_000, seed: int = 0,
                            radius: float = 1.0) -> float:
    """Largest observed ``d^(x,z) / (d^(x,y) + d^(y,z))`` over random triples."""
    rng = substream(seed, "quasi-triangle")
    x, y, z = (sample_unit_ball(spec, samples, rng, radius) for _ in range(3))
    lhs = quasi_distance(spec, x, z)
    rhs = quasi_distance(spec, x, y) + quasi_distance(spec, y, z)
    ok = rhs > 0
    return float(np.max(lhs[ok] / rhs[ok]))


def euclidean_comparison_constants(spec: GroupSpec, s: int, samples: int = 10_000,
                                   seed: int = 0) -> tuple[float, float]:
    """Measured ``c^-, c^+`` with ``c^-|x-y| <= d^(x,y) <= c^+|x-y|^(1/s)`` on the unit box."""
    rng = substream(seed, "euclid-compare")
    x = rng.uniform(-1, 1, size=(samples, spec.n))
    y = rng.uniform(-1, 1, size=(samples, spec.n))
    e = np.linalg.norm(x - y, axis=-1)
    d = quasi_distance(spec, x, y)
    ok = e > 0
    return float(np.min(d[ok] / e[ok])), float(np.max(d[ok] / e[ok] ** (1.0 / s)))


__all__ = [
    "Box", "Cylinder", "ball_volume_mc", "cc_distance_upper", "cylinder_contains",
    "cylinder_mask", "distance_equivalence_scan", "euclidean_comparison_constants",
    "parabolic_distance", "quasi_distance", "quasi_triangle_constant", "sample_unit_ball",
    "substream", "volume_growth_exponent",
]
