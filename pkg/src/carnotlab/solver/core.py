"""Implicit-Euler time stepping with (projected) Gauss-Seidel relaxation."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from ..calculus import ProblemSpec
from . import kernels
from .grid import Grid, GridFunction
from .stencil import StencilOperator, discretize

ORDERINGS = ("lexicographic", "red-black")


class ConvergenceError(RuntimeError):
    """Relaxation hit its sweep cap; ``diagnostics`` holds where and how far it got."""

    def __init__(self, msg, diagnostics):
        super().__init__(msg)
        self.diagnostics = diagnostics


class _Operators:
    """Per-level stencils, rebuilt only when the coefficients change."""

    def __init__(self, p: ProblemSpec, grid: Grid, step_factor: float):
        self.p, self.grid, self.step_factor = p, grid, step_factor
        self._xs = grid.spatial_coords().reshape(-1, grid.n)[grid.interior_flat()]
        self._key = None
        self._op = None
        self.builds = 0

    def at(self, t: float) -> StencilOperator:
        tt = np.full(len(self._xs), t)
        key = (self.p.a_at(self._xs, tt), self.p.b_at(self._xs, tt))
        if self._key is None or not (np.array_equal(key[0], self._key[0])
                                     and np.array_equal(key[1], self._key[1])):
            self._op = discretize(self.p, self.grid, t, self.step_factor)
            self._key = key
            self.builds += 1
        return self._op


def _ordering(grid: Grid, ordering: str) -> np.ndarray:
    interior = grid.interior_flat()
    if ordering == "lexicographic":
        return interior.astype(np.int64)
    if ordering == "red-black":
        parity = np.sum(np.stack(np.unravel_index(interior, grid.nx)), axis=0) % 2
        return np.concatenate([interior[parity == 0], interior[parity == 1]]).astype(np.int64)
    raise ValueError(f"ordering must be one of {ORDERINGS}")


def _level_data(p: ProblemSpec, grid: Grid, n: int):
    xs = grid.spatial_coords().reshape(-1, grid.n)
    t = np.full(len(xs), grid.times[n])
    f = p.f(xs, t)
    g = p.g(xs, t)
    phi = p.phi(xs, t) if p.phi is not None else np.full(len(xs), -np.inf)
    return f, g, phi


def _march(p: ProblemSpec, grid: Grid, tol, max_iter, omega, ordering, step_factor, obstacle: bool):
    if not 0.0 < omega < 2.0:
        raise ValueError("relaxation factor omega must lie in (0, 2)")
    if obstacle and p.phi is None:
        raise ValueError("obstacle solve needs an obstacle phi")
    if obstacle:
        p.validate()
    ops = _Operators(p, grid, step_factor)
    order = _ordering(grid, ordering)
    side = grid.side_mask().ravel()
    N = grid.num_spatial
    vals = np.empty((grid.nt + 1, N))
    _, g0, phi0 = _level_data(p, grid, 0)
    vals[0] = g0
    sweeps_log, res_log = [], []
    dt = grid.dt
    for n in range(1, grid.nt + 1):
        op = ops.at(grid.times[n])
        f, g, phi = _level_data(p, grid, n)
        u = vals[n - 1].copy()
        u[side] = g[side]
        if obstacle:
            u = np.maximum(u, np.where(side, -np.inf, phi))
        d = 1.0 / dt - op.diag
        rhs = vals[n - 1] / dt - f
        sweeps, res = kernels.relax(op.offdiag.indptr.astype(np.int64), op.offdiag.indices.astype(np.int64),
                                    op.offdiag.data, d, rhs, phi if obstacle else np.zeros(N), u, order,
                                    float(omega), bool(obstacle), float(tol), int(max_iter))
        sweeps_log.append(int(sweeps))
        res_log.append(float(res))
        if not res < tol:
            diag = {"level": n, "sweeps": int(sweeps), "residual": float(res),
                    "sweeps_per_level": sweeps_log, "residual_per_level": res_log}
            raise ConvergenceError(f"relaxation did not reach tol={tol:g} at level {n} "
                                   f"(residual {res:.3g} after {sweeps} sweeps)", diag)
        vals[n] = u
    info = {"method": "psor" if obstacle else "gauss-seidel", "omega": float(omega), "ordering": ordering,
            "step_factor": float(step_factor), "tol": float(tol), "sweeps_per_level": sweeps_log,
            "residual_per_level": res_log, "total_sweeps": int(sum(sweeps_log)),
            "operator_builds": ops.builds}
    return GridFunction(grid, vals.reshape(grid.shape), info)


def solve_cauchy_dirichlet(p: ProblemSpec, grid: Grid, tol: float = 1e-10, max_iter: int = 200_000,
                           omega: float = 1.0, ordering: str = "lexicographic",
                           step_factor: float = 1.0) -> GridFunction:
    """``H u = f`` in the grid interior, ``u = g`` on the parabolic boundary."""
    return _march(p, grid, tol, max_iter, omega, ordering, step_factor, obstacle=False)


def solve_obstacle(p: ProblemSpec, grid: Grid, tol: float = 1e-10, max_iter: int = 200_000,
                   omega: float = 1.0, ordering: str = "lexicographic",
                   step_factor: float = 1.0) -> GridFunction:
    """``max{H u - f, phi - u} = 0`` by projected Gauss-Seidel (SOR when ``omega != 1``)."""
    return _march(p, grid, tol, max_iter, omega, ordering, step_factor, obstacle=True)


def solve_obstacle_penalty(p: ProblemSpec, grid: Grid, eps: float = 1e-10, step_factor: float = 1.0,
                           max_newton: int = 200) -> GridFunction:
    """Independent cross-check: penalised obstacle problem solved by semismooth Newton.

    Each level solves ``M u - rhs - (phi - u)_+ / eps = 0`` with direct
    sparse solves until the active set stops changing.
    """
    if p.phi is None:
        raise ValueError("penalty solve needs an obstacle phi")
    ops = _Operators(p, grid, step_factor)
    interior = grid.interior_flat()
    side = grid.side_mask().ravel()
    bnd = np.flatnonzero(side)
    N = grid.num_spatial
    vals = np.empty((grid.nt + 1, N))
    _, g0, _ = _level_data(p, grid, 0)
    vals[0] = g0
    dt = grid.dt
    newton_log = []
    for n in range(1, grid.nt + 1):
        op = ops.at(grid.times[n])
        f, g, phi = _level_data(p, grid, n)
        off = op.offdiag
        m_ii = (sp.diags(1.0 / dt - op.diag[interior]) - off[interior][:, interior]).tocsr()
        rhs = vals[n - 1][interior] / dt - f[interior] + off[interior][:, bnd] @ g[bnd]
        ph = phi[interior]
        u = np.maximum(vals[n - 1][interior], ph)
        active = ph - u > 0
        for it in range(max_newton):
            pen = sp.diags(active.astype(float) / eps)
            u = spsolve((m_ii + pen).tocsc(), rhs + active * ph / eps)
            new_active = ph - u > 0
            if np.array_equal(new_active, active):
                break
            active = new_active
        else:
            raise ConvergenceError(f"penalty Newton did not settle at level {n}", {"level": n})
        newton_log.append(it + 1)
        full = np.empty(N)
        full[bnd] = g[bnd]
        full[interior] = u
        vals[n] = full
    return GridFunction(grid, vals.reshape(grid.shape),
                        {"method": "penalty", "eps": eps, "newton_per_level": newton_log,
                         "step_factor": float(step_factor)})


def discrete_H(p: ProblemSpec, u: GridFunction, step_factor: float | None = None) -> np.ndarray:
    """``H_h u - f`` on levels ``1..nt`` (zero on side nodes), shape ``(nt, *nx)``."""
    grid = u.grid
    sf = u.info.get("step_factor", 1.0) if step_factor is None else step_factor
    ops = _Operators(p, grid, sf)
    vals = u.values.reshape(grid.nt + 1, -1)
    out = np.zeros((grid.nt, grid.num_spatial))
    interior = grid.interior_flat()
    for n in range(1, grid.nt + 1):
        op = ops.at(grid.times[n])
        f, _, _ = _level_data(p, grid, n)
        lu = op.apply(vals[n]).reshape(-1)
        r = lu - (vals[n] - vals[n - 1]) / grid.dt - f
        out[n - 1, interior] = r[interior]
    return out.reshape((grid.nt,) + grid.nx)


def complementarity_residual(p: ProblemSpec, grid: Grid, u: GridFunction,
                             step_factor: float | None = None) -> float:
    """``max |max{H_h u - f, phi - u}|`` over interior nodes of levels ``1..nt``.

    Without an obstacle this is the plain residual ``max |H_h u - f|``.
    """
    if u.grid != grid:
        raise ValueError("grid function lives on a different grid")
    r = discrete_H(p, u, step_factor)
    if p.phi is not None:
        x, t = grid.node_coords()
        phi = p.phi(x[1:], t[1:])
        r = np.maximum(r, phi - u.values[1:])
    interior = ~grid.side_mask()
    return float(np.max(np.abs(r[:, interior]), initial=0.0))


def comparison_trials(p: ProblemSpec, grid: Grid, trials: int, seed: int = 0, base: GridFunction | None = None,
                      **solver_kw) -> dict:
    """Randomised discrete comparison test.

    Each trial builds ordered data ``g2 = g + dg``, ``phi2 = phi + theta dg``
    and ``f2 = f - df`` with smooth nonnegative ``dg, df`` and
    ``theta in [0, 1]``, solves both problems and records ``max(u1 - u2)``.
    """
    from ..calculus import ScalarField
    from ..metrics import substream

    rng = substream(seed, "comparison")
    solve = solve_obstacle if p.phi is not None else solve_cauchy_dirichlet
    u1 = base if base is not None else solve(p, grid, **solver_kw)

    def bump(amp):
        k = rng.normal(size=grid.n) * 2.0
        w, c = rng.normal() * 2.0, rng.uniform(0, 2 * np.pi)
        return lambda x, t: amp * 0.5 * (1.0 + np.sin(np.asarray(x) @ k + w * np.asarray(t) + c))

    worst = -np.inf
    for _ in range(int(trials)):
        dg = bump(rng.uniform(0.0, 0.1))
        df = bump(rng.uniform(0.0, 1.0))
        theta = rng.uniform()
        g, f, phi = p.g, p.f, p.phi
        g2 = ScalarField(lambda x, t, g=g, dg=dg: g(x, t) + dg(x, t))
        f2 = ScalarField(lambda x, t, f=f, df=df: f(x, t) - df(x, t))
        phi2 = None if phi is None else ScalarField(
            lambda x, t, phi=phi, dg=dg, th=theta: phi(x, t) + th * dg(x, t))
        q = ProblemSpec(p.spec, p.a, p.b, f2, g2, phi2, p.domain, p.Lambda, p.alpha, p.meta)
        u2 = solve(q, grid, **solver_kw)
        worst = max(worst, float(np.max(u1.values - u2.values)))
    return {"trials": int(trials), "max_violation": float(worst)}
