"""Selector registry, built-in scenarios, the run pipeline and report emission."""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import calculus as calc
from . import regularity as reg
from .calculus import ProblemSpec, ScalarField, constant_matrix
from .config import ConfigError, Scenario, check_scenario, scenario_from_dict
from .groups import (GroupSpec, SpaceTimePoint, compose, dilate, flow, hom_norm, invert, make_group)
from .metrics import Box, quasi_distance, substream, volume_growth_exponent
from .solver import (ConvergenceError, MonotonicityError, build_grid, comparison_trials,
                     complementarity_residual, solve_cauchy_dirichlet, solve_obstacle,
                     solve_obstacle_penalty)

# ---------------------------------------------------------------------------
# selectors


def make_field(sel: dict, spec: GroupSpec, box: Box) -> ScalarField:
    kind = sel["kind"]
    if kind == "constant":
        return calc.constant_field(sel["value"])
    if kind == "sine-initial":
        lo, hi = np.asarray(box.lower), np.asarray(box.upper)
        amp = sel["amp"]
        return ScalarField(lambda x, t: amp * np.prod(np.sin(np.pi * (x - lo) / (hi - lo)), axis=-1)
                           + 0.0 * np.asarray(t), label="sine-initial")
    if kind == "power-linear":
        ax, pw, cf, sl, off = sel["axis"], sel["power"], sel["coef"], sel["slope"], sel["offset"]
        return ScalarField(lambda x, t: cf * np.abs(x[..., ax]) ** pw + sl * x[..., ax] + off + 0.0 * np.asarray(t),
                           label="power-linear")
    if kind == "quadratic":
        c0, c, q = sel["c0"], sel["c"], spec.q
        return ScalarField(lambda x, t: c0 + c * np.sum(x[..., :q] ** 2, axis=-1) + 0.0 * np.asarray(t),
                           label="quadratic")
    if kind == "parabolic-cone":
        center = np.asarray(sel["center"], dtype=float)
        tc, beta, scale = sel["tc"], sel["beta"], sel["scale"]
        if center.shape != (spec.n,):
            raise ConfigError("problem.phi.center", f"needs {spec.n} coordinates")

        def cone(x, t):
            d = quasi_distance(spec, x, center)
            return -scale * (d * d + np.maximum(tc - np.asarray(t), 0.0)) ** (beta / 2.0)

        return ScalarField(cone, label="parabolic-cone")
    raise ConfigError("problem", f"unknown field selector '{kind}'")


def make_a(sel: dict, spec: GroupSpec):
    kind, q = sel["kind"], spec.q
    if kind == "identity":
        return constant_matrix(np.eye(q))
    if kind == "constant":
        mat = np.asarray(sel["matrix"], dtype=float)
        if mat.shape != (q, q):
            raise ConfigError("problem.a.matrix", f"needs a {q} x {q} matrix")
        return constant_matrix(mat)
    if kind == "variable-diagonal":
        amp, freq = sel["amp"], sel["freq"]

        def a(x, t):
            d = 1.0 + amp * np.sin(freq * x[..., :q] + np.asarray(t)[..., None])
            return d[..., :, None] * np.eye(q)

        return a
    raise ConfigError("problem.a", f"unknown selector '{kind}'")


def make_b(sel: dict, spec: GroupSpec):
    if sel["kind"] == "zero":
        return constant_matrix(np.zeros(spec.q))
    vec = np.asarray(sel["vector"], dtype=float)
    if vec.shape != (spec.q,):
        raise ConfigError("problem.b.vector", f"needs {spec.q} components")
    return constant_matrix(vec)


def make_oracle(sel: dict, box: Box):
    if sel["kind"] == "heat-sine":
        if len(box.lower) != 1:
            raise ConfigError("analysis.oracle", "heat-sine oracle is one-dimensional")
        lo, length, amp = box.lower[0], box.upper[0] - box.lower[0], sel["amp"]
        return lambda x, t: (amp * np.exp(-(np.pi / length) ** 2 * (np.asarray(t) - box.t0))
                             * np.sin(np.pi * (x[..., 0] - lo) / length))
    raise ConfigError("analysis.oracle", f"unknown oracle '{sel['kind']}'")


def build_problem(s: Scenario):
    spec = make_group(s.group["name"], **s.group["params"])
    g = s.grid
    if len(g["lower"]) != spec.n:
        raise ConfigError("grid.lower", f"group '{spec.name}' needs {spec.n} coordinates")
    box = Box(tuple(g["lower"]), tuple(g["upper"]), g["t0"], g["t1"])
    pr = s.problem
    phi = make_field(pr["phi"], spec, box) if "phi" in pr else None
    p = ProblemSpec(spec, make_a(pr["a"], spec), make_b(pr["b"], spec), make_field(pr["f"], spec, box),
                    make_field(pr["g"], spec, box), phi, box, pr["lambda"], s.analysis["alpha"])
    grid = build_grid(box, g["nx"][0] if len(g["nx"]) == 1 else g["nx"], g["nt"])
    return spec, p, grid


# ---------------------------------------------------------------------------
# built-in scenarios

_BUILTIN = {
    "euclid-heat-1d": {
        "description": "1D heat equation against the separation-of-variables solution",
        "group": {"name": "euclidean", "params": {"n": 1}},
        "problem": {"g": {"kind": "sine-initial"}},
        "grid": {"lower": [0.0], "upper": [1.0], "t1": 0.1, "nx": [64], "nt": 256},
        "solver": {"method": "cauchy-dirichlet"},
        "analysis": {"checks": ["oracle", "refinement", "complementarity"],
                     "oracle": {"kind": "heat-sine"}},
    },
    "euclid-obstacle-rate-alpha": {
        "description": "C^alpha obstacle (parabolic cone, alpha = 1/2) touching u at the base point",
        "group": {"name": "euclidean", "params": {"n": 1}},
        "problem": {"f": {"kind": "constant", "value": 20.0}, "g": {"kind": "constant", "value": 0.0},
                    "phi": {"kind": "parabolic-cone", "center": [0.0], "tc": 0.5, "beta": 0.5}},
        "grid": {"lower": [-1.5], "upper": [1.5], "t1": 0.5, "nx": [301], "nt": 2500},
        "analysis": {"checks": ["complementarity", "obstacle", "penalty", "decay-", "dyadic",
                                "monotone_decay", "class_membership"],
                     "m": 0, "alpha": 0.5, "base": [0.0, 0.5], "gamma_min": 0.35, "gamma_max": 0.8,
                     "bounds": [1.4, 22.0, 2.4]},
    },
    "euclid-obstacle-c2": {
        "description": "smooth obstacle -x^2; decay of u - phi at the free boundary",
        "group": {"name": "euclidean", "params": {"n": 1}},
        "problem": {"f": {"kind": "constant", "value": 6.0}, "g": {"kind": "constant", "value": 0.0},
                    "phi": {"kind": "quadratic", "c": -1.0}},
        "grid": {"lower": [-1.0], "upper": [1.0], "t1": 1.0, "nx": [513], "nt": 400},
        "solver": {"omega": 1.9},
        "analysis": {"checks": ["complementarity", "obstacle", "decay-", "dyadic", "monotone_decay",
                                "sobolev", "class_membership"],
                     "m": 2, "base": "free-boundary", "gamma_min": 1.7, "gamma_max": 2.3,
                     "sobolev_region": [[-0.9], [0.9], [0.5, 1.0]], "bounds": [1.1, 6.6, 8.6]},
    },
    "initial-state-c1alpha": {
        "description": "C^{1,alpha} initial datum |x|^{3/2} + x/2; decay of u - P_1 g at (0, 0)",
        "group": {"name": "euclidean", "params": {"n": 1}},
        "problem": {"f": {"kind": "constant", "value": 1.0},
                    "g": {"kind": "power-linear", "power": 1.5, "slope": 0.5},
                    "phi": {"kind": "power-linear", "power": 1.5, "slope": 0.5, "offset": -0.25}},
        "grid": {"lower": [-1.0], "upper": [1.0], "t1": 0.25, "nx": [513], "nt": 1250},
        "solver": {"omega": 1.5},
        "analysis": {"checks": ["complementarity", "obstacle", "decay+", "dyadic", "monotone_decay",
                                "class_membership"],
                     "m": 1, "alpha": 0.5, "base": [0.0, 0.0], "gamma_min": 1.3,
                     "bounds": [1.6, 1.1, 10.0, 10.0]},
    },
    "heisenberg-smoke": {
        "description": "structural checks on the Heisenberg group and a small Cauchy-Dirichlet solve",
        "group": {"name": "heisenberg"},
        "problem": {"g": {"kind": "quadratic", "c": 1.0}},
        "grid": {"lower": [-1.0, -1.0, -1.0], "upper": [1.0, 1.0, 1.0], "t1": 0.1, "nx": [12], "nt": 16},
        "analysis": {"checks": ["group_axioms", "hormander", "volume", "rescaling", "complementarity"]},
    },
    "heisenberg-obstacle-c2": {
        "description": "obstacle -(x^2 + y^2) on the Heisenberg group at 24^3 x 64",
        "group": {"name": "heisenberg"},
        "problem": {"f": {"kind": "constant", "value": 6.0}, "g": {"kind": "constant", "value": 0.0},
                    "phi": {"kind": "quadratic", "c": -1.0}},
        "grid": {"lower": [-1.0, -1.0, -0.5], "upper": [1.0, 1.0, 0.5], "t1": 0.5, "nx": [24], "nt": 64},
        "solver": {"tol": 1e-9},
        "analysis": {"checks": ["complementarity", "obstacle", "comparison", "decay-", "monotone_decay",
                                "dyadic"],
                     "m": 2, "base": "free-boundary", "kmax": 4, "k_fit": [1, 3],
                     "gamma_min": 1.5, "gamma_max": 2.5, "comparison_trials": 2},
    },
}


def builtin_ids() -> list[str]:
    return sorted(_BUILTIN)


def builtin(name: str) -> Scenario:
    if name not in _BUILTIN:
        raise ConfigError("id", f"unknown built-in scenario '{name}'; available: {', '.join(builtin_ids())}")
    return scenario_from_dict({"id": name, **_BUILTIN[name]})


# ---------------------------------------------------------------------------
# reports


@dataclass
class Report:
    scenario_id: str
    checks: list = field(default_factory=list)
    decay: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def add(self, check, status, measured=None, bound=None, note=None):
        row = {"check": check, "status": status, "measured": measured, "bound": bound}
        if note:
            row["note"] = note
        self.checks.append(row)

    def add_composite(self, check, subchecks, measured, bound):
        """One row for ``check``; the individual results go to ``diagnostics['subchecks']``."""
        ok = all(c["status"] == "pass" for c in subchecks)
        self.diagnostics.setdefault("subchecks", {})[check] = subchecks
        self.add(check, "pass" if ok else "fail", measured, bound)

    @property
    def passed(self) -> bool:
        return all(c["status"] in ("pass", "warn") for c in self.checks)

    def status_of(self, check: str) -> str:
        rows = [c for c in self.checks if c["check"] == check]
        if not rows:
            raise KeyError(check)
        return "pass" if all(c["status"] in ("pass", "warn") for c in rows) else "fail"


DECAY_HEADER = ["scenario_id", "kind", "k", "s_k", "gamma_target", "gamma_fitted", "c_envelope"]
CHECKS_HEADER = ["scenario_id", "check", "status", "measured", "bound"]


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render_csv(r: Report, which: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if which == "decay":
        w.writerow(DECAY_HEADER)
        for row in r.decay:
            w.writerow([r.scenario_id] + [_cell(row[k]) for k in DECAY_HEADER[1:]])
    else:
        w.writerow(CHECKS_HEADER)
        for row in r.checks:
            w.writerow([r.scenario_id] + [_cell(row[k]) for k in CHECKS_HEADER[1:]])
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return _jsonable(v.item())
    return v


def render_json(r: Report) -> str:
    doc = {"scenario_id": r.scenario_id, "passed": r.passed, "checks": r.checks, "decay": r.decay,
           "diagnostics": r.diagnostics, "provenance": r.provenance}
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def emit_report(r: Report, fmt: str, path) -> list[Path]:
    """Write ``decay.csv`` + ``checks.csv`` (csv), ``summary.json`` (json) or all three into ``path``."""
    if fmt not in ("csv", "json", "all"):
        raise ValueError("format must be csv, json or all")
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt in ("csv", "all"):
        for name in ("decay", "checks"):
            p = out / f"{name}.csv"
            p.write_text(render_csv(r, name))
            written.append(p)
    if fmt in ("json", "all"):
        p = out / "summary.json"
        p.write_text(render_json(r))
        written.append(p)
    return written


# ---------------------------------------------------------------------------
# pipeline


def _status(ok: bool) -> str:
    return "pass" if ok else "fail"


def free_boundary_base(u, phi, axis: int = 0, tol: float = 1e-8) -> SpaceTimePoint:
    """Free-boundary point on the positive ``axis`` line through the origin at the final level.

    The last contact node is refined to sub-grid accuracy by extrapolating
    ``sqrt(u - phi)`` linearly from the next two nodes (``u - phi`` vanishes
    quadratically there).
    """
    grid = u.grid
    axes = grid.axes()
    idx = [int(np.argmin(np.abs(a))) for a in axes]
    t = grid.times[-1]
    xs = grid.spatial_coords()
    sl = tuple(slice(None) if k == axis else idx[k] for k in range(grid.n))
    line = xs[sl]
    gap = u.values[-1][sl] - phi(line, np.full(len(line), t))
    pos = axes[axis] > 0
    cont = np.flatnonzero((gap < tol) & pos)
    if len(cont) == 0:
        raise ValueError("no contact node on the positive axis at the final level")
    i = int(cont.max())
    point = line[i].copy()
    if i + 2 < len(line) and gap[i + 1] > tol and gap[i + 2] > gap[i + 1]:
        s1, s2 = math.sqrt(gap[i + 1]), math.sqrt(gap[i + 2])
        a1, a2 = axes[axis][i + 1], axes[axis][i + 2]
        root = a1 - s1 * (a2 - a1) / (s2 - s1)
        point[axis] = float(np.clip(root, axes[axis][i], a1))
    return SpaceTimePoint(point, t)


class _Context:
    def __init__(self, s: Scenario, workers: int):
        self.s, self.workers = s, workers
        self.a = s.analysis
        self.spec, self.p, self.grid = build_problem(s)
        self.u = None
        self.solver_error = None
        self._decay = None

    def solver_kw(self):
        sv = self.s.solver
        return {"tol": sv["tol"], "max_iter": sv["max_iter"], "omega": sv["omega"],
                "ordering": sv["ordering"], "step_factor": sv["step_factor"]}

    def solve(self, p=None, grid=None):
        p = p or self.p
        grid = grid or self.grid
        method = self.s.solver["method"]
        if method == "auto":
            method = "obstacle" if p.phi is not None else "cauchy-dirichlet"
        fn = solve_obstacle if method == "obstacle" else solve_cauchy_dirichlet
        return fn(p, grid, **self.solver_kw())

    def base(self):
        b = self.a["base"]
        if b == "free-boundary":
            return free_boundary_base(self.u, self.p.phi)
        return SpaceTimePoint(b[:-1], b[-1])

    def decay(self):
        if self._decay is None:
            kind = "past" if "decay-" in self.a["checks"] else "future"
            anchor = "obstacle" if kind == "past" else "boundary"
            data = self.p.phi if anchor == "obstacle" else self.p.g
            base = self.base()
            F, gamma = reg.build_F(self.a["m"], anchor, data, base, self.spec, self.a["alpha"])
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", reg.DecayTruncated)
                seq = reg.decay_sequence(self.u, F, base, kind, self.a["kmax"], self.spec, gamma)
            k0, k1 = self.a["k_fit"]
            try:
                reg.fit_exponent(seq, range(k0, k1 + 1))
            except ValueError:
                seq.gamma_fitted = None
            self._decay = (seq, [str(w.message) for w in caught])
        return self._decay


SOLVER_FREE = {"group_axioms", "hormander", "volume", "rescaling"}


def _check_group_axioms(ctx, rep):
    spec = ctx.spec
    rng = substream(ctx.s.seed, "group-axioms")
    x, y, z = (rng.uniform(-2, 2, size=(1000, spec.n)) for _ in range(3))
    lams = rng.uniform(0.1, 10.0, size=20)
    assoc = np.max(np.abs(compose(spec, compose(spec, x, y), z) - compose(spec, x, compose(spec, y, z))))
    inv = np.max(np.abs(compose(spec, x, invert(spec, x))))
    dil = nrm = 0.0
    for lam in lams:
        lhs = dilate(spec, lam, compose(spec, x, y))
        rhs = compose(spec, dilate(spec, lam, x), dilate(spec, lam, y))
        dil = max(dil, float(np.max(np.abs(lhs - rhs) / (1 + np.abs(lhs)))))
        nx = hom_norm(spec, x)
        nrm = max(nrm, float(np.max(np.abs(hom_norm(spec, dilate(spec, lam, x)) - lam * nx) / (lam * nx))))
    hs = rng.uniform(-1, 1, size=1000)
    rev = max(np.max(np.abs(flow(spec, i, -hs, flow(spec, i, hs, x)) - x)) for i in range(spec.q))
    subs = [{"check": name, "status": _status(val < bound), "measured": float(val), "bound": bound}
            for name, val, bound in (("associativity", assoc, 1e-12), ("inverse", inv, 1e-14),
                                     ("dilation_automorphism", dil, 1e-12), ("norm_homogeneity", nrm, 1e-12),
                                     ("flow_reversibility", rev, 1e-10))]
    # one row: worst residual relative to its own tolerance
    worst = max(c["measured"] / c["bound"] for c in subs)
    rep.add_composite("group_axioms", subs, worst, 1.0)


def _check_hormander(ctx, rep):
    rng = substream(ctx.s.seed, "hormander")
    pts = rng.uniform(-1, 1, size=(ctx.a["points"], ctx.spec.n))
    ranks = [calc.hormander_rank(ctx.spec, p) for p in pts]
    rep.add("hormander", _status(min(ranks) == ctx.spec.n), float(min(ranks)), float(ctx.spec.n))


def _check_volume(ctx, rep):
    from .groups import homogeneous_dimension
    Q = homogeneous_dimension(ctx.spec)
    expo = volume_growth_exponent(ctx.spec, tuple(ctx.a["volume_radii"]), ctx.a["volume_samples"],
                                  seed=ctx.s.seed, workers=ctx.workers)
    rep.add("volume", _status(abs(expo - Q) <= ctx.a["volume_tol"]), expo, float(Q))


def _check_rescaling(ctx, rep):
    u = make_field(ctx.a["rescaling_field"], ctx.spec, ctx.p.domain)
    origin = SpaceTimePoint(np.zeros(ctx.spec.n), 0.0)
    tol = ctx.a["rescaling_tol"]
    subs = []
    for r in ctx.a["rescaling_r"]:
        res = reg.verify_rescaling_identity(ctx.p, u, r, origin, ctx.a["rescaling_h"], seed=ctx.s.seed)
        subs.append({"check": f"r={r:g}", "status": _status(res < tol), "measured": res, "bound": tol})
    rep.add_composite("rescaling", subs, max(c["measured"] for c in subs), tol)


def _check_oracle(ctx, rep):
    exact = make_oracle(ctx.a["oracle"], ctx.p.domain)
    x, t = ctx.grid.node_coords()
    err = float(np.max(np.abs(ctx.u.values[-1] - exact(x[-1], t[-1]))))
    ctx.oracle_error = err
    rep.add("oracle", _status(err < ctx.a["oracle_tol"]), err, ctx.a["oracle_tol"])


def _check_refinement(ctx, rep):
    exact = make_oracle(ctx.a["oracle"], ctx.p.domain)
    g = ctx.grid
    fine = build_grid(g.box, tuple(2 * n - 1 for n in g.nx), 2 * g.nt)
    uf = ctx.solve(grid=fine)
    x, t = fine.node_coords()
    ef = float(np.max(np.abs(uf.values[-1] - exact(x[-1], t[-1]))))
    x, t = g.node_coords()
    ec = float(np.max(np.abs(ctx.u.values[-1] - exact(x[-1], t[-1]))))
    ratio = ec / ef if ef > 0 else math.inf
    lo, hi = ctx.a["refine_range"]
    rep.add("refinement", _status(lo <= ratio <= hi), ratio, f"[{lo:g}, {hi:g}]")


def _check_complementarity(ctx, rep):
    res = complementarity_residual(ctx.p, ctx.grid, ctx.u)
    rep.add("complementarity", _status(res < ctx.a["complementarity_tol"]), res, ctx.a["complementarity_tol"])


def _check_obstacle(ctx, rep):
    x, t = ctx.grid.node_coords()
    gap = float(np.min(ctx.u.values - ctx.p.phi(x, t)))
    tol = ctx.a["obstacle_tol"]
    rep.add("obstacle", _status(gap >= -tol), gap, -tol)


def _check_penalty(ctx, rep):
    v = solve_obstacle_penalty(ctx.p, ctx.grid, eps=ctx.a["penalty_eps"],
                               step_factor=ctx.s.solver["step_factor"])
    diff = float(np.max(np.abs(ctx.u.values - v.values)))
    rep.add("penalty", _status(diff < ctx.a["penalty_tol"]), diff, ctx.a["penalty_tol"])


def _check_comparison(ctx, rep):
    res = comparison_trials(ctx.p, ctx.grid, ctx.a["comparison_trials"], seed=ctx.s.seed, base=ctx.u,
                            **ctx.solver_kw())
    rep.add("comparison", _status(res["max_violation"] <= ctx.a["comparison_tol"]), res["max_violation"],
            ctx.a["comparison_tol"])


def _check_decay(ctx, rep, name):
    seq, notes = ctx.decay()
    c_env = seq.envelope(seq.gamma_target)
    for k, s in seq.entries:
        rep.decay.append({"kind": seq.kind, "k": k, "s_k": s, "gamma_target": seq.gamma_target,
                          "gamma_fitted": seq.gamma_fitted, "c_envelope": c_env})
    ctx.diag_decay = {"base": [*map(float, seq.base_point.x), seq.base_point.t], "node_counts": seq.node_counts,
                      "truncated": seq.truncated, "warnings": notes}
    g = seq.gamma_fitted
    lo, hi = ctx.a["gamma_min"], ctx.a["gamma_max"]
    ok = g is not None and lo <= g <= hi
    bound = f"[{lo:g}, {hi:g}]"
    rep.add(name, _status(ok), g, bound, note="; ".join(notes) or None)


def _check_dyadic(ctx, rep):
    seq, _ = ctx.decay()
    c = seq.envelope(seq.gamma_target)
    ok, worst = reg.check_dyadic(seq, seq.gamma_target, c)
    rep.add("dyadic", _status(ok), None if worst is None else float(worst), c)


def _check_monotone(ctx, rep):
    seq, _ = ctx.decay()
    v = seq.values
    jump = float(np.max(np.diff(v), initial=-math.inf)) if len(v) > 1 else -math.inf
    rep.add("monotone_decay", _status(jump <= 0.0), jump, 0.0)


def _check_sobolev(ctx, rep):
    reg_ = ctx.a.get("sobolev_region")
    region = Box(tuple(reg_[0]), tuple(reg_[1]), reg_[2][0], reg_[2][1]) if reg_ else None
    val = calc.sobolev_sup_estimate(ctx.u, ctx.p, region=region)
    rep.add("sobolev", _status(math.isfinite(val)), val, "finite")


def _check_class(ctx, rep):
    res = reg.class_membership(ctx.p, ctx.u, ctx.a["m"], ctx.a["bounds"], ctx.a["alpha"],
                               sample_pairs=ctx.a["sample_pairs"], seed=ctx.s.seed)
    failed = sum(c["status"] != "pass" for c in res["checks"])
    rep.add_composite("class_membership", res["checks"], float(failed), 0.0)


CHECK_FNS = {
    "group_axioms": _check_group_axioms, "hormander": _check_hormander, "volume": _check_volume,
    "rescaling": _check_rescaling, "oracle": _check_oracle, "refinement": _check_refinement,
    "complementarity": _check_complementarity, "obstacle": _check_obstacle, "penalty": _check_penalty,
    "comparison": _check_comparison, "decay-": lambda c, r: _check_decay(c, r, "decay-"),
    "decay+": lambda c, r: _check_decay(c, r, "decay+"), "dyadic": _check_dyadic,
    "monotone_decay": _check_monotone, "sobolev": _check_sobolev, "class_membership": _check_class,
}


def run_scenario(s: Scenario, workers: int = 1) -> Report:
    """Build, solve and analyse one scenario; failures are recorded per check."""
    check_scenario(s)
    ctx = _Context(s, workers)
    g = ctx.grid
    rep = Report(s.id, provenance={
        "config_sha256": s.config_hash(), "seed": s.seed,
        "grid": {"lower": list(g.box.lower), "upper": list(g.box.upper), "t0": g.box.t0, "t1": g.box.t1,
                 "nx": list(g.nx), "nt": g.nt},
    })
    checks = s.analysis["checks"]
    if any(c not in SOLVER_FREE for c in checks):
        try:
            ctx.u = ctx.solve()
            info = ctx.u.info
            rep.diagnostics["solver"] = {"method": info["method"], "total_sweeps": info["total_sweeps"],
                                         "max_level_residual": max(info["residual_per_level"]),
                                         "max_level_sweeps": max(info["sweeps_per_level"])}
        except (ConvergenceError, MonotonicityError, ValueError) as exc:
            ctx.solver_error = exc
            rep.diagnostics["solver"] = {"error": str(exc),
                                         **getattr(exc, "diagnostics", {})}
    for name in checks:
        if name not in SOLVER_FREE and ctx.u is None:
            rep.add(name, "skipped", None, None, note=f"solver failed: {ctx.solver_error}")
            continue
        try:
            CHECK_FNS[name](ctx, rep)
        except Exception as exc:  # a failing check must not abort the others
            rep.add(name, "fail", None, None, note=f"{type(exc).__name__}: {exc}")
    if hasattr(ctx, "diag_decay"):
        rep.diagnostics["decay"] = ctx.diag_decay
    return rep
