"""Scenario documents: schema, validation, TOML parsing and rendering.

A document has top-level ``id``, ``seed`` and ``description`` keys and the
sections ``[group]``, ``[problem]``, ``[grid]``, ``[solver]`` and
``[analysis]``.  Problem data are selector tables ``{kind = "...", ...}``
whose remaining keys are the selector's parameters.
"""

from __future__ import annotations

import copy
import hashlib
import math
import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .groups import GROUPS

CHECKS = (
    "oracle", "refinement", "complementarity", "obstacle", "penalty", "comparison",
    "decay-", "decay+", "dyadic", "monotone_decay", "class_membership", "rescaling", "sobolev",
    "group_axioms", "hormander", "volume",
)
SOLVER_METHODS = ("auto", "cauchy-dirichlet", "obstacle")
ORDERINGS = ("lexicographic", "red-black")

# selector kind -> {param: default}; a default of None marks a required parameter
FIELD_SELECTORS = {
    "constant": {"value": 0.0},
    "sine-initial": {"amp": 1.0},
    "power-linear": {"power": 1.5, "coef": 1.0, "slope": 0.0, "offset": 0.0, "axis": 0},
    "quadratic": {"c0": 0.0, "c": 1.0},
    "parabolic-cone": {"center": None, "tc": None, "beta": 0.5, "scale": 1.0},
}
A_SELECTORS = {
    "identity": {},
    "constant": {"matrix": None},
    "variable-diagonal": {"amp": 0.25, "freq": 1.0},
}
B_SELECTORS = {
    "zero": {},
    "constant": {"vector": None},
}
ORACLE_SELECTORS = {
    "heat-sine": {"amp": 1.0},
}


class ConfigError(ValueError):
    """Invalid scenario document; ``path`` names the offending field."""

    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}" if path else msg)
        self.path = path


@dataclass
class Scenario:
    id: str
    seed: int = 0
    description: str = ""
    group: dict = field(default_factory=dict)
    problem: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    analysis: dict = field(default_factory=dict)

    def sections(self) -> dict:
        return {"group": self.group, "problem": self.problem, "grid": self.grid,
                "solver": self.solver, "analysis": self.analysis}

    def config_hash(self) -> str:
        return hashlib.sha256(render(self).encode()).hexdigest()


# ---------------------------------------------------------------------------
# coercion helpers


def _float(v, path):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(path, f"expected a number, got {v!r}")
    return float(v)


def _int(v, path):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(path, f"expected an integer, got {v!r}")
    return int(v)


def _str(v, path):
    if not isinstance(v, str):
        raise ConfigError(path, f"expected a string, got {v!r}")
    return v


def _floats(v, path):
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        v = [v]
    if not isinstance(v, list):
        raise ConfigError(path, f"expected a list of numbers, got {v!r}")
    return [_float(x, f"{path}[{i}]") for i, x in enumerate(v)]


def _ints(v, path):
    if isinstance(v, int) and not isinstance(v, bool):
        v = [v]
    if not isinstance(v, list):
        raise ConfigError(path, f"expected a list of integers, got {v!r}")
    return [_int(x, f"{path}[{i}]") for i, x in enumerate(v)]


def _matrix(v, path):
    if not isinstance(v, list) or not all(isinstance(r, list) for r in v):
        raise ConfigError(path, "expected a list of rows")
    return [_floats(r, f"{path}[{i}]") for i, r in enumerate(v)]


def _param(v, default, path):
    if default is None:
        # required parameters are typed by shape
        if isinstance(v, list) and v and isinstance(v[0], list):
            return _matrix(v, path)
        if isinstance(v, list):
            return _floats(v, path)
        return _float(v, path)
    if isinstance(default, int) and not isinstance(default, bool):
        return _int(v, path)
    if isinstance(default, float):
        return _float(v, path)
    return v


def _selector(tab, registry, path):
    if not isinstance(tab, dict):
        raise ConfigError(path, "expected a selector table with a 'kind' key")
    if "kind" not in tab:
        raise ConfigError(f"{path}.kind", "missing selector kind")
    kind = _str(tab["kind"], f"{path}.kind")
    if kind not in registry:
        raise ConfigError(f"{path}.kind", f"unknown selector '{kind}'; registered: {', '.join(sorted(registry))}")
    params = registry[kind]
    out = {"kind": kind}
    for key, val in tab.items():
        if key == "kind":
            continue
        if key not in params:
            raise ConfigError(f"{path}.{key}", f"unknown parameter for selector '{kind}'")
        out[key] = _param(val, params[key], f"{path}.{key}")
    for key, default in params.items():
        if key not in out:
            if default is None:
                raise ConfigError(f"{path}.{key}", f"selector '{kind}' requires this parameter")
            out[key] = default
    return dict(sorted(out.items()))


def _section(doc, name, spec, path=None):
    """Apply ``spec = {key: (coercer, default)}``; ``default is REQUIRED`` marks required keys."""
    path = path or name
    tab = doc.get(name, {})
    if not isinstance(tab, dict):
        raise ConfigError(path, "expected a table")
    for key in tab:
        if key not in spec:
            raise ConfigError(f"{path}.{key}", "unknown key")
    out = {}
    for key, (coerce, default) in spec.items():
        if key in tab:
            out[key] = coerce(tab[key], f"{path}.{key}")
        elif default is REQUIRED:
            raise ConfigError(f"{path}.{key}", "required key missing")
        elif default is not OPTIONAL:
            out[key] = coerce(copy.deepcopy(default), f"{path}.{key}")
    return out


REQUIRED = object()
OPTIONAL = object()


def _choice(options):
    def coerce(v, path):
        v = _str(v, path)
        if v not in options:
            raise ConfigError(path, f"must be one of {', '.join(options)}, got '{v}'")
        return v
    return coerce


def _checks(v, path):
    if not isinstance(v, list):
        raise ConfigError(path, "expected a list of check names")
    out = []
    for i, c in enumerate(v):
        c = _str(c, f"{path}[{i}]")
        if c not in CHECKS:
            raise ConfigError(f"{path}[{i}]", f"unknown check '{c}'; available: {', '.join(CHECKS)}")
        if c in out:
            raise ConfigError(f"{path}[{i}]", f"check '{c}' listed twice")
        out.append(c)
    return out


def _base(v, path):
    if isinstance(v, str):
        if v != "free-boundary":
            raise ConfigError(path, "must be a point [x..., t] or the string 'free-boundary'")
        return v
    return _floats(v, path)


def _region(v, path):
    if not (isinstance(v, list) and len(v) == 3):
        raise ConfigError(path, "expected [[lower...], [upper...], [t0, t1]]")
    lo, hi, tt = (_floats(x, f"{path}[{i}]") for i, x in enumerate(v))
    if len(tt) != 2:
        raise ConfigError(f"{path}[2]", "expected [t0, t1]")
    return [lo, hi, tt]


def _group_params(v, path):
    if not isinstance(v, dict):
        raise ConfigError(path, "expected a table")
    return {k: (_int(x, f"{path}.{k}") if isinstance(x, int) else x) for k, x in sorted(v.items())}


GROUP_SPEC = {"name": (_str, REQUIRED), "params": (_group_params, {})}
PROBLEM_SPEC = {
    "lambda": (_float, 1.0),
    "a": (lambda v, p: _selector(v, A_SELECTORS, p), {"kind": "identity"}),
    "b": (lambda v, p: _selector(v, B_SELECTORS, p), {"kind": "zero"}),
    "f": (lambda v, p: _selector(v, FIELD_SELECTORS, p), {"kind": "constant", "value": 0.0}),
    "g": (lambda v, p: _selector(v, FIELD_SELECTORS, p), REQUIRED),
    "phi": (lambda v, p: _selector(v, FIELD_SELECTORS, p), OPTIONAL),
}
GRID_SPEC = {
    "lower": (_floats, REQUIRED), "upper": (_floats, REQUIRED),
    "t0": (_float, 0.0), "t1": (_float, REQUIRED),
    "nx": (_ints, REQUIRED), "nt": (_int, REQUIRED),
}
SOLVER_SPEC = {
    "method": (_choice(SOLVER_METHODS), "auto"),
    "tol": (_float, 1e-10),
    "max_iter": (_int, 200_000),
    "omega": (_float, 1.0),
    "ordering": (_choice(ORDERINGS), "lexicographic"),
    "step_factor": (_float, 1.0),
}
ANALYSIS_SPEC = {
    "checks": (_checks, []),
    "m": (_int, 0),
    "alpha": (_float, 0.5),
    "kmax": (_int, 6),
    "k_fit": (_ints, [1, 5]),
    "base": (_base, OPTIONAL),
    "gamma_min": (_float, -math.inf),
    "gamma_max": (_float, math.inf),
    "bounds": (_floats, OPTIONAL),
    "oracle": (lambda v, p: _selector(v, ORACLE_SELECTORS, p), OPTIONAL),
    "oracle_tol": (_float, 1e-2),
    "refine_range": (_floats, [1.6, 2.6]),
    "complementarity_tol": (_float, 1e-8),
    "obstacle_tol": (_float, 1e-12),
    "penalty_tol": (_float, 5e-3),
    "penalty_eps": (_float, 1e-10),
    "comparison_trials": (_int, 2),
    "comparison_tol": (_float, 1e-10),
    "rescaling_r": (_floats, [0.25, 0.5, 1.0]),
    "rescaling_h": (_float, 1e-3),
    "rescaling_tol": (_float, 1e-4),
    "rescaling_field": (lambda v, p: _selector(v, FIELD_SELECTORS, p), {"kind": "quadratic", "c0": 0.0, "c": 1.0}),
    "sobolev_region": (_region, OPTIONAL),
    "sample_pairs": (_int, 2048),
    "volume_samples": (_int, 1_000_000),
    "volume_radii": (_floats, [0.5, 1.0, 2.0]),
    "volume_tol": (_float, 0.1),
    "points": (_int, 20),
}
TOP_KEYS = {"id", "seed", "description", "group", "problem", "grid", "solver", "analysis"}


def validate_document(doc: dict) -> Scenario:
    for key in doc:
        if key not in TOP_KEYS:
            raise ConfigError(key, "unknown key")
    if "id" not in doc:
        raise ConfigError("id", "required key missing")
    sid = _str(doc["id"], "id")
    seed = _int(doc.get("seed", 0), "seed")
    desc = _str(doc.get("description", ""), "description")
    group = _section(doc, "group", GROUP_SPEC)
    if group["name"] not in GROUPS:
        raise ConfigError("group.name", f"unknown group '{group['name']}'; registered: {', '.join(sorted(GROUPS))}")
    problem = _section(doc, "problem", PROBLEM_SPEC)
    grid = _section(doc, "grid", GRID_SPEC)
    solver = _section(doc, "solver", SOLVER_SPEC)
    analysis = _section(doc, "analysis", ANALYSIS_SPEC)
    s = Scenario(sid, seed, desc, group, problem, grid, solver, analysis)
    check_scenario(s)
    return s


def check_scenario(s: Scenario) -> None:
    """Cross-field preconditions (run before any solve)."""
    g = s.grid
    if len(g["lower"]) != len(g["upper"]):
        raise ConfigError("grid.upper", "lower and upper bounds differ in length")
    if any(h <= lo for lo, h in zip(g["lower"], g["upper"])):
        raise ConfigError("grid.upper", "each upper bound must exceed its lower bound")
    if not g["t1"] > g["t0"]:
        raise ConfigError("grid.t1", "t1 must exceed t0")
    if len(g["nx"]) not in (1, len(g["lower"])):
        raise ConfigError("grid.nx", "give one node count or one per axis")
    if any(n < 8 for n in g["nx"]):
        raise ConfigError("grid.nx", "need at least 8 nodes per axis")
    if g["nt"] < 8:
        raise ConfigError("grid.nt", f"need at least 8 time steps, got {g['nt']}")
    a = s.analysis
    if not 0.0 < a["alpha"] < 1.0:
        raise ConfigError("analysis.alpha", f"must lie in (0, 1), got {a['alpha']}")
    if a["m"] not in (0, 1, 2):
        raise ConfigError("analysis.m", f"must be 0, 1 or 2, got {a['m']}")
    if a["kmax"] < 0:
        raise ConfigError("analysis.kmax", "must be nonnegative")
    if len(a["k_fit"]) != 2 or a["k_fit"][0] > a["k_fit"][1]:
        raise ConfigError("analysis.k_fit", "expected [k_first, k_last]")
    if s.problem["lambda"] < 1.0:
        raise ConfigError("problem.lambda", "ellipticity constant must be at least 1")
    sv = s.solver
    if not 0.0 < sv["omega"] < 2.0:
        raise ConfigError("solver.omega", "must lie in (0, 2)")
    if not sv["tol"] > 0:
        raise ConfigError("solver.tol", "must be positive")
    if sv["method"] == "obstacle" and "phi" not in s.problem:
        raise ConfigError("problem.phi", "obstacle solve requested without an obstacle")
    checks = a["checks"]
    needs_phi = {"obstacle", "penalty"}
    for c in checks:
        if c in needs_phi and "phi" not in s.problem:
            raise ConfigError("analysis.checks", f"check '{c}' needs problem.phi")
    if {"decay-", "decay+"} & set(checks) and "base" not in a:
        raise ConfigError("analysis.base", "decay checks need a base point")
    if "decay-" in checks and "decay+" in checks:
        raise ConfigError("analysis.checks", "use one of decay- and decay+ per scenario")
    if {"dyadic", "monotone_decay"} & set(checks) and not {"decay-", "decay+"} & set(checks):
        raise ConfigError("analysis.checks", "dyadic and monotone_decay checks need a decay check")
    if "class_membership" in checks and "bounds" not in a:
        raise ConfigError("analysis.bounds", "class_membership needs bounds")
    if "bounds" in a and len(a["bounds"]) not in (3, 4):
        raise ConfigError("analysis.bounds", "expected three or four bounds")
    if "oracle" in checks and "oracle" not in a:
        raise ConfigError("analysis.oracle", "oracle check needs an oracle selector")
    base = a.get("base")
    if isinstance(base, list) and len(base) != len(g["lower"]) + 1:
        raise ConfigError("analysis.base", "base point needs n spatial coordinates and a time")


def parse_config(text: str) -> Scenario:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("", f"parse error: {exc}") from None
    return validate_document(doc)


# ---------------------------------------------------------------------------
# rendering


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return "nan"
        r = repr(v)
        return r if ("." in r or "e" in r or "n" in r) else r + ".0"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, list):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    if isinstance(v, dict):
        return "{ " + ", ".join(f"{k} = {_fmt(x)}" for k, x in v.items()) + " }"
    raise TypeError(f"cannot render {type(v).__name__}")


def render(s: Scenario) -> str:
    """TOML text of a scenario; selector tables are written inline."""
    lines = [f"id = {_fmt(s.id)}", f"seed = {s.seed}", f"description = {_fmt(s.description)}"]
    for name, tab in s.sections().items():
        lines.append("")
        lines.append(f"[{name}]")
        for key, val in tab.items():
            lines.append(f"{key} = {_fmt(val)}")
    return "\n".join(lines) + "\n"


def scenario_from_dict(doc: dict) -> Scenario:
    return validate_document(copy.deepcopy(doc))
