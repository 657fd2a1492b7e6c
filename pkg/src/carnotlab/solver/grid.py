"""Space-time tensor grids and grid functions."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from ..calculus import DomainError, ScalarField
from ..groups import GroupSpec, flow
from ..metrics import Box

MIN_NODES = 8
_SNAP = 1e-9


@dataclass(frozen=True)
class Grid:
    """Uniform grid on ``box``: ``nx[k]`` nodes per axis and ``nt`` implicit steps.

    There are ``nt + 1`` time levels.  The parabolic boundary is the whole
    initial level plus the side nodes of every later level.
    """

    box: Box
    nx: tuple[int, ...]
    nt: int

    @property
    def n(self) -> int:
        return len(self.nx)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.nt + 1,) + self.nx

    @property
    def spatial_shape(self) -> tuple[int, ...]:
        return self.nx

    @property
    def num_spatial(self) -> int:
        return int(np.prod(self.nx))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple((hi - lo) / (m - 1) for lo, hi, m in zip(self.box.lower, self.box.upper, self.nx))

    @property
    def dt(self) -> float:
        return (self.box.t1 - self.box.t0) / self.nt

    @property
    def times(self) -> np.ndarray:
        return self.box.t0 + self.dt * np.arange(self.nt + 1)

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, m) for lo, hi, m in zip(self.box.lower, self.box.upper, self.nx)]

    def spatial_coords(self) -> np.ndarray:
        """Node coordinates of one level, shape ``(*nx, n)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def node_coords(self):
        """``(x, t)`` for every node, shapes ``(nt+1, *nx, n)`` and ``(nt+1, *nx)``."""
        xs = self.spatial_coords()
        x = np.broadcast_to(xs, (self.nt + 1,) + xs.shape)
        t = np.broadcast_to(self.times.reshape((-1,) + (1,) * self.n), self.shape)
        return x, t

    def side_mask(self) -> np.ndarray:
        """Spatial nodes on the box faces, shape ``nx``."""
        mask = np.zeros(self.nx, dtype=bool)
        for k in range(self.n):
            idx = [slice(None)] * self.n
            idx[k] = 0
            mask[tuple(idx)] = True
            idx[k] = -1
            mask[tuple(idx)] = True
        return mask

    def boundary_mask(self) -> np.ndarray:
        mask = np.broadcast_to(self.side_mask(), self.shape).copy()
        mask[0] = True
        return mask

    def interior_flat(self) -> np.ndarray:
        """Flat (C-order) indices of the spatial interior nodes."""
        return np.flatnonzero(~self.side_mask().ravel())

    def box_contains_margin(self, x, margin: float, spec: GroupSpec) -> np.ndarray:
        """Nodes whose flows ``exp(+-margin X_i)`` stay inside the spatial box."""
        x = np.asarray(x, dtype=float)
        lo, hi = np.asarray(self.box.lower), np.asarray(self.box.upper)
        ok = np.all((x >= lo) & (x <= hi), axis=-1)
        for i in range(spec.q):
            for s in (margin, -margin):
                y = flow(spec, i, s, x)
                ok &= np.all((y >= lo - 1e-12) & (y <= hi + 1e-12), axis=-1)
        return ok

    # -- interpolation

    def locate(self, pts: np.ndarray):
        """Multilinear interpolation data for spatial points ``(m, n)``.

        Returns flat node indices and weights, both ``(m, 2^n)``, and a mask
        of points inside the box.  Fractional offsets within ``1e-9`` of a
        node are snapped so on-grid points use a single node.
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        lo = np.asarray(self.box.lower)
        h = np.asarray(self.spacing)
        nx = np.asarray(self.nx)
        s = (pts - lo) / h
        inside = np.all((s >= -_SNAP) & (s <= nx - 1 + _SNAP), axis=-1)
        s = np.clip(s, 0.0, nx - 1)
        base = np.minimum(np.floor(s).astype(np.int64), nx - 2)
        theta = s - base
        theta = np.where(theta < _SNAP, 0.0, theta)
        theta = np.where(theta > 1 - _SNAP, 1.0, theta)
        strides = np.array([int(np.prod(self.nx[k + 1:])) for k in range(self.n)], dtype=np.int64)
        corners = np.array(list(product((0, 1), repeat=self.n)), dtype=np.int64)
        idx = (base[:, None, :] + corners[None]) @ strides
        w = np.prod(np.where(corners[None] == 1, theta[:, None, :], 1.0 - theta[:, None, :]), axis=-1)
        return idx, w, inside


def build_grid(box: Box, nx, nt: int) -> Grid:
    nxs = tuple(int(v) for v in np.broadcast_to(np.atleast_1d(nx), (box.n,)))
    if any(v < MIN_NODES for v in nxs):
        raise ValueError(f"need at least {MIN_NODES} nodes per axis, got {nxs}")
    if int(nt) < MIN_NODES:
        raise ValueError(f"need at least {MIN_NODES} time steps, got {nt}")
    return Grid(box, nxs, int(nt))


@dataclass
class GridFunction:
    """Node values of shape ``grid.shape`` plus solver diagnostics."""

    grid: Grid
    values: np.ndarray
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values have shape {self.values.shape}, grid needs {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid function has non-finite values")

    def __call__(self, x, t) -> np.ndarray:
        """Multilinear in space, linear in time."""
        g = self.grid
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        shape = np.broadcast_shapes(x.shape[:-1], t.shape)
        xb = np.broadcast_to(x, shape + (g.n,)).reshape(-1, g.n)
        tb = np.broadcast_to(t, shape).reshape(-1)
        idx, w, inside = g.locate(xb)
        st = (tb - g.box.t0) / g.dt
        tin = (st >= -_SNAP) & (st <= g.nt + _SNAP)
        if not (np.all(inside) and np.all(tin)):
            raise DomainError("grid function evaluated outside its grid")
        st = np.clip(st, 0.0, g.nt)
        lev = np.minimum(np.floor(st).astype(np.int64), g.nt - 1)
        th = st - lev
        th = np.where(th < _SNAP, 0.0, np.where(th > 1 - _SNAP, 1.0, th))
        flat = self.values.reshape(g.nt + 1, -1)
        v0 = np.sum(flat[lev[:, None], idx] * w, axis=-1)
        v1 = np.sum(flat[np.minimum(lev + 1, g.nt)[:, None], idx] * w, axis=-1)
        return ((1 - th) * v0 + th * v1).reshape(shape)

    def as_field(self) -> ScalarField:
        return ScalarField(self, None, "grid-interpolated", label="grid")

    def level(self, k: int) -> np.ndarray:
        return self.values[k]


def sample_on_grid(grid: Grid, fn, levels=None) -> np.ndarray:
    """Evaluate ``fn(x, t)`` on all nodes (or on the given levels)."""
    x, t = grid.node_coords()
    if levels is not None:
        x, t = x[levels], t[levels]
    return np.asarray(fn(x, t), dtype=float)
