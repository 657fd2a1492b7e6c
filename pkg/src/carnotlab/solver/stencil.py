"""Monotone flow-based discretisation of the spatial part of H."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..calculus import ProblemSpec
from ..groups import flow_combined
from .grid import Grid

MAX_HALVINGS = 3
MONO_EPS = 1e-12


class MonotonicityError(RuntimeError):
    """The assembled stencil is not monotone (or a node's stencil cannot be placed)."""

    def __init__(self, msg, node=None):
        super().__init__(msg)
        self.node = node


@dataclass
class StencilOperator:
    """``L_h`` on one time level: ``(L_h u)_p = diag_p u_p + sum_q offdiag_pq u_q``.

    Rows of side nodes are empty.  ``offdiag`` is CSR with nonnegative
    entries; ``step`` holds the flow step used for each interior row.
    """

    grid: Grid
    offdiag: sp.csr_matrix
    diag: np.ndarray
    interior: np.ndarray
    step: np.ndarray
    time: float

    def apply(self, u_level: np.ndarray) -> np.ndarray:
        flat = np.asarray(u_level, dtype=float).reshape(-1)
        out = self.offdiag @ flat + self.diag * flat
        mask = np.zeros(flat.size, dtype=bool)
        mask[self.interior] = True
        out[~mask] = 0.0
        return out.reshape(self.grid.nx)

    def matrix(self) -> sp.csr_matrix:
        return (self.offdiag + sp.diags(self.diag)).tocsr()

    def check_monotone(self, eps: float = MONO_EPS) -> None:
        data = self.offdiag.data
        if data.size and data.min() < -eps:
            row = int(np.searchsorted(self.offdiag.indptr, int(np.argmin(data)), side="right") - 1)
            raise MonotonicityError(f"negative off-diagonal weight at node {row}", node=row)
        rows = self.interior
        off = np.asarray(self.offdiag.sum(axis=1)).ravel()[rows]
        d = self.diag[rows]
        bad = (d > eps) | (np.abs(d) < off * (1 - 1e-10) - eps)
        if np.any(bad):
            node = int(rows[np.argmax(bad)])
            raise MonotonicityError(f"diagonal does not dominate at node {node}", node=node)


def _directions(a: np.ndarray):
    """Pointwise eigen-decomposition ``a = sum_k lam_k v_k v_k^T``."""
    lam, vec = np.linalg.eigh(a)
    return lam, np.swapaxes(vec, -1, -2)  # vec[..., k, :] = v_k


def discretize(p: ProblemSpec, grid: Grid, t: float | None = None, step_factor: float = 1.0) -> StencilOperator:
    """Assemble ``L_h = sum_k lam_k D^2_{Y_k} + upwind(sum_i b_i X_i)`` at time ``t``.

    ``Y_k = sum_i v_ki X_i`` for the eigenvectors ``v_k`` of ``a``; each
    second difference uses the flow step ``h = step_factor * min(first-layer
    spacing)`` with multilinear interpolation of off-grid endpoints.  Rows
    whose endpoints leave the box retry with ``h / 2`` up to three times.
    """
    spec = p.spec
    if grid.n != spec.n:
        raise ValueError("grid dimension does not match the group")
    t = grid.box.t1 if t is None else float(t)
    q = spec.q
    N = grid.num_spatial
    interior = grid.interior_flat()
    xs = grid.spatial_coords().reshape(-1, spec.n)[interior]
    m = len(interior)
    tt = np.full(m, t)
    a = p.a_at(xs, tt)
    b = p.b_at(xs, tt)
    lam, vec = _directions(a)
    if np.any(lam < -1e-14):
        raise MonotonicityError("coefficient matrix is not positive semidefinite",
                                node=int(interior[np.argmin(lam.min(axis=-1))]))
    lam = np.maximum(lam, 0.0)
    h0 = step_factor * min(grid.spacing[:q])
    step = np.full(m, h0)

    # (row, weight, endpoint direction, sign, scaled-by-1/h^2?) terms; endpoint weights spread by interpolation
    dirs = [(vec[:, k, :], lam[:, k], 2) for k in range(q)]
    for i in range(q):
        e = np.zeros((m, q))
        e[:, i] = 1.0
        dirs.append((e, b[:, i], 1))

    pending = np.arange(m)
    rows_all, cols_all, vals_all = [], [], []
    diag = np.zeros(N)
    for attempt in range(MAX_HALVINGS + 1):
        rows, cols, vals = [], [], []
        dg = np.zeros(len(pending))
        failed = np.zeros(len(pending), dtype=bool)
        h = step[pending]
        for w, cf, order in dirs:
            w = w[pending]
            cf = cf[pending]
            if order == 2:
                signs = (1.0, -1.0)
                coef = cf / h ** 2
                dg -= 2.0 * coef
            else:
                signs = None
            for s in (signs or (1.0, -1.0)):
                if order == 1:
                    # upwind: b_i > 0 uses the forward point, b_i < 0 the backward one
                    coef = np.where(np.sign(cf) == s, np.abs(cf), 0.0) / h
                    dg -= coef
                active = coef > 0
                if not np.any(active):
                    continue
                ends = flow_combined(spec, w[active], s * h[active], xs[pending][active])
                idx, wt, inside = grid.locate(ends)
                bad = np.zeros(len(pending), dtype=bool)
                bad[np.flatnonzero(active)[~inside]] = True
                failed |= bad
                r = np.repeat(np.flatnonzero(active), wt.shape[1])
                rows.append(r)
                cols.append(idx.ravel())
                vals.append((coef[active][:, None] * wt).ravel())
        ok = ~failed
        ok_rows = np.flatnonzero(ok)
        remap = -np.ones(len(pending), dtype=np.int64)
        remap[ok_rows] = pending[ok_rows]
        if rows:
            r = np.concatenate(rows)
            keep = ok[r]
            rows_all.append(interior[remap[r[keep]]])
            cols_all.append(np.concatenate(cols)[keep])
            vals_all.append(np.concatenate(vals)[keep])
        diag[interior[pending[ok]]] = dg[ok]
        pending = pending[failed]
        if len(pending) == 0:
            break
        if attempt == MAX_HALVINGS:
            node = int(interior[pending[0]])
            raise MonotonicityError(
                f"stencil endpoints of node {node} leave the grid box after {MAX_HALVINGS} halvings; "
                "refine the grid or enlarge the box", node=node)
        step[pending] *= 0.5

    if rows_all:
        r = np.concatenate(rows_all)
        c = np.concatenate(cols_all)
        v = np.concatenate(vals_all)
    else:
        r = c = np.zeros(0, dtype=np.int64)
        v = np.zeros(0)
    mat = sp.coo_matrix((v, (r, c)), shape=(N, N)).tocsr()
    mat.sum_duplicates()
    # self-weights from interpolation belong to the diagonal
    self_w = mat.diagonal()
    diag = diag + self_w
    mat.setdiag(0.0)
    mat.eliminate_zeros()
    mat.sort_indices()
    op = StencilOperator(grid, mat, diag, interior, step, t)
    op.check_monotone()
    return op
