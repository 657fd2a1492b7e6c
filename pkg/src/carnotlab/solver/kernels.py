"""Compiled relaxation kernels on CSR arrays.

The per-level system is ``M u = rhs`` with ``M = diag(d) - offdiag``,
``d = 1/dt - diag(L_h) > 0`` and ``offdiag >= 0``.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def relax(indptr, indices, data, d, rhs, phi, u, order, omega, use_phi, tol, max_sweeps):
    """Projected SOR sweeps until the complementarity residual drops below ``tol``.

    Returns ``(sweeps, residual)``; ``sweeps == max_sweeps`` with a residual
    above ``tol`` means no convergence.
    """
    res = np.inf
    sweeps = 0
    while sweeps < max_sweeps:
        for k in range(order.size):
            p = order[k]
            s = rhs[p]
            for j in range(indptr[p], indptr[p + 1]):
                s += data[j] * u[indices[j]]
            new = u[p] + omega * (s / d[p] - u[p])
            if use_phi and new < phi[p]:
                new = phi[p]
            u[p] = new
        sweeps += 1
        res = residual(indptr, indices, data, d, rhs, phi, u, order, use_phi)
        if res < tol:
            break
    return sweeps, res


@njit(cache=True)
def residual(indptr, indices, data, d, rhs, phi, u, order, use_phi):
    """``max_p |max(rhs - M u, phi - u)|`` (``|rhs - M u|`` without an obstacle)."""
    worst = 0.0
    for k in range(order.size):
        p = order[k]
        s = rhs[p] - d[p] * u[p]
        for j in range(indptr[p], indptr[p + 1]):
            s += data[j] * u[indices[j]]
        if use_phi:
            gap = phi[p] - u[p]
            if gap > s:
                s = gap
        if abs(s) > worst:
            worst = abs(s)
    return worst
