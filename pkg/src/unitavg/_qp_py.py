"""Pure-numpy kernel for the simplex-constrained QP solver.

This module mirrors the compiled kernel in ``_qp_kernel.pyx``; the two
implement the same algorithm (projected gradient with Armijo
backtracking and an exact sort-based simplex projection) and must be
kept in sync.  Results agree to solver tolerance, not bit-for-bit.
"""

from __future__ import annotations

import numpy as np

ARMIJO_C1 = 1e-4
MAX_HALVINGS = 64


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of ``v`` onto the unit simplex."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    idx = np.arange(1, len(v) + 1)
    rho = np.nonzero(u + (1.0 - css) / idx > 0.0)[0][-1]
    tau = (1.0 - css[rho]) / (rho + 1.0)
    return np.maximum(v + tau, 0.0)


def pgd(Q: np.ndarray, x0: np.ndarray, rtol: float, max_iter: int):
    """Projected-gradient descent for min x'Qx over the unit simplex.

    Returns ``(x, iterations_used, converged)``.  Convergence is the
    unit-step projected-gradient residual ||P(x - 2Qx) - x||_2 <= rtol.
    """
    Q = np.asarray(Q, dtype=float)
    x = np.array(x0, dtype=float, copy=True)
    f = float(x @ Q @ x)
    row_norm = float(np.abs(Q).sum(axis=1).max())
    step = 1.0 / max(2.0 * row_norm, 1e-300)
    used = 0
    for it in range(max_iter):
        used = it + 1
        g = 2.0 * (Q @ x)
        r = project_simplex(x - g) - x
        if float(np.sqrt(r @ r)) <= rtol:
            return x, used, True
        step *= 2.0
        accepted = False
        for _ in range(MAX_HALVINGS):
            y = project_simplex(x - step * g)
            d = y - x
            fy = float(y @ Q @ y)
            if fy <= f + ARMIJO_C1 * float(g @ d):
                accepted = True
                break
            step *= 0.5
        if not accepted or not np.any(d):
            return x, used, False
        x, f = y, fy
    return x, used, False
