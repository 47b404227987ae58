# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel for the simplex-constrained QP solver.

Mirrors ``_qp_py`` (the pure-numpy fallback); the two implement the same
algorithm and must be kept in sync.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, sqrt

cnp.import_array()

DEF ARMIJO_C1 = 1e-4
DEF MAX_HALVINGS = 64


cdef void _insertion_sort_desc(double* a, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double key
    for i in range(1, n):
        key = a[i]
        j = i - 1
        while j >= 0 and a[j] < key:
            a[j + 1] = a[j]
            j -= 1
        a[j + 1] = key


cdef void _project_simplex(const double* v, double* out, double* work, Py_ssize_t m) noexcept nogil:
    """out = Euclidean projection of v onto the unit simplex (work: m doubles)."""
    cdef Py_ssize_t i, rho = 0
    cdef double css = 0.0, tau = 0.0, css_rho = 0.0
    for i in range(m):
        work[i] = v[i]
    _insertion_sort_desc(work, m)
    for i in range(m):
        css += work[i]
        if work[i] + (1.0 - css) / (i + 1.0) > 0.0:
            rho = i
            css_rho = css
    tau = (1.0 - css_rho) / (rho + 1.0)
    for i in range(m):
        out[i] = v[i] + tau
        if out[i] < 0.0:
            out[i] = 0.0


cdef void _grad(const double* Q, const double* x, double* g, Py_ssize_t m) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double acc
    for i in range(m):
        acc = 0.0
        for j in range(m):
            acc += Q[i * m + j] * x[j]
        g[i] = 2.0 * acc
    # quadratic form is recovered as 0.5 * g'x by callers


cdef double _quad(const double* Q, const double* x, Py_ssize_t m) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double acc = 0.0, row
    for i in range(m):
        row = 0.0
        for j in range(m):
            row += Q[i * m + j] * x[j]
        acc += x[i] * row
    return acc


def project_simplex(v):
    """Euclidean projection of ``v`` onto the unit simplex."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] vv = np.ascontiguousarray(v, dtype=np.float64)
    cdef Py_ssize_t m = vv.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(m, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] work = np.empty(m, dtype=np.float64)
    _project_simplex(&vv[0], &out[0], &work[0], m)
    return out


def pgd(Q, x0, double rtol, long max_iter):
    """Projected-gradient descent for min x'Qx over the unit simplex.

    Returns ``(x, iterations_used, converged)``; see ``_qp_py.pgd``.
    """
    cdef cnp.ndarray[cnp.float64_t, ndim=2] Qa = np.ascontiguousarray(Q, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] x = np.array(x0, dtype=np.float64, copy=True)
    cdef Py_ssize_t m = Qa.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] g = np.empty(m, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] y = np.empty(m, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] tmp = np.empty(m, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] work = np.empty(m, dtype=np.float64)
    cdef double* q = &Qa[0, 0]
    cdef double* xp = &x[0]
    cdef double* gp = &g[0]
    cdef double* yp = &y[0]
    cdef double* tp = &tmp[0]
    cdef double* wp = &work[0]
    cdef double f, fy, step, row_norm, r2, gd, moved
    cdef Py_ssize_t i, j
    cdef long it, used = 0
    cdef int accepted, halvings
    cdef bint converged = False

    f = _quad(q, xp, m)
    row_norm = 0.0
    with nogil:
        for i in range(m):
            gd = 0.0
            for j in range(m):
                gd += fabs(q[i * m + j])
            if gd > row_norm:
                row_norm = gd
    step = 1.0 / max(2.0 * row_norm, 1e-300)

    with nogil:
        for it in range(max_iter):
            used = it + 1
            _grad(q, xp, gp, m)
            for i in range(m):
                tp[i] = xp[i] - gp[i]
            _project_simplex(tp, yp, wp, m)
            r2 = 0.0
            for i in range(m):
                r2 += (yp[i] - xp[i]) * (yp[i] - xp[i])
            if sqrt(r2) <= rtol:
                converged = True
                break
            step *= 2.0
            accepted = 0
            for halvings in range(MAX_HALVINGS):
                for i in range(m):
                    tp[i] = xp[i] - step * gp[i]
                _project_simplex(tp, yp, wp, m)
                fy = _quad(q, yp, m)
                gd = 0.0
                for i in range(m):
                    gd += gp[i] * (yp[i] - xp[i])
                if fy <= f + ARMIJO_C1 * gd:
                    accepted = 1
                    break
                step *= 0.5
            moved = 0.0
            for i in range(m):
                moved += fabs(yp[i] - xp[i])
            if accepted == 0 or moved == 0.0:
                break
            for i in range(m):
                xp[i] = yp[i]
            f = fy

    return x, used, bool(converged)
