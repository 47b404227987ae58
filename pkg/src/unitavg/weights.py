"""Weighting schemes and the simplex-constrained QP solver.

The minimum-MSE weights solve  min_w w'Qw  over the unit simplex, with
Q one of the criteria from :mod:`unitavg.lamse`.  The solver combines
three ingredients:

* exact KKT enumeration over the 2^m - 1 support sets (production path
  for m <= 3, where it is cheap and exact);
* projected-gradient descent with Armijo backtracking and an exact
  sort-based simplex projection (the iterative engine; compiled kernel
  with a pure-numpy fallback, see ``_qp_backend``);
* an exact reduced-KKT polish that solves the equality-constrained
  problem on the support identified by the iterations and verifies the
  dual conditions, so well-identified solutions are returned at machine
  precision rather than at the asymptotic rate of the iteration.

Ties are always broken in favor of the lowest unit index.

Benchmark weighting schemes (individual, mean group, Stein, smooth AIC,
Mallows-style selection) and the averaging estimator itself live here
as well.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _qp_backend
from .exceptions import (
    ConfigError,
    DimensionError,
    FocusSingularityError,
    InfeasibleWeightsError,
    SolverError,
)
from .focus import FocusSpec, focus_value
from .lamse import LamseFixedN, LamseLargeN
from .panel import ModelSpec, PanelData, UnitFit, loglik_on_unit, _unit_design

MAX_ITER = 100_000
CHUNK = 2_000
CLAMP = 1e-12
SUM_TOL = 1e-10

project_simplex = _qp_backend.pure.project_simplex


@dataclass
class WeightVector:
    """Unit weights with provenance.

    Entries are non-negative (inputs above -1e-12 are clamped to zero on
    construction) and sum to one within 1e-10.
    """

    w: np.ndarray
    scheme: str
    criterion_value: float | None = None
    nbar: int | None = None

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float).copy()
        if w.min(initial=0.0) < -CLAMP:
            raise InfeasibleWeightsError(
                f"negative weight {w.min():.3e} in scheme {self.scheme!r}"
            )
        w[w < 0.0] = 0.0
        if abs(w.sum() - 1.0) > SUM_TOL:
            raise InfeasibleWeightsError(
                f"weights sum to {w.sum()!r} in scheme {self.scheme!r}"
            )
        self.w = w

    def __len__(self) -> int:
        return len(self.w)

    def to_json_dict(self, unit_ids) -> dict:
        """JSON-ready payload: scheme, unit ids, weights, criterion value."""
        if len(unit_ids) != len(self.w):
            raise DimensionError("unit_ids length does not match weights")
        out = {
            "scheme": self.scheme,
            "unit_ids": list(unit_ids),
            "weights": [float(v) for v in self.w],
            "criterion_value": None
            if self.criterion_value is None
            else float(self.criterion_value),
        }
        if self.nbar is not None:
            out["nbar"] = int(self.nbar)
        return out


@dataclass
class QpProblem:
    """min x'Qx over the unit simplex; Q symmetric positive semidefinite."""

    Q: np.ndarray

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise DimensionError(f"Q must be square, got shape {Q.shape}")
        scale = max(1.0, float(np.abs(Q).max()))
        if float(np.abs(Q - Q.T).max()) > 1e-12 * scale:
            raise ConfigError("Q is not symmetric")
        self.Q = (Q + Q.T) / 2.0


def kkt_residual(Q: np.ndarray, x: np.ndarray) -> float:
    """Unit-step projected-gradient residual ||P(x - 2Qx) - x||_2."""
    r = project_simplex(x - 2.0 * (Q @ x)) - x
    return float(np.sqrt(r @ r))


def _reduced_kkt(Q: np.ndarray, support: np.ndarray):
    """Solve min x'Qx s.t. sum x = 1 on the support; returns (x_s, lam) or None."""
    k = len(support)
    A = np.zeros((k + 1, k + 1))
    A[:k, :k] = 2.0 * Q[np.ix_(support, support)]
    A[:k, k] = -1.0
    A[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    try:
        sol = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError:
        sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    if not np.all(np.isfinite(sol)):
        return None
    return sol[:k], sol[k]


def _solve_by_enumeration(Q: np.ndarray) -> np.ndarray | None:
    """Exact minimizer by enumerating support sets (use only for small m)."""
    m = Q.shape[0]
    best_x, best_f = None, np.inf
    for mask in range(1, 2**m):
        support = np.array([i for i in range(m) if mask >> i & 1])
        out = _reduced_kkt(Q, support)
        if out is None:
            continue
        xs, _ = out
        if xs.min() < -CLAMP:
            continue
        x = np.zeros(m)
        x[support] = np.maximum(xs, 0.0)
        x /= x.sum()
        f = float(x @ Q @ x)
        if f < best_f:
            best_x, best_f = x, f
    return best_x


def _polish(Q: np.ndarray, x: np.ndarray, scale: float) -> np.ndarray | None:
    """Primal active-set refinement from the support of ``x``.

    Returns an exact stationary point on a verified support, or None if
    the active set does not settle within the update cap (the caller
    then continues iterating).
    """
    m = len(x)
    support = x > 0.0
    if not support.any():
        support[0] = True
    for _ in range(2 * m + 6):
        idx = np.nonzero(support)[0]
        out = _reduced_kkt(Q, idx)
        if out is None:
            return None
        xs, lam = out
        if xs.min() < -CLAMP:
            if len(idx) == 1:
                return None
            support[idx[int(np.argmin(xs))]] = False
            continue
        x_full = np.zeros(m)
        x_full[idx] = np.maximum(xs, 0.0)
        x_full /= x_full.sum()
        g = 2.0 * (Q @ x_full)
        off = np.nonzero(~support)[0]
        if len(off):
            viol = lam - g[off]
            worst = int(np.argmax(viol))
            if viol[worst] > 1e-9 * scale:
                support[off[worst]] = True
                continue
        return x_full
    return None


def solve_simplex_qp(prob: QpProblem, tol: float = 1e-10, backend: str | None = None) -> np.ndarray:
    """Minimize x'Qx over the unit simplex to KKT residual ``tol``.

    The convergence test is scale-relative (tol * max(1, |Q|_max)) so
    rescaling Q does not change the returned weights.  Raises
    SolverError carrying the best iterate if the iteration cap is hit.
    """
    if tol <= 0.0:
        raise ConfigError(f"tol must be positive, got {tol}")
    Q = prob.Q
    m = Q.shape[0]
    if m == 1:
        return np.ones(1)
    scale = max(1.0, float(np.abs(Q).max()))
    rtol = tol * scale
    kernel = _qp_backend.get_kernel(backend)

    if m <= 3:
        x = _solve_by_enumeration(Q)
        if x is not None and kkt_residual(Q, x) <= rtol:
            return x
        # fall through to the iterative path

    x = np.full(m, 1.0 / m)
    best_x, best_r = x, kkt_residual(Q, x)
    budget = MAX_ITER
    while True:
        polished = _polish(Q, x, scale)
        if polished is not None:
            r = kkt_residual(Q, polished)
            if r <= rtol and float(polished @ Q @ polished) <= float(x @ Q @ x) + rtol:
                return polished
            if r < best_r:
                best_x, best_r = polished, r
        if budget <= 0:
            break
        x, used, converged = kernel.pgd(Q, x, rtol, min(CHUNK, budget))
        budget -= used
        r = kkt_residual(Q, x)
        if r < best_r:
            best_x, best_r = x, r
        if converged:
            return x
    raise SolverError(
        f"no convergence within {MAX_ITER} iterations (best residual {best_r:.3e})",
        best_x=best_x,
        residual=best_r,
    )


def min_mse_fixed(psi: LamseFixedN, tol: float = 1e-10) -> WeightVector:
    """Minimum-MSE weights for the fixed-N criterion."""
    x = solve_simplex_qp(QpProblem(psi.psi), tol=tol)
    return WeightVector(
        w=x, scheme="minmse-fixed", criterion_value=float(x @ psi.psi @ x)
    )


def min_mse_large(q: LamseLargeN, tol: float = 1e-10) -> WeightVector:
    """Minimum-MSE weights for the large-N criterion.

    Solves the (nbar+1)-dimensional simplex QP over (w, tail mass) and
    returns a full N-vector in the original unit order: the unrestricted
    units carry their solved weights and the tail mass is spread equally
    over the N - nbar restricted units.
    """
    x = solve_simplex_qp(QpProblem(q.q), tol=tol)
    w_unres, s = x[: q.nbar], x[q.nbar]
    ordered_full = np.empty(q.n_total)
    ordered_full[: q.nbar] = w_unres
    ordered_full[q.nbar :] = s / (q.n_total - q.nbar)
    full = np.empty(q.n_total)
    full[q.ordering] = ordered_full
    return WeightVector(
        w=full,
        scheme=f"minmse-large:{q.nbar}",
        criterion_value=float(x @ q.q @ x),
        nbar=q.nbar,
    )


def mean_group_weights(n: int) -> WeightVector:
    """Equal weights over all units."""
    if n < 1:
        raise ConfigError(f"need n >= 1, got {n}")
    return WeightVector(w=np.full(n, 1.0 / n), scheme="mean-group")


def individual_weights(n: int) -> WeightVector:
    """All weight on the target (first) unit."""
    if n < 1:
        raise ConfigError(f"need n >= 1, got {n}")
    w = np.zeros(n)
    w[0] = 1.0
    return WeightVector(w=w, scheme="individual")


def stein_weights(n: int, lam: float) -> WeightVector:
    """Convex combination of the individual and mean-group weights."""
    if n < 1:
        raise ConfigError(f"need n >= 1, got {n}")
    if not 0.0 <= lam <= 1.0:
        raise ConfigError(f"stein lambda must lie in [0, 1], got {lam}")
    w = np.full(n, (1.0 - lam) / n)
    w[0] += lam
    return WeightVector(w=w, scheme=f"stein:{lam:g}")


def aic_weights(
    fits: list[UnitFit], panel: PanelData, target_unit, spec: ModelSpec
) -> WeightVector:
    """Smooth AIC weights over donor coefficient vectors.

    Each donor j is scored on the *target* unit's sample at the donor's
    coefficients with the donor's error variance plugged in:
    AIC_j = -2 loglik(target sample; theta_j, sigma2_j) + 2p.  Weights
    are proportional to exp(-(AIC_j - min AIC)/2) (min-shifted for
    overflow safety).
    """
    p = fits[0].n_params
    aic = np.array(
        [
            -2.0 * loglik_on_unit(panel, target_unit, f.theta_hat, f.sigma2_hat, spec)
            + 2.0 * p
            for f in fits
        ]
    )
    w = np.exp(-(aic - aic.min()) / 2.0)
    w /= w.sum()
    return WeightVector(w=w, scheme="aic")


def mma_select(
    fits: list[UnitFit], panel: PanelData, target_unit, spec: ModelSpec
) -> WeightVector:
    """Mallows-style selection: all weight on the best-scoring donor.

    Donor j is scored by the target sample's SSR at theta_j plus the
    penalty 2 * sigma2_target * p; with p equal across donors this picks
    the SSR-minimal donor.  Ties go to the lowest index.
    """
    target_fit = next((f for f in fits if f.unit_id == target_unit), None)
    if target_fit is None:
        raise ConfigError(f"target unit {target_unit!r} not among the fits")
    y, X = _unit_design(panel, target_unit, spec)
    p = fits[0].n_params
    crit = np.empty(len(fits))
    for j, f in enumerate(fits):
        resid = y - X @ f.theta_hat
        crit[j] = float(resid @ resid) + 2.0 * target_fit.sigma2_hat * p
    j_star = int(np.argmin(crit))  # argmin returns the first (lowest-index) minimum
    w = np.zeros(len(fits))
    w[j_star] = 1.0
    return WeightVector(w=w, scheme="mma", criterion_value=float(crit[j_star]))


def unit_average(fits: list[UnitFit], focus: FocusSpec, wv: WeightVector) -> float:
    """The averaging estimate: sum of w_i * focus(theta_i).

    Units with exactly zero weight are skipped, so a focus singularity
    there does not block the estimate; a singularity at a positively
    weighted unit raises, naming the unit.
    """
    if len(wv) != len(fits):
        raise DimensionError(f"{len(wv)} weights for {len(fits)} fits")
    total = 0.0
    for f, w in zip(fits, wv.w):
        if w == 0.0:
            continue
        try:
            total += w * focus_value(focus, f.theta_hat)
        except FocusSingularityError as exc:
            raise FocusSingularityError(f"unit {f.unit_id!r}: {exc}") from None
    return total
