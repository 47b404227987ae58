"""Limit-experiment oracle for validating the averaging procedure.

Everything here works directly with limit objects -- drift vectors
``eta_i`` (target unit first), asymptotic variances ``V_i`` and the
focus gradient ``d0`` at the common parameter -- never re-estimating
anything, so theory checks are isolated from estimation noise.

* ``population_lamse_fixed`` / ``population_lamse_large`` evaluate the
  population criteria (squared bias plus variance) at given weights.
* ``draw_limit`` samples the joint Gaussian limits
  Z_i ~ N(eta_i - eta_1, V_i), independent across units,
  and their focus projections Lambda_i = d0'Z_i.
* ``build_psi_bar`` forms the random criterion matrix of a draw, with
  entries d0'((Z_i - Z_1)(Z_j - Z_1)' + 1{i=j} V_i)d0; it shares the
  b b' + diag(v) structure of the estimated criterion and is therefore
  positive definite.
* ``simulate_limit_weights`` / ``simulate_limit_estimator`` sample the
  limiting minimum-MSE weights and the limiting distribution of the
  averaging estimator, solving one simplex QP per draw.

Draw k always uses the substream (seed, k), so samples are a
deterministic function of (spec, seed, reps) regardless of evaluation
order or worker count.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, DimensionError, InfeasibleWeightsError, SolverError
from .streams import substream
from .weights import QpProblem, solve_simplex_qp

FEAS_TOL = 1e-10


@dataclass
class LimitSpec:
    """A point in the limit experiment: drifts, variances, focus gradient.

    ``tail=True`` enables the large-N regime, whose restricted tail
    contributes the bias d0'eta_1 (plus its Z_1 noise) and no variance.
    """

    etas: np.ndarray  # (nbar, p), target unit first
    variances: np.ndarray  # (nbar, p, p), symmetric positive definite
    d0: np.ndarray  # (p,), non-zero
    tail: bool = True
    _chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.etas = np.atleast_2d(np.asarray(self.etas, dtype=float))
        self.variances = np.asarray(self.variances, dtype=float)
        if self.variances.ndim == 2:
            self.variances = self.variances[None, :, :]
        self.d0 = np.atleast_1d(np.asarray(self.d0, dtype=float))
        nbar, p = self.etas.shape
        if self.variances.shape != (nbar, p, p):
            raise DimensionError(
                f"variances have shape {self.variances.shape}, expected {(nbar, p, p)}"
            )
        if self.d0.shape != (p,):
            raise DimensionError(f"d0 has shape {self.d0.shape}, expected ({p},)")
        if not np.any(self.d0):
            raise ConfigError("d0 must be non-zero")
        chols = []
        for i, V in enumerate(self.variances):
            if np.abs(V - V.T).max() > 1e-12 * max(1.0, np.abs(V).max()):
                raise ConfigError(f"V_{i + 1} is not symmetric")
            try:
                chols.append(np.linalg.cholesky(V))
            except np.linalg.LinAlgError:
                raise ConfigError(f"V_{i + 1} is not positive definite") from None
        self._chol = np.stack(chols)

    @property
    def nbar(self) -> int:
        return self.etas.shape[0]

    @property
    def p(self) -> int:
        return self.etas.shape[1]


@dataclass
class LimitDraw:
    """One joint draw of the Gaussian limits."""

    Z: np.ndarray  # (nbar, p)
    lambdas: np.ndarray  # (nbar,) = Z @ d0


def load_limit_spec(source) -> LimitSpec:
    """Read a LimitSpec from a JSON file, stream, or dict.

    Keys: ``etas`` (list of vectors, target first), ``variances`` (list
    of matrices), ``d0`` (vector), optional ``tail`` (bool).
    """
    if isinstance(source, dict):
        doc = source
    elif hasattr(source, "read"):
        doc = json.load(source)
    else:
        with open(source, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    try:
        return LimitSpec(
            etas=np.asarray(doc["etas"], dtype=float),
            variances=np.asarray(doc["variances"], dtype=float),
            d0=np.asarray(doc["d0"], dtype=float),
            tail=bool(doc.get("tail", True)),
        )
    except KeyError as exc:
        raise ConfigError(f"limit spec is missing key {exc}") from None


def _population_bias_var(spec: LimitSpec):
    b = (spec.etas - spec.etas[0]) @ spec.d0
    v = np.einsum("i,nij,j->n", spec.d0, spec.variances, spec.d0)
    return b, v


def population_lamse_fixed(spec: LimitSpec, w) -> float:
    """Population criterion w' Psi w over the unit simplex."""
    w = np.asarray(w, dtype=float)
    if w.shape != (spec.nbar,):
        raise DimensionError(f"expected {spec.nbar} weights, got {w.shape}")
    if w.min(initial=0.0) < -FEAS_TOL or abs(w.sum() - 1.0) > FEAS_TOL:
        raise InfeasibleWeightsError("weights must be non-negative and sum to one")
    b, v = _population_bias_var(spec)
    psi = np.outer(b, b) + np.diag(v)
    return float(w @ psi @ w)


def population_lamse_large(spec: LimitSpec, w) -> float:
    """Population criterion in the large-N regime at sub-simplex weights."""
    w = np.asarray(w, dtype=float)
    if w.shape != (spec.nbar,):
        raise DimensionError(f"expected {spec.nbar} weights, got {w.shape}")
    s = float(w.sum())
    if w.min(initial=0.0) < -FEAS_TOL or s > 1.0 + FEAS_TOL:
        raise InfeasibleWeightsError(
            "weights must be non-negative with sum at most one"
        )
    b, v = _population_bias_var(spec)
    psi = np.outer(b, b) + np.diag(v)
    tail_bias = float(spec.d0 @ spec.etas[0])
    tail = 1.0 - s
    return float(w @ psi @ w + (tail * tail_bias - 2.0 * float(w @ b)) * tail * tail_bias)


def draw_limit(spec: LimitSpec, rng: np.random.Generator) -> LimitDraw:
    """One joint draw: Z_i = (eta_i - eta_1) + chol(V_i) g_i, g_i iid standard normal."""
    g = rng.standard_normal((spec.nbar, spec.p))
    Z = (spec.etas - spec.etas[0]) + np.einsum("nij,nj->ni", spec._chol, g)
    return LimitDraw(Z=Z, lambdas=Z @ spec.d0)


def build_psi_bar(draw: LimitDraw, spec: LimitSpec) -> np.ndarray:
    """Random criterion matrix of a draw; positive definite by structure."""
    if draw.Z.shape != (spec.nbar, spec.p):
        raise DimensionError("draw does not match spec dimensions")
    b = (draw.Z - draw.Z[0]) @ spec.d0
    _, v = _population_bias_var(spec)
    return np.outer(b, b) + np.diag(v)


def _build_qbar(draw: LimitDraw, spec: LimitSpec) -> np.ndarray:
    """Large-N random criterion over (w, tail mass) for one draw."""
    psi = build_psi_bar(draw, spec)
    b = (draw.Z - draw.Z[0]) @ spec.d0
    c = float(spec.d0 @ (spec.etas[0] + draw.Z[0]))
    n = spec.nbar
    q = np.empty((n + 1, n + 1))
    q[:n, :n] = psi
    q[:n, n] = -b * c
    q[n, :n] = -b * c
    q[n, n] = c * c
    return q


def _check_regime(spec: LimitSpec, regime: str) -> None:
    if regime not in ("fixed", "large"):
        raise ConfigError(f"regime must be 'fixed' or 'large', got {regime!r}")
    if regime == "large" and not spec.tail:
        raise ConfigError("this limit spec has no tail; large regime unavailable")


def simulate_limit_weights(
    spec: LimitSpec, regime: str, reps: int, seed: int
) -> np.ndarray:
    """Sample the limiting minimum-MSE weights, one simplex QP per draw.

    Returns a (reps, nbar) array.  In the large regime the rows live on
    the sub-simplex (sum at most one; the remainder is tail mass).
    """
    _check_regime(spec, regime)
    if reps < 1:
        raise ConfigError(f"need reps >= 1, got {reps}")
    out = np.empty((reps, spec.nbar))
    for k in range(reps):
        draw = draw_limit(spec, substream(seed, k))
        try:
            if regime == "fixed":
                out[k] = solve_simplex_qp(QpProblem(build_psi_bar(draw, spec)))
            else:
                x = solve_simplex_qp(QpProblem(_build_qbar(draw, spec)))
                out[k] = x[: spec.nbar]
        except SolverError as exc:
            raise SolverError(
                f"draw {k}: {exc}", best_x=exc.best_x, residual=exc.residual
            ) from None
    return out


def simulate_limit_estimator(
    spec: LimitSpec,
    regime: str,
    reps: int,
    seed: int,
    fixed_weights=None,
) -> np.ndarray:
    """Sample the limiting distribution of the scaled averaging error.

    Per joint draw the minimum-MSE weights are solved (or taken from
    ``fixed_weights``) and combined with the focus limits of the same
    draw: sum w_i Lambda_i in the fixed regime, minus the tail-bias term
    (1 - sum w) d0'eta_1 in the large regime.
    """
    _check_regime(spec, regime)
    if reps < 1:
        raise ConfigError(f"need reps >= 1, got {reps}")
    if fixed_weights is not None:
        fixed_weights = np.asarray(fixed_weights, dtype=float)
        if fixed_weights.shape != (spec.nbar,):
            raise DimensionError(
                f"fixed_weights must have shape ({spec.nbar},), got {fixed_weights.shape}"
            )
    tail_bias = float(spec.d0 @ spec.etas[0])
    out = np.empty(reps)
    for k in range(reps):
        draw = draw_limit(spec, substream(seed, k))
        try:
            if fixed_weights is not None:
                w = fixed_weights
            elif regime == "fixed":
                w = solve_simplex_qp(QpProblem(build_psi_bar(draw, spec)))
            else:
                w = solve_simplex_qp(QpProblem(_build_qbar(draw, spec)))[: spec.nbar]
        except SolverError as exc:
            raise SolverError(
                f"draw {k}: {exc}", best_x=exc.best_x, residual=exc.residual
            ) from None
        val = float(w @ draw.lambdas)
        if regime == "large":
            val -= (1.0 - float(w.sum())) * tail_bias
        out[k] = val
    return out


def samples_to_csv(samples: np.ndarray, stream, header: list[str] | None = None) -> None:
    """Write a sample array as CSV (one row per draw)."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    if header is not None:
        stream.write(",".join(header) + "\n")
    for row in samples:
        stream.write(",".join(repr(float(v)) for v in row) + "\n")
