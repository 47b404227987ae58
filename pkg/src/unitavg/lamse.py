"""Quadratic local-asymptotic MSE criteria for unit averaging.

Given per-unit fits and a focus, three objects can be built around the
target (first) unit:

* ``LamseFixedN`` -- the positive-definite criterion matrix ``psi`` with
  entries  b_i b_j + 1{i=j} v_i,  where  b_i = d1' sqrt(T) (theta_i -
  theta_1)  estimates the bias of unit i relative to the target and
  v_i = d1' V_i d1  its variance contribution, with d1 the focus
  gradient at the target's estimate.  The structural identity
  psi = b b' + diag(v) guarantees positive definiteness whenever every
  V_i is positive definite.
* ``LamseUnbiased`` -- the bias-corrected variant ``psi_tilde`` whose
  diagonal subtracts d1'(V_i + V_1)d1 and off-diagonal subtracts
  d1'V_1 d1.  It can be indefinite and is for diagnostics only; it is
  never fed to the weight solver.
* ``LamseLargeN`` -- the (nbar+1) x (nbar+1) matrix ``q`` whose
  quadratic form over x = (w, 1 - sum(w)) reproduces the large-panel
  criterion: the top-left block is the fixed-N ``psi`` of the nbar
  unrestricted units, the border is -b_i * tail_bias and the corner is
  tail_bias**2, with tail_bias = sqrt(T) d1'(theta_1 - mean over all N
  units).  The restricted tail adds bias but no variance.

The edge case nbar = 0 is supported: ``q`` degenerates to the 1x1
matrix [tail_bias**2] and the weight problem trivially sends all mass
to the tail (equal weights over every unit).
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .exceptions import (
    ConfigError,
    DimensionError,
    FocusSingularityError,
    InfeasibleWeightsError,
)
from .focus import FocusSpec, focus_gradient
from .panel import UnitFit

FEAS_TOL = 1e-10


def _gradient_at_target(focus: FocusSpec, target: UnitFit) -> np.ndarray:
    try:
        return focus_gradient(focus, target.theta_hat)
    except FocusSingularityError as exc:
        raise FocusSingularityError(f"unit {target.unit_id!r}: {exc}") from None


@dataclass
class LamseFixedN:
    """Fixed-N criterion: value at weights w is w' psi w."""

    psi: np.ndarray
    bias_vec: np.ndarray
    var_vec: np.ndarray
    d1: np.ndarray
    t_scale: float

    @property
    def nbar(self) -> int:
        return len(self.bias_vec)


@dataclass
class LamseUnbiased:
    """Bias-corrected criterion matrix; may be indefinite (diagnostic only)."""

    psi_tilde: np.ndarray


@dataclass
class LamseLargeN:
    """Large-N criterion: value at x = (w, tail mass) is x' q x."""

    q: np.ndarray
    tail_bias: float
    n_total: int
    nbar: int
    ordering: np.ndarray

    @property
    def psi_block(self) -> np.ndarray:
        return self.q[: self.nbar, : self.nbar]


def _stack_thetas(fits: list[UnitFit]) -> np.ndarray:
    if not fits:
        raise DimensionError("need at least one unit fit")
    p = fits[0].n_params
    for f in fits:
        if f.n_params != p:
            raise DimensionError(
                f"unit {f.unit_id!r} has {f.n_params} coefficients, expected {p}"
            )
    return np.vstack([f.theta_hat for f in fits])


def _bias_var(fits: list[UnitFit], focus: FocusSpec, t_scale: float):
    thetas = _stack_thetas(fits)
    d1 = _gradient_at_target(focus, fits[0])
    b = np.sqrt(t_scale) * ((thetas - thetas[0]) @ d1)
    v = np.array([float(d1 @ f.V_hat @ d1) for f in fits])
    if np.any(v <= 0.0):
        bad = fits[int(np.argmin(v))].unit_id
        raise ConfigError(
            f"unit {bad!r} has non-positive focus variance; V_hat must be positive definite"
        )
    return b, v, d1


def build_psi_hat(fits: list[UnitFit], focus: FocusSpec, T: float) -> LamseFixedN:
    """Build the fixed-N criterion for ``fits`` (target unit first)."""
    if T < 1:
        raise ConfigError(f"T must be >= 1, got {T}")
    b, v, d1 = _bias_var(fits, focus, T)
    psi = np.outer(b, b) + np.diag(v)
    return LamseFixedN(psi=psi, bias_vec=b, var_vec=v, d1=d1, t_scale=float(T))


def build_psi_tilde(fits: list[UnitFit], focus: FocusSpec, T: float) -> LamseUnbiased:
    """Build the bias-corrected criterion matrix (diagnostics only)."""
    if T < 1:
        raise ConfigError(f"T must be >= 1, got {T}")
    b, v, _ = _bias_var(fits, focus, T)
    n = len(b)
    psi_tilde = np.outer(b, b) - v[0] * np.ones((n, n)) - np.diag(v)
    return LamseUnbiased(psi_tilde=psi_tilde)


def build_largeN_objective(
    fits: list[UnitFit],
    focus: FocusSpec,
    T: float,
    nbar: int,
    ordering=None,
) -> LamseLargeN:
    """Build the large-N criterion over ``nbar`` unrestricted units.

    ``fits`` holds all N units, target first.  ``ordering`` is a
    permutation of 0..N-1 placing the unrestricted units in the first
    nbar slots; it defaults to input order and must keep the target
    (index 0) among the first nbar positions whenever nbar >= 1.
    """
    if T < 1:
        raise ConfigError(f"T must be >= 1, got {T}")
    n = len(fits)
    if not 0 <= nbar < n:
        raise ConfigError(
            f"nbar must satisfy 0 <= nbar < N={n} (got {nbar}); "
            "for nbar >= N use the fixed-N regime instead"
        )
    if ordering is None:
        ordering = np.arange(n)
    ordering = np.asarray(ordering, dtype=int)
    if sorted(ordering.tolist()) != list(range(n)):
        raise ConfigError("ordering must be a permutation of 0..N-1")
    if nbar >= 1 and 0 not in ordering[:nbar]:
        raise ConfigError("ordering must keep the target unit among the first nbar positions")

    thetas = _stack_thetas(fits)
    d1 = _gradient_at_target(focus, fits[0])
    theta_mean = thetas.mean(axis=0)
    tail_bias = float(np.sqrt(T) * d1 @ (thetas[0] - theta_mean))

    ordered = [fits[i] for i in ordering[:nbar]]
    q = np.empty((nbar + 1, nbar + 1))
    if nbar >= 1:
        b = np.sqrt(T) * ((thetas[ordering[:nbar]] - thetas[0]) @ d1)
        v = np.array([float(d1 @ f.V_hat @ d1) for f in ordered])
        if np.any(v <= 0.0):
            raise ConfigError("all unrestricted units need positive-definite V_hat")
        q[:nbar, :nbar] = np.outer(b, b) + np.diag(v)
        q[:nbar, nbar] = -b * tail_bias
        q[nbar, :nbar] = -b * tail_bias
    q[nbar, nbar] = tail_bias**2
    return LamseLargeN(q=q, tail_bias=tail_bias, n_total=n, nbar=nbar, ordering=ordering)


def evaluate_lamse(obj: LamseFixedN | LamseLargeN, w) -> float:
    """Evaluate the criterion at weights ``w`` of the matching regime.

    Fixed-N: w on the unit simplex over nbar units.  Large-N: w with
    non-negative entries summing to at most one; the remaining mass is
    the tail.  Infeasibility beyond 1e-10 raises.
    """
    w = np.asarray(w, dtype=float)
    if isinstance(obj, LamseFixedN):
        if w.shape != (obj.nbar,):
            raise DimensionError(f"expected {obj.nbar} weights, got {w.shape}")
        if w.min(initial=0.0) < -FEAS_TOL or abs(w.sum() - 1.0) > FEAS_TOL:
            raise InfeasibleWeightsError(
                "fixed-N weights must be non-negative and sum to one"
            )
        return max(float(w @ obj.psi @ w), 0.0)
    if isinstance(obj, LamseLargeN):
        if w.shape != (obj.nbar,):
            raise DimensionError(f"expected {obj.nbar} weights, got {w.shape}")
        s = w.sum()
        if w.min(initial=0.0) < -FEAS_TOL or s > 1.0 + FEAS_TOL:
            raise InfeasibleWeightsError(
                "large-N weights must be non-negative with sum at most one"
            )
        x = np.append(w, max(1.0 - s, 0.0))
        return max(float(x @ obj.q @ x), 0.0)
    raise TypeError(f"unknown criterion {type(obj).__name__}")


def matrix_to_csv(M: np.ndarray, stream: io.TextIOBase) -> None:
    """Write a matrix as row-major CSV (full symmetric storage)."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    for row in M:
        stream.write(",".join(repr(float(v)) for v in row))
        stream.write("\n")
