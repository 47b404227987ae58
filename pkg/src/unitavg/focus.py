"""Scalar focus transformations of a coefficient vector, with exact gradients.

Three focus families are supported:

* ``Coordinate(k)`` picks out one coefficient.
* ``AffineConditionalMean(a, b)`` computes ``a'theta + b``; with
  ``a = (x_T, y_T)`` over coefficients ``(beta, lambda)`` this is the
  one-step-ahead conditional mean of a dynamic regression.
* ``LongRunEffect(i_beta, i_lambda)`` computes ``beta / (1 - lambda)``,
  the cumulated effect of a permanent unit change in the covariate.

Gradients are analytic everywhere; the long-run effect refuses to
evaluate within ``LONGRUN_EPS`` of the unit root, where neither the
value nor its gradient is usable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, DimensionError, FocusSingularityError

LONGRUN_EPS = 1e-6


@dataclass(frozen=True)
class Coordinate:
    index: int

    def __post_init__(self):
        if self.index < 0:
            raise ConfigError(f"coordinate index must be non-negative, got {self.index}")


@dataclass(frozen=True, eq=False)
class AffineConditionalMean:
    a: np.ndarray
    b: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "a", np.atleast_1d(np.asarray(self.a, dtype=float)))


@dataclass(frozen=True)
class LongRunEffect:
    beta_index: int
    lambda_index: int

    def __post_init__(self):
        if self.beta_index == self.lambda_index:
            raise ConfigError("beta and lambda indices must differ")
        if min(self.beta_index, self.lambda_index) < 0:
            raise ConfigError("focus indices must be non-negative")


FocusSpec = Coordinate | AffineConditionalMean | LongRunEffect


def _check_index(idx: int, theta: np.ndarray, what: str) -> None:
    if idx >= len(theta):
        raise DimensionError(f"{what} index {idx} out of range for p={len(theta)}")


def focus_value(spec: FocusSpec, theta: np.ndarray) -> float:
    """Evaluate the focus at ``theta``."""
    theta = np.asarray(theta, dtype=float)
    if isinstance(spec, Coordinate):
        _check_index(spec.index, theta, "coordinate")
        return float(theta[spec.index])
    if isinstance(spec, AffineConditionalMean):
        if spec.a.shape != theta.shape:
            raise DimensionError(
                f"affine weights have shape {spec.a.shape}, theta has {theta.shape}"
            )
        return float(spec.a @ theta + spec.b)
    if isinstance(spec, LongRunEffect):
        _check_index(max(spec.beta_index, spec.lambda_index), theta, "long-run")
        denom = 1.0 - theta[spec.lambda_index]
        if abs(denom) <= LONGRUN_EPS:
            raise FocusSingularityError(
                f"long-run effect undefined: |1 - lambda| = {abs(denom):.2e} <= {LONGRUN_EPS}"
            )
        return float(theta[spec.beta_index] / denom)
    raise TypeError(f"unknown focus spec {type(spec).__name__}")


def focus_gradient(spec: FocusSpec, theta: np.ndarray) -> np.ndarray:
    """Exact gradient of the focus at ``theta``."""
    theta = np.asarray(theta, dtype=float)
    if isinstance(spec, Coordinate):
        _check_index(spec.index, theta, "coordinate")
        g = np.zeros_like(theta)
        g[spec.index] = 1.0
        return g
    if isinstance(spec, AffineConditionalMean):
        if spec.a.shape != theta.shape:
            raise DimensionError(
                f"affine weights have shape {spec.a.shape}, theta has {theta.shape}"
            )
        return spec.a.copy()
    if isinstance(spec, LongRunEffect):
        _check_index(max(spec.beta_index, spec.lambda_index), theta, "long-run")
        denom = 1.0 - theta[spec.lambda_index]
        if abs(denom) <= LONGRUN_EPS:
            raise FocusSingularityError(
                f"long-run effect undefined: |1 - lambda| = {abs(denom):.2e} <= {LONGRUN_EPS}"
            )
        g = np.zeros_like(theta)
        g[spec.beta_index] = 1.0 / denom
        g[spec.lambda_index] = theta[spec.beta_index] / denom**2
        return g
    raise TypeError(f"unknown focus spec {type(spec).__name__}")


def parse_focus(text: str) -> FocusSpec:
    """Parse the CLI focus syntax.

    Accepted forms: ``coordinate:<k>``, ``condmean:<a1,...,ap>:<b>``,
    ``longrun:<i_beta>:<i_lambda>``.
    """
    parts = text.split(":")
    kind = parts[0]
    try:
        if kind == "coordinate" and len(parts) == 2:
            return Coordinate(int(parts[1]))
        if kind == "condmean" and len(parts) == 3:
            a = np.array([float(v) for v in parts[1].split(",")], dtype=float)
            return AffineConditionalMean(a, float(parts[2]))
        if kind == "longrun" and len(parts) == 3:
            return LongRunEffect(int(parts[1]), int(parts[2]))
    except ValueError as exc:
        raise ConfigError(f"cannot parse focus {text!r}: {exc}") from None
    raise ConfigError(
        f"unknown focus {text!r}; expected coordinate:<k>, "
        "condmean:<a1,...,ap>:<b>, or longrun:<i_beta>:<i_lambda>"
    )
