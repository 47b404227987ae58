"""Panel container and per-unit least-squares estimation.

The per-unit model is a linear (optionally first-order dynamic)
regression

    y_t = intercept + x_t' beta + lam * y_{t-1} + e_t,

with the intercept and the lag term switched on or off by the model
spec.  Each unit is fit separately by least squares on the rows left
after lag trimming (the first ``lag_order`` observations of a unit are
dropped, no presample backcasting).  The coefficient layout is

    (intercept | x coefficients | lag coefficient),

with absent pieces skipped, and is identical across units.

Robust variance estimation uses the sandwich form H^-1 S H^-1 where
H = X'X / T_eff and S is the HC0 outer product of scores, optionally
Bartlett-weighted over ``L`` lags (Newey-West).  Both H and the final
sandwich carry a ridge floor so downstream Cholesky factorizations never
see a singular matrix: whenever the minimum eigenvalue falls below
1e-10 * (trace/p), 1e-8 * (trace/p) * I is added (with trace/p replaced
by 1.0 if the matrix is identically zero) and the fit is flagged.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, DimensionError, EstimationError, PanelFormatError

RIDGE_DETECT = 1e-10
RIDGE_BUMP = 1e-8


@dataclass(frozen=True)
class ModelSpec:
    """Per-unit estimation settings.

    ``vcov`` is ``"hc0"`` or ``"nw:<L>"`` for a Newey-West sandwich with
    Bartlett kernel and lag window ``L >= 0`` (``"nw:0"`` coincides with
    HC0).
    """

    include_intercept: bool = True
    lag_order: int = 0
    vcov: str = "hc0"

    def __post_init__(self):
        if self.lag_order not in (0, 1):
            raise ConfigError(f"lag_order must be 0 or 1, got {self.lag_order!r}")
        self.nw_lags  # validate vcov eagerly

    @property
    def nw_lags(self) -> int:
        """Newey-West lag window; 0 means plain HC0."""
        if self.vcov == "hc0":
            return 0
        if self.vcov.startswith("nw:"):
            try:
                lags = int(self.vcov[3:])
            except ValueError:
                lags = -1
            if lags >= 0:
                return lags
        raise ConfigError(f"vcov must be 'hc0' or 'nw:<L>' with L >= 0, got {self.vcov!r}")

    def n_params(self, d: int) -> int:
        return d + self.lag_order + int(self.include_intercept)


@dataclass
class PanelData:
    """Rectangular panel of outcomes and covariates indexed by (unit, time).

    Per-unit arrays are stored sorted by time; time indices are strictly
    increasing within each unit and every unit shares the covariate
    dimension ``d``.  ``balanced`` is True when all units share the same
    time index.
    """

    unit_ids: list
    times: dict = field(repr=False)  # unit -> int array, strictly increasing
    y: dict = field(repr=False)  # unit -> float array
    x: dict = field(repr=False)  # unit -> (T_u, d) float array
    d: int = 0
    balanced: bool = True

    def __post_init__(self):
        if not self.unit_ids:
            raise DimensionError("panel has no units")
        ref_times = self.times[self.unit_ids[0]]
        balanced = True
        for u in self.unit_ids:
            if u not in self.times or u not in self.y or u not in self.x:
                raise DimensionError(f"unit {u!r} missing from panel storage")
            t = np.asarray(self.times[u])
            if t.ndim != 1 or len(t) == 0:
                raise DimensionError(f"unit {u!r} has an empty time index")
            if np.any(np.diff(t) <= 0):
                raise DimensionError(f"unit {u!r} has non-increasing time indices")
            if len(self.y[u]) != len(t):
                raise DimensionError(f"unit {u!r}: y length does not match time index")
            xu = np.asarray(self.x[u])
            if xu.shape != (len(t), self.d):
                raise DimensionError(
                    f"unit {u!r}: covariate block has shape {xu.shape}, "
                    f"expected {(len(t), self.d)}"
                )
            if len(t) != len(ref_times) or np.any(t != ref_times):
                balanced = False
        self.balanced = balanced

    @property
    def n_units(self) -> int:
        return len(self.unit_ids)

    def n_periods(self, unit) -> int:
        return len(self.times[unit])


@dataclass
class UnitFit:
    """Least-squares fit of one unit.

    ``V_hat`` estimates the asymptotic variance of sqrt(T_eff) times the
    coefficient vector; it is symmetric with a strictly positive minimum
    eigenvalue (ridge floor).  ``ridged`` flags fits where the floor had
    to intervene in either H or the sandwich.
    """

    unit_id: object
    theta_hat: np.ndarray
    V_hat: np.ndarray
    T_eff: int
    ssr: float
    sigma2_hat: float
    ridged: bool = False

    @property
    def n_params(self) -> int:
        return len(self.theta_hat)


def _floor_spd(M: np.ndarray) -> tuple[np.ndarray, bool]:
    """Apply the ridge floor to a symmetric matrix; return (matrix, flagged)."""
    M = (M + M.T) / 2.0
    p = M.shape[0]
    scale = float(np.trace(M)) / p
    if not np.isfinite(scale):
        raise EstimationError("non-finite values in moment matrix")
    if scale <= 0.0:
        scale = 1.0
    min_eig = float(np.linalg.eigvalsh(M)[0])
    if min_eig < RIDGE_DETECT * scale:
        return M + RIDGE_BUMP * scale * np.eye(p), True
    return M, False


def _unit_design(panel: PanelData, unit, spec: ModelSpec) -> tuple[np.ndarray, np.ndarray]:
    """Return (y, X) for one unit after lag trimming."""
    if unit not in panel.y:
        raise EstimationError(f"unit {unit!r} not present in panel")
    yv = np.asarray(panel.y[unit], dtype=float)
    xv = np.asarray(panel.x[unit], dtype=float)
    lo = spec.lag_order
    cols = []
    if spec.include_intercept:
        cols.append(np.ones(len(yv) - lo))
    cols.append(xv[lo:])
    if spec.lag_order == 1:
        cols.append(yv[:-1, None])
    X = np.column_stack(cols) if cols else np.empty((len(yv) - lo, 0))
    return yv[lo:], X


def fit_unit(panel: PanelData, unit, spec: ModelSpec) -> UnitFit:
    """Fit the per-unit regression and its robust variance.

    Raises EstimationError when the trimmed series is shorter than
    p + 1 observations or the design is unusable (all-zero or
    non-finite).
    """
    y, X = _unit_design(panel, unit, spec)
    T_eff, p = X.shape
    if p == 0:
        raise EstimationError(f"unit {unit!r}: model has no regressors")
    if T_eff < p + 1:
        raise EstimationError(
            f"unit {unit!r}: {T_eff} usable observations after lag trimming, "
            f"need at least {p + 1}"
        )
    H = X.T @ X / T_eff
    if float(np.trace(H)) <= 0.0 or not np.all(np.isfinite(H)):
        raise EstimationError(f"unit {unit!r}: singular design (zero or non-finite)")
    H, ridged = _floor_spd(H)
    theta = np.linalg.solve(H, X.T @ y / T_eff)
    resid = y - X @ theta
    ssr = float(resid @ resid)
    V, v_ridged = _estimate_variance_from(X, resid, spec, H=H)
    return UnitFit(
        unit_id=unit,
        theta_hat=theta,
        V_hat=V,
        T_eff=T_eff,
        ssr=ssr,
        sigma2_hat=ssr / T_eff,
        ridged=ridged or v_ridged,
    )


def _estimate_variance_from(
    X: np.ndarray, residuals: np.ndarray, spec: ModelSpec, H: np.ndarray | None = None
) -> tuple[np.ndarray, bool]:
    T_eff, p = X.shape
    if H is None:
        H, _ = _floor_spd(X.T @ X / T_eff)
    scores = X * residuals[:, None]
    S = scores.T @ scores / T_eff
    L = min(spec.nw_lags, T_eff - 1)
    for lag in range(1, L + 1):
        G = scores[lag:].T @ scores[:-lag] / T_eff
        S += (1.0 - lag / (L + 1.0)) * (G + G.T)
    Hinv = np.linalg.inv(H)
    V = Hinv @ S @ Hinv
    return _floor_spd(V)


def estimate_variance(X: np.ndarray, residuals: np.ndarray, spec: ModelSpec) -> np.ndarray:
    """Sandwich variance H^-1 S H^-1 from a design and its residuals.

    S is the HC0 score outer product, Bartlett-weighted over ``L`` lags
    for ``vcov="nw:L"``.  The result is symmetric with minimum
    eigenvalue bounded away from zero by the ridge floor.
    """
    X = np.asarray(X, dtype=float)
    residuals = np.asarray(residuals, dtype=float)
    if X.ndim != 2 or len(residuals) != X.shape[0]:
        raise DimensionError("design and residuals do not align")
    V, _ = _estimate_variance_from(X, residuals, spec)
    return V


def fit_all(panel: PanelData, spec: ModelSpec) -> list[UnitFit]:
    """Fit every unit; output order matches ``panel.unit_ids``.

    Per-unit failures are aggregated into one EstimationError that names
    each offending unit.
    """
    fits, failures = [], []
    for u in panel.unit_ids:
        try:
            fits.append(fit_unit(panel, u, spec))
        except EstimationError as exc:
            failures.append(str(exc))
    if failures:
        raise EstimationError("; ".join(failures))
    return fits


def loglik_on_unit(panel: PanelData, unit, theta: np.ndarray, sigma2: float, spec: ModelSpec) -> float:
    """Gaussian log-likelihood of one unit's trimmed sample at (theta, sigma2)."""
    if sigma2 <= 0.0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    y, X = _unit_design(panel, unit, spec)
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (X.shape[1],):
        raise DimensionError(
            f"theta has shape {theta.shape}, design expects ({X.shape[1]},)"
        )
    resid = y - X @ theta
    T_eff = len(y)
    return float(-0.5 * T_eff * np.log(2.0 * np.pi * sigma2) - (resid @ resid) / (2.0 * sigma2))


def load_panel(source) -> PanelData:
    """Read a panel from CSV (header ``unit,time,y,x1,...,xd``).

    ``source`` is a path or an open text stream.  Rows may arrive in any
    order; they are sorted by (unit, time) internally.  Unit labels that
    all parse as integers are stored as integers, otherwise as strings.
    Malformed rows, duplicate (unit, time) keys and inconsistent
    covariate counts raise PanelFormatError with the offending line
    number.
    """
    if hasattr(source, "read"):
        return _parse_panel(source)
    with open(source, "r", encoding="utf-8", newline="") as fh:
        return _parse_panel(fh)


def _parse_panel(stream: io.TextIOBase) -> PanelData:
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise PanelFormatError("empty input, expected a header row") from None
    header = [h.strip() for h in header]
    if header[:3] != ["unit", "time", "y"]:
        raise PanelFormatError(
            f"header must start with unit,time,y, got {','.join(header[:3])}", line=1
        )
    d = len(header) - 3
    expected_x = [f"x{k}" for k in range(1, d + 1)]
    if header[3:] != expected_x:
        raise PanelFormatError(
            f"covariate columns must be named {','.join(expected_x) or '(none)'}, "
            f"got {','.join(header[3:])}",
            line=1,
        )

    rows: dict[str, dict[int, tuple[float, np.ndarray]]] = {}
    all_int = True
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 3 + d:
            raise PanelFormatError(
                f"expected {3 + d} fields, got {len(row)}", line=lineno
            )
        unit_raw = row[0].strip()
        if not unit_raw:
            raise PanelFormatError("empty unit label", line=lineno)
        try:
            int(unit_raw)
        except ValueError:
            all_int = False
        try:
            t = int(row[1])
        except ValueError:
            raise PanelFormatError(f"time {row[1]!r} is not an integer", line=lineno) from None
        try:
            yv = float(row[2])
            xv = np.array([float(c) for c in row[3:]], dtype=float)
        except ValueError as exc:
            raise PanelFormatError(f"non-numeric value ({exc})", line=lineno) from None
        unit_rows = rows.setdefault(unit_raw, {})
        if t in unit_rows:
            raise PanelFormatError(
                f"duplicate observation for (unit={unit_raw}, time={t})", line=lineno
            )
        unit_rows[t] = (yv, xv)

    if not rows:
        raise PanelFormatError("no data rows")

    def conv(u: str):
        return int(u) if all_int else u

    unit_ids = sorted(conv(u) for u in rows)
    times, ys, xs = {}, {}, {}
    for u_raw, unit_rows in rows.items():
        u = conv(u_raw)
        ts = sorted(unit_rows)
        times[u] = np.array(ts, dtype=int)
        ys[u] = np.array([unit_rows[t][0] for t in ts], dtype=float)
        xs[u] = (
            np.vstack([unit_rows[t][1] for t in ts])
            if d > 0
            else np.empty((len(ts), 0))
        )
    return PanelData(unit_ids=unit_ids, times=times, y=ys, x=xs, d=d)
