"""Simulation study for the averaging schemes on a dynamic heterogeneous panel.

The data-generating process is, per unit i and period t = 1..T,

    y_it = beta_i x_it + lam_i y_i,t-1 + eps_it,   eps_it ~ N(0, sigma2_i),

with x_it standard normal, sigma2_i standard exponential across units,
and the presample value y_i0 drawn N(0, (1 + sigma2_i) / (1 - lam_i^2))
so each series is covariance stationary.  Heterogeneity is local in the
time dimension:

    beta_i = 1 + eta_beta_i / sqrt(T),   lam_i = eta_lam_i / sqrt(T),

with eta_beta_i standard normal and eta_lam_i uniform on [-4, 4].  The
target (first) unit's lam is pinned to the requested grid value while
its eta_beta stays random, so a study traces estimator risk along the
target's autoregressive coefficient.

Each replication fits every unit (no intercept, one lag -- the true
specification), computes each scheme's estimate of the target's focus,
and records squared errors.  Replication r at grid point g always draws
from the substream (seed, g, r + 1); with ``freeze_unit_params`` the
unit-level draws (sigma2, eta) come once per grid point from
(seed, g, 0) instead of being redrawn.  Aggregation is performed in
replication order, so results are bit-identical across runs and across
thread counts.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    ConfigError,
    EstimationError,
    FocusSingularityError,
    SolverError,
)
from .focus import AffineConditionalMean, Coordinate, focus_value
from .lamse import build_largeN_objective, build_psi_hat
from .panel import ModelSpec, PanelData, fit_all
from .streams import substream
from .weights import (
    aic_weights,
    individual_weights,
    mean_group_weights,
    min_mse_fixed,
    min_mse_large,
    mma_select,
    stein_weights,
    unit_average,
)

PARAMS_STREAM = 0  # substream index reserved for frozen unit-level draws
LAMBDA_GUARD = 0.999

KNOWN_FOCI = ("lambda-coordinate", "conditional-mean")


def parse_scheme(name: str) -> tuple[str, float | int | None]:
    """Split a scheme tag into (kind, parameter)."""
    if name in ("individual", "mean-group", "aic", "mma", "minmse-fixed"):
        return name, None
    if name.startswith("minmse-large:"):
        try:
            nbar = int(name.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"bad scheme {name!r}: nbar must be an integer") from None
        if nbar < 0:
            raise ConfigError(f"bad scheme {name!r}: nbar must be >= 0")
        return "minmse-large", nbar
    if name.startswith("stein:"):
        try:
            lam = float(name.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"bad scheme {name!r}: lambda must be a number") from None
        if not 0.0 <= lam <= 1.0:
            raise ConfigError(f"bad scheme {name!r}: lambda must lie in [0, 1]")
        return "stein", lam
    raise ConfigError(f"unknown scheme {name!r}")


@dataclass(frozen=True)
class SimConfig:
    """Study configuration; serializable to/from JSON."""

    n_units: int
    t_periods: int = 60
    replications: int = 2500
    lambda1_grid: tuple = (0.0,)
    schemes: tuple = ("individual", "mean-group", "minmse-fixed")
    focus: str = "lambda-coordinate"
    seed: int = 0
    threads: int = 1
    freeze_unit_params: bool = False

    def __post_init__(self):
        object.__setattr__(self, "lambda1_grid", tuple(float(v) for v in self.lambda1_grid))
        object.__setattr__(self, "schemes", tuple(self.schemes))
        if self.n_units < 2:
            raise ConfigError(f"need at least 2 units, got {self.n_units}")
        if self.t_periods < 10:
            raise ConfigError(f"need t_periods >= 10, got {self.t_periods}")
        if self.replications < 1:
            raise ConfigError(f"need replications >= 1, got {self.replications}")
        if not self.lambda1_grid:
            raise ConfigError("lambda1_grid is empty")
        if max(abs(v) for v in self.lambda1_grid) >= 1.0:
            raise ConfigError("grid values must satisfy |lambda| < 1 (stationarity)")
        if self.focus not in KNOWN_FOCI:
            raise ConfigError(f"focus must be one of {KNOWN_FOCI}, got {self.focus!r}")
        if not self.schemes:
            raise ConfigError("no schemes requested")
        for s in self.schemes:
            parse_scheme(s)
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")

    @classmethod
    def from_json(cls, source) -> "SimConfig":
        if isinstance(source, dict):
            doc = source
        elif hasattr(source, "read"):
            doc = json.load(source)
        else:
            with open(source, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        known = {
            "n_units",
            "t_periods",
            "replications",
            "lambda1_grid",
            "schemes",
            "focus",
            "seed",
            "threads",
            "freeze_unit_params",
        }
        extra = set(doc) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        if "n_units" not in doc:
            raise ConfigError("config is missing 'n_units'")
        return cls(**doc)

    def to_json_dict(self) -> dict:
        return {
            "n_units": self.n_units,
            "t_periods": self.t_periods,
            "replications": self.replications,
            "lambda1_grid": list(self.lambda1_grid),
            "schemes": list(self.schemes),
            "focus": self.focus,
            "seed": self.seed,
            "threads": self.threads,
            "freeze_unit_params": self.freeze_unit_params,
        }


@dataclass
class SimResult:
    """Per (grid point, scheme) accuracy summaries.

    ``mse`` rows align with ``grid``, columns with ``schemes``.
    ``mc_se`` is the Monte Carlo standard error of the MSE; ``rel_mse``
    and ``rel_se`` are the ratio to the individual estimator's MSE and
    its delta-method standard error (NaN when the individual scheme is
    not part of the study).
    """

    config: SimConfig
    grid: tuple
    schemes: tuple
    mse: np.ndarray
    mc_se: np.ndarray
    rel_mse: np.ndarray
    rel_se: np.ndarray
    n_effective: np.ndarray
    n_dropped: np.ndarray
    mma_unit1_share: np.ndarray
    warnings: list = field(default_factory=list)

    def to_csv(self, stream) -> None:
        """Tidy CSV: grid_lambda1,scheme,mse,rel_mse,mc_se,n_effective."""
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(["grid_lambda1", "scheme", "mse", "rel_mse", "mc_se", "n_effective"])
        for gi, g in enumerate(self.grid):
            for si, s in enumerate(self.schemes):
                writer.writerow(
                    [
                        repr(float(g)),
                        s,
                        repr(float(self.mse[gi, si])),
                        repr(float(self.rel_mse[gi, si])),
                        repr(float(self.mc_se[gi, si])),
                        int(self.n_effective[gi]),
                    ]
                )


def simulate_panel(
    beta: np.ndarray,
    lam: np.ndarray,
    sigma2: np.ndarray,
    t_periods: int,
    rng: np.random.Generator,
) -> PanelData:
    """Simulate the dynamic panel for given unit parameters.

    Returns a balanced panel with unit ids 1..N and times 0..T; the
    t = 0 row is the stationary presample draw, so lag trimming leaves
    exactly T usable observations per unit.
    """
    beta = np.asarray(beta, dtype=float)
    lam = np.asarray(lam, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    n = len(beta)
    if np.any(np.abs(lam) >= 1.0):
        raise ConfigError("all |lambda| must be < 1 for stationarity")
    x = rng.standard_normal((n, t_periods + 1))
    y0 = np.sqrt((1.0 + sigma2) / (1.0 - lam**2)) * rng.standard_normal(n)
    eps = np.sqrt(sigma2)[:, None] * rng.standard_normal((n, t_periods))
    y = np.empty((n, t_periods + 1))
    y[:, 0] = y0
    for t in range(1, t_periods + 1):
        y[:, t] = beta * x[:, t] + lam * y[:, t - 1] + eps[:, t - 1]
    unit_ids = list(range(1, n + 1))
    times = np.arange(t_periods + 1)
    return PanelData(
        unit_ids=unit_ids,
        times={u: times for u in unit_ids},
        y={u: y[i] for i, u in enumerate(unit_ids)},
        x={u: x[i][:, None] for i, u in enumerate(unit_ids)},
        d=1,
    )


def draw_unit_params(
    config: SimConfig, grid_value: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Draw (beta, lam, sigma2) for all units, pinning the target's lam.

    For very short panels the uniform drift support can push |lam| past
    one; such draws are rejected and redrawn (never triggers for the
    default T = 60, where max |lam| is about 0.52).
    """
    n, sqrt_t = config.n_units, np.sqrt(config.t_periods)
    sigma2 = rng.standard_exponential(n)
    eta_beta = rng.standard_normal(n)
    eta_lam = rng.uniform(-4.0, 4.0, n)
    beta = 1.0 + eta_beta / sqrt_t
    lam = eta_lam / sqrt_t
    lam[0] = grid_value
    for _ in range(1000):
        bad = np.abs(lam) >= LAMBDA_GUARD
        bad[0] = False
        if not bad.any():
            break
        lam[bad] = rng.uniform(-4.0, 4.0, int(bad.sum())) / sqrt_t
    return beta, lam, sigma2


def generate_dgp(
    config: SimConfig,
    grid_value: float,
    rng: np.random.Generator,
    params_rng: np.random.Generator | None = None,
) -> tuple[PanelData, np.ndarray]:
    """One panel draw plus the true (beta, lam) of every unit."""
    beta, lam, sigma2 = draw_unit_params(config, grid_value, params_rng or rng)
    panel = simulate_panel(beta, lam, sigma2, config.t_periods, rng)
    return panel, np.column_stack([beta, lam])


_FIT_SPEC = ModelSpec(include_intercept=False, lag_order=1, vcov="hc0")


def run_replication(config: SimConfig, grid_index: int, rep_index: int) -> dict:
    """Squared error of every scheme on one simulated panel.

    Returns ``{"sq_err": {scheme: float}, "mma_unit": id or None}``.
    Raises the underlying error when a replication cannot be completed;
    the study driver records and drops it.
    """
    grid_value = config.lambda1_grid[grid_index]
    rng = substream(config.seed, grid_index, rep_index + 1)
    params_rng = (
        substream(config.seed, grid_index, PARAMS_STREAM)
        if config.freeze_unit_params
        else None
    )
    panel, thetas = generate_dgp(config, grid_value, rng, params_rng)
    fits = fit_all(panel, _FIT_SPEC)
    t_scale = config.t_periods  # T usable rows per unit after lag trimming

    if config.focus == "lambda-coordinate":
        focus = Coordinate(1)
    else:
        y1_last = float(panel.y[panel.unit_ids[0]][-1])
        focus = AffineConditionalMean(np.array([1.0, y1_last]), 0.0)
    truth = float(focus_value(focus, thetas[0]))

    n = config.n_units
    psi_cache = None
    sq_err: dict[str, float] = {}
    mma_unit = None
    for name in config.schemes:
        kind, param = parse_scheme(name)
        if kind == "individual":
            wv = individual_weights(n)
        elif kind == "mean-group":
            wv = mean_group_weights(n)
        elif kind == "stein":
            wv = stein_weights(n, param)
        elif kind == "aic":
            wv = aic_weights(fits, panel, panel.unit_ids[0], _FIT_SPEC)
        elif kind == "mma":
            wv = mma_select(fits, panel, panel.unit_ids[0], _FIT_SPEC)
            mma_unit = panel.unit_ids[int(np.argmax(wv.w))]
        elif kind == "minmse-fixed":
            if psi_cache is None:
                psi_cache = build_psi_hat(fits, focus, t_scale)
            wv = min_mse_fixed(psi_cache)
        else:  # minmse-large; nbar >= N collapses to the fixed-N criterion
            if param >= n:
                if psi_cache is None:
                    psi_cache = build_psi_hat(fits, focus, t_scale)
                wv = min_mse_fixed(psi_cache)
            else:
                q = build_largeN_objective(fits, focus, t_scale, param)
                wv = min_mse_large(q)
        est = unit_average(fits, focus, wv)
        sq_err[name] = (est - truth) ** 2
    return {"sq_err": sq_err, "mma_unit": mma_unit}


def _replication_task(args) -> tuple[int, int, dict | str]:
    config, grid_index, rep_index = args
    try:
        return grid_index, rep_index, run_replication(config, grid_index, rep_index)
    except (EstimationError, SolverError, FocusSingularityError) as exc:
        return grid_index, rep_index, f"{type(exc).__name__}: {exc}"


def run_study(config: SimConfig) -> SimResult:
    """Run the full study; deterministic for a fixed seed and any thread count."""
    n_grid, n_schemes = len(config.lambda1_grid), len(config.schemes)
    reps = config.replications
    tasks = [
        (config, gi, ri) for gi in range(n_grid) for ri in range(reps)
    ]
    if config.threads > 1:
        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            chunk = max(1, len(tasks) // (config.threads * 8))
            results = list(pool.map(_replication_task, tasks, chunksize=chunk))
    else:
        results = [_replication_task(t) for t in tasks]

    errs = np.full((n_grid, reps, n_schemes), np.nan)
    mma_units = np.full((n_grid, reps), -1, dtype=object)
    dropped: list[list[str]] = [[] for _ in range(n_grid)]
    for gi, ri, rec in results:
        if isinstance(rec, str):
            dropped[gi].append(f"replication {ri}: {rec}")
            continue
        for si, s in enumerate(config.schemes):
            errs[gi, ri, si] = rec["sq_err"][s]
        mma_units[gi, ri] = rec["mma_unit"]

    mse = np.full((n_grid, n_schemes), np.nan)
    mc_se = np.full((n_grid, n_schemes), np.nan)
    rel = np.full((n_grid, n_schemes), np.nan)
    rel_se = np.full((n_grid, n_schemes), np.nan)
    n_eff = np.zeros(n_grid, dtype=int)
    n_drop = np.zeros(n_grid, dtype=int)
    mma_share = np.full(n_grid, np.nan)
    warnings: list[str] = []
    try:
        ind_col = config.schemes.index("individual")
    except ValueError:
        ind_col = None

    for gi in range(n_grid):
        ok = ~np.isnan(errs[gi, :, 0])
        e = errs[gi, ok, :]
        n_ok = int(ok.sum())
        n_eff[gi] = n_ok
        n_drop[gi] = reps - n_ok
        if n_drop[gi] > 0.01 * reps:
            warnings.append(
                f"grid point {config.lambda1_grid[gi]}: "
                f"{n_drop[gi]}/{reps} replications dropped"
            )
        if n_ok == 0:
            continue
        mse[gi] = e.mean(axis=0)
        if n_ok > 1:
            mc_se[gi] = e.std(axis=0, ddof=1) / np.sqrt(n_ok)
        if ind_col is not None and mse[gi, ind_col] > 0.0:
            base = e[:, ind_col]
            for si in range(n_schemes):
                a = e[:, si]
                r = mse[gi, si] / mse[gi, ind_col]
                rel[gi, si] = r
                if n_ok > 1:
                    cov = np.cov(a, base, ddof=1)
                    var_ratio = (
                        cov[0, 0] - 2.0 * r * cov[0, 1] + r * r * cov[1, 1]
                    ) / (n_ok * mse[gi, ind_col] ** 2)
                    rel_se[gi, si] = np.sqrt(max(var_ratio, 0.0))
        elif ind_col is not None:
            warnings.append(
                f"grid point {config.lambda1_grid[gi]}: zero individual MSE, "
                "relative MSEs flagged as NaN"
            )
        if "mma" in config.schemes:
            sel = mma_units[gi, ok]
            mma_share[gi] = float(np.mean([u == 1 for u in sel]))
        for entry in dropped[gi][:20]:
            warnings.append(f"grid point {config.lambda1_grid[gi]}: {entry}")

    return SimResult(
        config=config,
        grid=config.lambda1_grid,
        schemes=config.schemes,
        mse=mse,
        mc_se=mc_se,
        rel_mse=rel,
        rel_se=rel_se,
        n_effective=n_eff,
        n_dropped=n_drop,
        mma_unit1_share=mma_share,
        warnings=warnings,
    )


def relative_mse(result: SimResult) -> list[dict]:
    """Ratio table (one row per grid point and scheme) with delta-method SEs.

    Cells with a zero denominator are flagged rather than raising.
    """
    if "individual" not in result.schemes:
        raise ConfigError("relative MSE needs the 'individual' scheme in the study")
    rows = []
    for gi, g in enumerate(result.grid):
        for si, s in enumerate(result.schemes):
            rows.append(
                {
                    "grid_lambda1": float(g),
                    "scheme": s,
                    "mse": float(result.mse[gi, si]),
                    "rel_mse": float(result.rel_mse[gi, si]),
                    "rel_se": float(result.rel_se[gi, si]),
                    "n_effective": int(result.n_effective[gi]),
                    "flag": "zero-denominator"
                    if np.isnan(result.rel_mse[gi, si]) and not np.isnan(result.mse[gi, si])
                    else "",
                }
            )
    return rows
