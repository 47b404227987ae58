"""Minimum-MSE unit averaging for heterogeneous panels.

Estimate one unit's focus parameter (a coefficient, a forecast, a
long-run effect) as a weighted average of every unit's estimate, with
weights minimizing a quadratic local-asymptotic MSE criterion over the
unit simplex.  Fixed-N and large-N criteria, benchmark schemes (mean
group, Stein, smooth AIC, Mallows-style selection), a limit-experiment
oracle, and a reproducible simulation harness are included.
"""

from ._qp_backend import backend_name as solver_backend
from .exceptions import (
    ConfigError,
    DimensionError,
    EstimationError,
    FocusSingularityError,
    InfeasibleWeightsError,
    PanelFormatError,
    SolverError,
    UnitAveragingError,
)
from .focus import (
    AffineConditionalMean,
    Coordinate,
    FocusSpec,
    LongRunEffect,
    focus_gradient,
    focus_value,
    parse_focus,
)
from .lamse import (
    LamseFixedN,
    LamseLargeN,
    LamseUnbiased,
    build_largeN_objective,
    build_psi_hat,
    build_psi_tilde,
    evaluate_lamse,
)
from .montecarlo import (
    SimConfig,
    SimResult,
    generate_dgp,
    relative_mse,
    run_replication,
    run_study,
)
from .oracle import (
    LimitDraw,
    LimitSpec,
    build_psi_bar,
    draw_limit,
    load_limit_spec,
    population_lamse_fixed,
    population_lamse_large,
    simulate_limit_estimator,
    simulate_limit_weights,
)
from .panel import (
    ModelSpec,
    PanelData,
    UnitFit,
    estimate_variance,
    fit_all,
    fit_unit,
    load_panel,
    loglik_on_unit,
)
from .streams import substream
from .weights import (
    QpProblem,
    WeightVector,
    aic_weights,
    individual_weights,
    kkt_residual,
    mean_group_weights,
    min_mse_fixed,
    min_mse_large,
    mma_select,
    project_simplex,
    solve_simplex_qp,
    stein_weights,
    unit_average,
)

__version__ = "0.1.0"

__all__ = [
    "AffineConditionalMean",
    "ConfigError",
    "Coordinate",
    "DimensionError",
    "EstimationError",
    "FocusSingularityError",
    "FocusSpec",
    "InfeasibleWeightsError",
    "LamseFixedN",
    "LamseLargeN",
    "LamseUnbiased",
    "LimitDraw",
    "LimitSpec",
    "LongRunEffect",
    "ModelSpec",
    "PanelData",
    "PanelFormatError",
    "QpProblem",
    "SimConfig",
    "SimResult",
    "SolverError",
    "UnitAveragingError",
    "UnitFit",
    "WeightVector",
    "aic_weights",
    "build_largeN_objective",
    "build_psi_bar",
    "build_psi_hat",
    "build_psi_tilde",
    "draw_limit",
    "estimate_variance",
    "evaluate_lamse",
    "fit_all",
    "fit_unit",
    "focus_gradient",
    "focus_value",
    "generate_dgp",
    "individual_weights",
    "kkt_residual",
    "load_limit_spec",
    "load_panel",
    "loglik_on_unit",
    "mean_group_weights",
    "min_mse_fixed",
    "min_mse_large",
    "mma_select",
    "parse_focus",
    "population_lamse_fixed",
    "population_lamse_large",
    "project_simplex",
    "relative_mse",
    "run_replication",
    "run_study",
    "simulate_limit_estimator",
    "simulate_limit_weights",
    "solve_simplex_qp",
    "solver_backend",
    "stein_weights",
    "substream",
    "unit_average",
]
