"""Command-line front end.

Subcommands:

* ``estimate``  -- fit a panel CSV, compute a weighting scheme's weights
  and the averaging estimate of the target unit's focus; emits JSON.
* ``simulate``  -- run a simulation study from a JSON config; emits the
  tidy results CSV.
* ``limit``     -- sample limiting weights or the limiting estimator
  distribution from a limit-spec JSON; emits CSV.
* ``psi``       -- dump a criterion matrix (fixed-N, its bias-corrected
  variant, or the large-N matrix) for a panel, as CSV.

Exit codes: 0 on success; 2 for usage problems (bad flags, missing
files, malformed input schemas); 1 for computation failures (focus
singularities, non-convergence, estimation errors).  Output files are
written atomically (temp file then rename), so failures never leave
partial output behind.  Stochastic subcommands require an explicit
--seed; results are byte-identical across runs and thread counts.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys
import tempfile

import numpy as np

from . import montecarlo, oracle
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
from .focus import parse_focus
from .lamse import build_largeN_objective, build_psi_hat, build_psi_tilde, matrix_to_csv
from .panel import ModelSpec, fit_all, load_panel
from .weights import (
    WeightVector,
    aic_weights,
    individual_weights,
    mean_group_weights,
    min_mse_fixed,
    min_mse_large,
    mma_select,
    stein_weights,
    unit_average,
)

USAGE_ERRORS = (PanelFormatError, ConfigError, json.JSONDecodeError, FileNotFoundError)
COMPUTE_ERRORS = (
    EstimationError,
    FocusSingularityError,
    SolverError,
    InfeasibleWeightsError,
    DimensionError,
)


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".unitavg-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _require_file(path: str, what: str) -> str:
    if not os.path.isfile(path):
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def _model_spec(args) -> ModelSpec:
    return ModelSpec(
        include_intercept=args.intercept,
        lag_order=args.lag,
        vcov=args.vcov,
    )


def _target_first(panel, fits, target_raw: str):
    """Reorder fits target-first; accepts the unit id as typed on the CLI."""
    ids = panel.unit_ids
    target = target_raw
    if target not in ids:
        try:
            target = int(target_raw)
        except ValueError:
            target = target_raw
    if target not in ids:
        raise ConfigError(f"unit {target_raw!r} not present in panel")
    k = ids.index(target)
    order = [k] + [i for i in range(len(ids)) if i != k]
    return target, [fits[i] for i in order], [ids[i] for i in order]


def _cmd_estimate(args) -> int:
    _require_file(args.panel, "panel file")
    panel = load_panel(args.panel)
    spec = _model_spec(args)
    focus = parse_focus(args.focus)
    fits_all = fit_all(panel, spec)
    target, fits, ids = _target_first(panel, fits_all, args.unit)
    n = len(fits)
    t_scale = fits[0].T_eff

    scheme = args.scheme
    if scheme == "minmse":
        if args.regime == "fixed":
            wv = min_mse_fixed(build_psi_hat(fits, focus, t_scale))
        else:
            if args.nbar is None:
                raise ConfigError("--regime large requires --nbar")
            ordering = _parse_order(args.order, ids) if args.order else None
            q = build_largeN_objective(fits, focus, t_scale, args.nbar, ordering)
            wv = min_mse_large(q)
    elif scheme == "individual":
        wv = individual_weights(n)
    elif scheme == "mean-group":
        wv = mean_group_weights(n)
    elif scheme.startswith("stein:"):
        wv = stein_weights(n, float(scheme.split(":", 1)[1]))
    elif scheme == "aic":
        wv = aic_weights(fits, panel, target, spec)
    elif scheme == "mma":
        wv = mma_select(fits, panel, target, spec)
    else:
        raise ConfigError(
            f"unknown scheme {scheme!r}; use minmse, individual, mean-group, "
            "stein:<lambda>, aic, or mma"
        )
    estimate = unit_average(fits, focus, wv)
    payload = wv.to_json_dict(ids)
    payload["target_unit"] = target
    payload["focus"] = args.focus
    payload["estimate"] = float(estimate)
    text = json.dumps(payload, indent=2) + "\n"
    if args.out:
        _atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def _parse_order(order_text: str, ids: list) -> np.ndarray:
    wanted = [tok.strip() for tok in order_text.split(",") if tok.strip()]
    positions = []
    for tok in wanted:
        unit = tok
        if unit not in ids:
            try:
                unit = int(tok)
            except ValueError:
                unit = tok
        if unit not in ids:
            raise ConfigError(f"--order names unknown unit {tok!r}")
        positions.append(ids.index(unit))
    if sorted(positions) != list(range(len(ids))):
        raise ConfigError("--order must list every unit exactly once")
    return np.array(positions, dtype=int)


def _cmd_simulate(args) -> int:
    _require_file(args.config, "config file")
    config = montecarlo.SimConfig.from_json(args.config)
    overrides = config.to_json_dict()
    overrides["seed"] = args.seed
    overrides["threads"] = args.threads
    config = montecarlo.SimConfig.from_json(overrides)
    result = montecarlo.run_study(config)
    buf = io.StringIO()
    result.to_csv(buf)
    _atomic_write(args.out, buf.getvalue())
    for w in result.warnings:
        sys.stderr.write(f"warning: {w}\n")
    return 0


def _cmd_limit(args) -> int:
    _require_file(args.config, "limit spec file")
    spec = oracle.load_limit_spec(args.config)
    buf = io.StringIO()
    if args.what == "weights":
        samples = oracle.simulate_limit_weights(spec, args.regime, args.reps, args.seed)
        header = [f"w{i + 1}" for i in range(spec.nbar)]
    else:
        samples = oracle.simulate_limit_estimator(spec, args.regime, args.reps, args.seed)
        header = ["estimator"]
    oracle.samples_to_csv(samples, buf, header=header)
    _atomic_write(args.out, buf.getvalue())
    return 0


def _cmd_psi(args) -> int:
    _require_file(args.panel, "panel file")
    panel = load_panel(args.panel)
    spec = _model_spec(args)
    focus = parse_focus(args.focus)
    fits_all = fit_all(panel, spec)
    _, fits, _ = _target_first(panel, fits_all, args.unit)
    t_scale = fits[0].T_eff
    if args.matrix == "psi":
        M = build_psi_hat(fits, focus, t_scale).psi
    elif args.matrix == "psi-tilde":
        M = build_psi_tilde(fits, focus, t_scale).psi_tilde
    else:
        if args.nbar is None:
            raise ConfigError("--matrix q requires --nbar")
        M = build_largeN_objective(fits, focus, t_scale, args.nbar).q
    buf = io.StringIO()
    matrix_to_csv(M, buf)
    if args.out:
        _atomic_write(args.out, buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="unitavg",
        description="Minimum-MSE unit averaging for heterogeneous panels.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_model_flags(p):
        p.add_argument("--vcov", default="hc0", help="hc0 or nw:<L> (default hc0)")
        p.add_argument("--lag", type=int, default=0, choices=(0, 1),
                       help="include the lagged outcome as a regressor (default 0)")
        p.add_argument("--intercept", action=argparse.BooleanOptionalAction,
                       default=True, help="include an intercept (default yes)")

    est = sub.add_parser("estimate", help="estimate a focus on a user panel")
    est.add_argument("--panel", required=True, help="panel CSV (unit,time,y,x1..xd)")
    est.add_argument("--unit", required=True, help="target unit id")
    est.add_argument("--focus", required=True,
                     help="coordinate:<k> | condmean:<a1,..,ap>:<b> | longrun:<ib>:<il>")
    est.add_argument("--regime", default="fixed", choices=("fixed", "large"))
    est.add_argument("--nbar", type=int, default=None,
                     help="number of unrestricted units (large regime)")
    est.add_argument("--order", default=None,
                     help="comma-separated unit ids, unrestricted first (default: input order)")
    est.add_argument("--scheme", default="minmse",
                     help="minmse | individual | mean-group | stein:<l> | aic | mma")
    est.add_argument("--out", default=None, help="write JSON here instead of stdout")
    add_model_flags(est)
    est.set_defaults(func=_cmd_estimate)

    sim = sub.add_parser("simulate", help="run a simulation study")
    sim.add_argument("--config", required=True, help="SimConfig JSON")
    sim.add_argument("--seed", required=True, type=int, help="master seed")
    sim.add_argument("--out", required=True, help="results CSV path")
    sim.add_argument("--threads", type=int, default=1)
    sim.set_defaults(func=_cmd_simulate)

    lim = sub.add_parser("limit", help="sample the limit experiment")
    lim.add_argument("--config", required=True, help="limit spec JSON")
    lim.add_argument("--reps", required=True, type=int)
    lim.add_argument("--seed", required=True, type=int)
    lim.add_argument("--out", required=True, help="samples CSV path")
    lim.add_argument("--regime", default="fixed", choices=("fixed", "large"))
    lim.add_argument("--what", default="weights", choices=("weights", "estimator"))
    lim.add_argument("--threads", type=int, default=1,
                     help="accepted for interface compatibility; sampling is stream-indexed")
    lim.set_defaults(func=_cmd_limit)

    psi = sub.add_parser("psi", help="dump a criterion matrix as CSV")
    psi.add_argument("--panel", required=True)
    psi.add_argument("--unit", required=True)
    psi.add_argument("--focus", required=True)
    psi.add_argument("--matrix", default="psi", choices=("psi", "psi-tilde", "q"))
    psi.add_argument("--nbar", type=int, default=None)
    psi.add_argument("--out", default=None, help="write CSV here instead of stdout")
    add_model_flags(psi)
    psi.set_defaults(func=_cmd_psi)
    return parser


def run_cli(argv=None) -> int:
    """Parse arguments and run; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except USAGE_ERRORS as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except COMPUTE_ERRORS as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except UnitAveragingError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
