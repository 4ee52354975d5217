"""Command-line entry point.

Exit codes: 0 success, 2 configuration/argument error, 3 numerical failure,
1 for I/O problems while exporting.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .bounds import SingularFimError, crb_report
from .channel import ModelKind, StateParams, TRUE_MODELS
from .config import ConfigError, ScenarioConfig, load_config
from .estimators import EstimatorConfig, run_monte_carlo
from .experiments import ExperimentSpec, default_base, mme_columns, run_fig2, run_fig3, run_fig4, run_fig5
from .export import BOUNDS_COLUMNS, MAP_COLUMNS, TRIAL_COLUMNS, ExportError, export, export_contours
from .mcrb import DEFAULT_MME_DOMAIN, PseudoTrueError, lower_bound, mme

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("nfmismatch")


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    def d(value):
        return argparse.SUPPRESS if suppress else value

    parser.add_argument("--config", type=Path, default=d(None), help="scenario file with 'key = value' lines")
    parser.add_argument("--seed", type=int, default=d(None), help="overrides the scenario seed")
    parser.add_argument("--out", type=Path, default=d(Path("results")), help="output directory")
    parser.add_argument("--format", choices=("csv", "json"), default=d("csv"))
    parser.add_argument("--trials", type=int, default=d(None), help="Monte Carlo trials")
    parser.add_argument("--mme-domain", choices=("variance", "rmse"), default=d(DEFAULT_MME_DOMAIN))
    parser.add_argument("--threads", type=int, default=d(1), help="worker processes")
    parser.add_argument("-v", "--verbose", action="store_true", default=d(False))


def _scenario_flags(parser: argparse.ArgumentParser, model: bool = True) -> None:
    parser.add_argument("--position", type=float, nargs=2, default=(2.0, 2.0), metavar=("PX", "PY"))
    parser.add_argument("--power", type=float, default=None, help="transmit power in dBm")
    if model:
        parser.add_argument("--model", default="all", help="model kind (MM, TM, TM-SNS, TM-SWM, TM-BSE) or 'all'")


def _map_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--grid", type=int, nargs=2, default=(60, 60), metavar=("NX", "NY"))
    parser.add_argument("--x-range", type=float, nargs=2, default=(0.1, 6.0), metavar=("XMIN", "XMAX"))
    parser.add_argument("--y-range", type=float, nargs=2, default=(-3.0, 3.0), metavar=("YMIN", "YMAX"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nfmismatch", description="Near-field model-mismatch bounds and estimators.")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        _global_flags(p, suppress=True)
        return p

    p = add("fig2", "bounds and estimator RMSE against transmit power")
    p.add_argument("--position", type=float, nargs=2, default=(2.0, 2.0), metavar=("PX", "PY"))
    add("fig3", "MME against array size and distance")
    _map_flags(add("fig4", "MME map and -3 dB boundaries"))
    _map_flags(add("fig5", "MME maps of the variant scenarios and their areas"))
    _scenario_flags(add("bounds", "CRB of one model at one position"))
    _scenario_flags(add("mcrb", "pseudo-true parameters, LB and MME at one position"))
    p = add("estimate", "Monte Carlo position estimation")
    _scenario_flags(p, model=False)
    p.add_argument("--data-model", default="TM")
    p.add_argument("--estimator-model", default="TM")
    return parser


def _base_config(args, experiment: str) -> ScenarioConfig:
    base = default_base(experiment)
    if args.config is not None:
        try:
            base = load_config(args.config)
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    if args.seed is not None:
        base = base.replace(seed=args.seed)
    if getattr(args, "power", None) is not None:
        base = base.with_power(args.power)
    return base


def _spec(args, experiment: str, **extra) -> ExperimentSpec:
    base = _base_config(args, experiment)
    kwargs = dict(base=base, mme_domain=args.mme_domain, threads=args.threads, trials=args.trials or 0)
    if hasattr(args, "grid"):
        kwargs.update(grid_shape=tuple(args.grid), x_range=tuple(args.x_range), y_range=tuple(args.y_range))
    if hasattr(args, "position"):
        kwargs.update(position=tuple(args.position))
    kwargs.update(extra)
    try:
        return ExperimentSpec(experiment, **kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _kinds(text: str, choices) -> list[ModelKind]:
    if text.lower() == "all":
        return list(choices)
    try:
        return [ModelKind.parse(t) for t in text.split(",")]
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _state(args, config: ScenarioConfig) -> StateParams:
    try:
        state = StateParams.at(args.position, config)
        state.to_channel()  # rejects positions behind the array
        return state
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _write(records, name, args, columns=None):
    path = export(records, args.out / name, args.format, columns)
    print(path)


def cmd_fig2(args):
    spec = _spec(args, "fig2")
    out = args.out / "fig2"
    run_fig2(spec, on_record=lambda rows: export(rows, out, args.format))
    print(out.with_suffix("." + args.format))


def cmd_fig3(args):
    spec = _spec(args, "fig3_array")
    for name, rows in run_fig3(spec).items():
        axis = "n_antennas" if name == "fig3_array" else "distance_m"
        _write(rows, name, args, [axis] + mme_columns())


def _write_map(result, prefix, args):
    _write(result.records(), f"{prefix}_map", args, MAP_COLUMNS)
    print(export_contours(result.contours, args.out / f"{prefix}_contours", args.format))
    if result.skipped:
        log.warning("%s: %d grid points skipped", prefix, len(result.skipped))


def cmd_fig4(args):
    result = run_fig4(_spec(args, "fig4_map"))
    _write_map(result, "fig4", args)
    _write([{"metric": m, "area_m2": a} for m, a in result.areas.items()], "fig4_areas", args)


def cmd_fig5(args):
    rows, maps = run_fig5(_spec(args, "fig5_variants"))
    for name, result in maps.items():
        _write_map(result, f"fig5_{name}", args)
    _write(rows, "fig5_areas", args)


def cmd_bounds(args):
    config = _base_config(args, "fig2")
    state = _state(args, config)
    rows = []
    for kind in _kinds(args.model, ModelKind):
        rep = crb_report(kind, state, config)
        rows.append({"model": kind.value, "px": float(state.position[0]), "py": float(state.position[1]), "P_dbm": config.tx_power_dbm, "peb_m": rep.peb, "aeb_rad": rep.aeb, "deb_s": rep.deb})
    _write(rows, "bounds", args, BOUNDS_COLUMNS)


def cmd_mcrb(args):
    config = _base_config(args, "fig2")
    state = _state(args, config)
    rows = []
    for kind in _kinds(args.model, TRUE_MODELS):
        crb = crb_report(kind, state, config)
        lb = lower_bound(kind, state, config)
        row = {"model": kind.value, "px": float(state.position[0]), "py": float(state.position[1]), "P_dbm": config.tx_power_dbm}
        row.update(zip(("aoa0_rad", "toa0_s", "rho0", "xi0_rad"), (float(v) for v in lb.theta0)))
        row.update(
            crb_peb_m=crb.peb,
            lb_peb_m=lb.peb,
            mcrb_peb_m=float(np.sqrt(np.trace(lb.mcrb_position))),
            bias_peb_m=float(np.sqrt(np.trace(lb.bias_position))),
            lb_aeb_rad=lb.aeb,
            lb_deb_s=lb.deb,
            mme_peb_db=mme(crb.peb**2, lb.peb**2, args.mme_domain),
            mme_aeb_db=mme(crb.aeb**2, lb.aeb**2, args.mme_domain),
            mme_deb_db=mme(crb.deb**2, lb.deb**2, args.mme_domain),
            converged=lb.pseudo_true.converged,
        )
        rows.append(row)
    _write(rows, "mcrb", args)


def cmd_estimate(args):
    config = _base_config(args, "fig2")
    state = _state(args, config)
    try:
        kind_data, kind_est = ModelKind.parse(args.data_model), ModelKind.parse(args.estimator_model)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    trials = args.trials if args.trials is not None else 100
    if trials < 1:
        raise ConfigError("--trials must be at least 1")
    rep = run_monte_carlo(config, state, kind_data, kind_est, trials, config.seed, EstimatorConfig(), args.threads)
    rows = [
        {"trial": t, "seed": int(s), "px_hat": float(e[0]), "py_hat": float(e[1]), "err_m": float(err), "converged": bool(c), "iters": int(i)}
        for t, (s, e, err, c, i) in enumerate(zip(rep.seeds, rep.estimates, rep.errors, rep.converged, rep.iterations))
    ]
    _write(rows, "trials", args, TRIAL_COLUMNS)
    print(f"rmse_m={rep.rmse:.6g} trials={rep.n_trials} nonconverged={rep.n_nonconverged}")


COMMANDS = {
    "fig2": cmd_fig2,
    "fig3": cmd_fig3,
    "fig4": cmd_fig4,
    "fig5": cmd_fig5,
    "bounds": cmd_bounds,
    "mcrb": cmd_mcrb,
    "estimate": cmd_estimate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SingularFimError, PseudoTrueError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ExportError as exc:
        print(f"export error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
