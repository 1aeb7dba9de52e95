"""Command line entry point: ``periodic-pml <command> --config c.json``.

Exit codes: 0 success/PASS, 2 validation error, 3 solve failure, 4 FAIL verdict.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import harness
from .config import BUILTIN, ProblemConfig, build_system, load_config, parse_angle, validate_config
from .errors import InsufficientPointsError, PMLError, SolveError, ValidationError
from .fem import dump_matrix
from .model import check_potential_admissibility, check_source_admissibility

EXIT_OK, EXIT_INVALID, EXIT_SOLVE, EXIT_FAIL = 0, 2, 3, 4


def _floats(text: str) -> list[float]:
    return [parse_angle(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--config", help="JSON configuration file")
    src.add_argument("--builtin", choices=sorted(BUILTIN), help="use a built-in configuration")
    common.add_argument("--out", default=".", help="output directory (default: current)")
    common.add_argument("--dump-matrix", action="store_true", help="write the assembled matrix as 'row col re im'")
    common.add_argument("--format", choices=("csv", "json"), default="csv",
                        help="csv: table + report JSON; json: report JSON only")
    common.add_argument("--no-timing", action="store_true", help="write 0 for wall-clock columns")
    common.add_argument("--workers", type=int, default=None, help="concurrent solves in sweeps")
    common.add_argument("--svg", action="store_true", help="also write an SVG line plot")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="periodic-pml", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("modes", parents=[common], help="mode spectrum and PML rates")
    sub.add_parser("check", parents=[common], help="validation and admissibility reports")
    s = sub.add_parser("solve", parents=[common], help="single solve with diagnostics")
    s.add_argument("--R", type=float)
    s.add_argument("--phi", type=parse_angle)
    s = sub.add_parser("sweep-r", parents=[common], help="error versus layer end R")
    s.add_argument("--R-values", type=_floats)
    s.add_argument("--phi", type=parse_angle)
    s = sub.add_parser("sweep-phi", parents=[common], help="pairwise differences across angles")
    s.add_argument("--phi-values", type=_floats)
    s.add_argument("--R", type=float)
    s = sub.add_parser("sweep-h", parents=[common], help="dyadic mesh refinement")
    s.add_argument("--levels", type=_ints)
    s.add_argument("--R", type=float)
    s = sub.add_parser("stability", parents=[common], help="H1 norm of the PML solution versus R")
    s.add_argument("--R-values", type=_floats)
    s = sub.add_parser("probe", parents=[common], help="Fourier-Laplace probe of one modal trace")
    s.add_argument("--beta", type=float, required=True)
    s.add_argument("--mode", type=int, default=0)
    s.add_argument("--xi-max", type=float, default=3.0)
    s.add_argument("--samples", type=int, default=41)
    return p


def _load(args) -> ProblemConfig:
    if args.builtin:
        return BUILTIN[args.builtin]()
    if not args.config:
        raise ValidationError("no configuration given (use --config PATH or --builtin NAME)")
    return load_config(args.config)


def _emit(report, args, stem: str, x=None, y=None, xlabel="", ylabel="") -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    timing = not args.no_timing
    if args.format == "csv":
        harness.write_csv(report, out / f"{stem}.csv", timing)
    harness.write_json(report, out / f"{stem}.json", timing)
    if args.svg and x is not None:
        harness.write_svg(out / f"{stem}.svg", x, y, xlabel, ylabel)


def _dump(config: ProblemConfig, args, R=None) -> None:
    if args.dump_matrix:
        _, _, system = build_system(config, R=R)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        dump_matrix(system, out / "matrix.txt")


def cmd_modes(config: ProblemConfig, args) -> int:
    spec = config.spectrum()
    rates = config.rates()
    if args.format == "json":
        data = {"modes": [{"n": r["n"], "lambda_minus": [r["lambda_minus"].real, r["lambda_minus"].imag],
                           "lambda_plus": [r["lambda_plus"].real, r["lambda_plus"].imag], "class": r["class"]}
                          for r in spec.table()],
                "decay_rate": rates.decay_rate, "gamma_max": rates.gamma_max,
                "beta_range": [rates.beta_range.lower, 0.0], "beta_lower_closed": rates.beta_range.lower_closed}
        print(json.dumps(data, indent=2))
        return EXIT_OK
    print(f"{'n':>4} {'lambda_minus':>28} {'lambda_plus':>28}  class")
    for e in spec.entries:
        print(f"{e.n:>4} {e.lambda_minus.real:>13.6f}{e.lambda_minus.imag:+13.6f}j "
              f"{e.lambda_plus.real:>13.6f}{e.lambda_plus.imag:+13.6f}j  {e.mode_class.value}")
    print(f"decay_rate = {rates.decay_rate:.6f}")
    print(f"gamma_max  = {rates.gamma_max:.6f}")
    print(f"beta_range = {rates.beta_range}")
    return EXIT_OK


def cmd_check(config: ProblemConfig, args) -> int:
    warnings = validate_config(config, phis=config.phi_values, R_values=config.R_values)
    src = check_source_admissibility(config.source, config.T, config.phi, config.tau)
    pot = check_potential_admissibility(config.potential, config.T, config.phi)
    print(f"source admissible: {src.passed} (bound {src.bound:.6g}, worst psi {src.worst_psi:.4f})")
    print(f"potential admissible: {pot.passed} {pot.detail}")
    for r, v in list(pot.sup_tail.items())[::4]:
        print(f"  sup |q| beyond radius {r:g}: {v:.3e}")
    for w in warnings:
        print(f"warning: {w}")
    print("configuration valid")
    return EXIT_OK


def cmd_solve(config: ProblemConfig, args) -> int:
    summary = harness.run_single(config, R=args.R, phi=args.phi)
    _dump(config, args, R=args.R)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    d = summary.to_dict(timing=not args.no_timing)
    (out / "summary.json").write_text(json.dumps(harness._jsonable(d), indent=2, sort_keys=True) + "\n")
    if args.format == "csv":
        f = summary.field
        Y = np.broadcast_to(f.mesh.y[:, None], f.mesh.t.shape)
        with open(out / "field.csv", "w") as fh:
            fh.write("y,t,re,im\n")
            for yv, tv, v in zip(Y.T.ravel(), f.mesh.t.T.ravel(), f.flat):
                fh.write(f"{yv!r},{tv!r},{v.real!r},{v.imag!r}\n")
    print(f"residual {summary.residual:.3e}  |v|_H1(E^T) {summary.norm_h1_ET:.6g}  "
          f"fit residual {summary.fit_residual}")
    if summary.error_h1_ET is not None:
        print(f"H1(E^T) error vs exact solution {summary.error_h1_ET:.3e}")
    return EXIT_OK


def _verdict(report) -> int:
    print(f"verdict: {report.verdict}")
    return EXIT_OK if report.verdict == "PASS" else EXIT_FAIL


def cmd_sweep_r(config: ProblemConfig, args) -> int:
    _dump(config, args)
    try:
        rep = harness.sweep_R(config, R_values=args.R_values, phi=args.phi, workers=args.workers)
    except InsufficientPointsError as exc:
        if exc.report is not None:
            _emit(exc.report, args, "sweep_r")
        print(f"insufficient_points: {exc}", file=sys.stderr)
        return EXIT_FAIL
    for r in rep.rows:
        print(f"R={r.R:g} error={r.error:.3e} norm={r.norm:.6g}{'' if r.used else ' (not fitted)'}")
    print(f"slope {rep.slope:.4f}  threshold {-rep.slope_factor * rep.gamma_max:.4f}  reference {rep.reference}")
    _emit(rep, args, "sweep_r", [r.R for r in rep.rows], [r.error for r in rep.rows], "R", "H1 error")
    return _verdict(rep)


def cmd_sweep_phi(config: ProblemConfig, args) -> int:
    _dump(config, args, R=args.R)
    rep = harness.sweep_phi(config, phi_values=args.phi_values, R=args.R, workers=args.workers)
    for r in rep.rows:
        print(f"phi {r.phi_i:.4f} vs {r.phi_j:.4f}: diff {r.diff:.3e} bound {r.bound:.3e}")
    _emit(rep, args, "sweep_phi")
    return _verdict(rep)


def cmd_sweep_h(config: ProblemConfig, args) -> int:
    rep = harness.sweep_h(config, levels=args.levels, R=args.R, workers=args.workers)
    for r in rep.rows:
        print(f"level {r.level}: L2 {r.error_l2:.3e} H1 {r.error_h1:.3e} orders {r.order_l2} {r.order_h1}")
    _emit(rep, args, "sweep_h", [math.log10(r.h_t) for r in rep.rows], [r.error_h1 for r in rep.rows],
          "log10 h_t", "H1 error")
    return _verdict(rep)


def cmd_stability(config: ProblemConfig, args) -> int:
    _dump(config, args)
    rep = harness.stability(config, R_values=args.R_values)
    for r in rep.rows:
        print(f"R={r.R:g} |v^R|_H1(E^R) = {r.norm_h1:.6g}")
    print(f"variation {rep.variation:.3%}  R0 estimate {rep.R0_estimate}")
    _emit(rep, args, "stability", [r.R for r in rep.rows], [r.norm_h1 for r in rep.rows], "R", "H1 norm")
    return _verdict(rep)


def cmd_probe(config: ProblemConfig, args) -> int:
    from .radiation import cone_grid, fit_outgoing, laplace_probe, modal_trace

    validate_config(config)
    _dump(config, args)
    summary = harness.run_single(config)
    spec = config.spectrum()
    fit = fit_outgoing(summary.field, spec, config.phi)
    trace = modal_trace(summary.field, args.mode, config.phi)
    grid = cone_grid(args.beta, config.phi, args.xi_max, args.samples)
    res = laplace_probe(trace, args.beta, config.phi, grid, spec, tail=fit, tau=config.tau)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res.to_csv(out / "probe.csv")
    print(f"analyticity residual {res.analyticity_residual:.3e}; fit residual {fit.residual:.3e}")
    return EXIT_OK


COMMANDS = {
    "modes": cmd_modes, "check": cmd_check, "solve": cmd_solve, "sweep-r": cmd_sweep_r,
    "sweep-phi": cmd_sweep_phi, "sweep-h": cmd_sweep_h, "stability": cmd_stability, "probe": cmd_probe,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = _load(args)
        if args.workers:
            config = config.with_(workers=args.workers)
        return COMMANDS[args.command](config, args)
    except SolveError as exc:
        print(f"solve failed: {exc}", file=sys.stderr)
        return EXIT_SOLVE
    except (ValidationError, PMLError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
