"""Command-line front end for the spectrum, FOEL, Sutherland, TL and Bethe runs."""

from __future__ import annotations

import argparse
import logging
import math
import signal
import threading
from contextlib import contextmanager
from typing import Any, Callable, Iterator

from foel.basis import Geometry, Sector, enumerate_sector
from foel.bethe import (
    ContinuationSchedule,
    continue_in_n,
    curve_parameters,
    dhar_shastry_eps,
    ed_match,
    energy_from_roots,
    hermite_init,
    newton_refine,
    sutherland_sweep,
)
from foel.config import DEFAULT_DENSE_THRESHOLD, DEFAULT_SEED, RunConfig, SolverTolerances
from foel.eigensolve import full_spectrum
from foel.errors import (
    BetheError,
    FoelError,
    LabelAmbiguityError,
    SolverConvergenceError,
    VerificationError,
)
from foel.output import render_csv, render_json, to_jsonable, write_output
from foel.spectra import (
    cos_theta_projection,
    e0_table,
    foel_check,
    lowest_band_monotone,
    sutherland_check,
)
from foel.tldiagrams import verify_sector

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_SOLVER = 2
EXIT_VERIFICATION = 3
EXIT_INTERRUPTED = 130

ED_MATCH_TOLERANCE = 1e-6


class _ConsoleInterrupt(Exception):
    """Raised when a run receives a console interrupt signal."""


def configure_logging(level: int = logging.INFO) -> None:
    """Configure console logging for command-line runs."""
    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )


@contextmanager
def _handle_console_interrupts() -> Iterator[None]:
    """Stop a running solve or continuation on Ctrl+C or Ctrl+Break.

    The signal surfaces as ``_ConsoleInterrupt`` out of the command, and the
    previous handlers are restored afterwards. Signal handlers can only be
    installed from the main thread, so other threads run unguarded.
    """
    if threading.current_thread() is not threading.main_thread():
        yield
        return

    previous_handlers: dict[signal.Signals, Any] = {}

    def stop_run(signum: int, frame: object) -> None:
        logger.warning("Received %s; abandoning the current run", signal.Signals(signum).name)
        raise _ConsoleInterrupt

    for signum in _interrupt_signals():
        previous_handlers[signum] = signal.getsignal(signum)
        signal.signal(signum, stop_run)

    try:
        yield
    finally:
        for signum, previous_handler in previous_handlers.items():
            signal.signal(signum, previous_handler)


def _interrupt_signals() -> tuple[signal.Signals, ...]:
    # SIGBREAK exists on Windows consoles only
    sigbreak = getattr(signal, "SIGBREAK", None)
    return (signal.SIGINT,) if sigbreak is None else (signal.SIGINT, sigbreak)


def _emit(config: RunConfig, document: dict[str, Any], rows: list[dict[str, Any]], fields: list[str]) -> None:
    if config.output_format == "csv":
        write_output(render_csv(rows, fields), config.out_path)
    else:
        write_output(render_json(document), config.out_path)


def _single_n(config: RunConfig) -> int:
    if len(config.n_values) != 1:
        raise FoelError(f"The '{config.command}' command needs exactly one N (use --n).")
    return config.n_values[0]


def cmd_spectrum(config: RunConfig, args: argparse.Namespace) -> int:
    n_sites = _single_n(config)
    k = config.k if config.k is not None else n_sites // 2
    basis = enumerate_sector(Sector(n_sites, k, config.geometry))
    report = full_spectrum(basis, tolerances=config.tolerances, threshold=config.dense_threshold)
    levels = [
        {
            "energy": level.energy_2h,
            "s": level.total_spin_s,
            "momenta": list(level.momentum_indices),
            "multiplicity": level.multiplicity,
        }
        for level in report.levels
    ]
    document = {
        "N": n_sites,
        "k": k,
        "geometry": config.geometry.value,
        "convention": "2H",
        "levels": levels,
    }
    rows = [
        {"N": n_sites, "energy": level["energy"], "s": level["s"], "j": j, "multiplicity": level["multiplicity"]}
        for level in levels
        for j in (level["momenta"] or [None])
    ]
    _emit(config, document, rows, ["N", "energy", "s", "j", "multiplicity"])
    return EXIT_OK


def cmd_foel(config: RunConfig, args: argparse.Namespace) -> int:
    results = []
    rows = []
    for n_sites in config.n_values:
        table = e0_table(
            n_sites,
            config.geometry,
            method=args.method,
            tolerances=config.tolerances,
            threshold=config.dense_threshold,
            seed=config.seed,
            max_iter=config.max_lanczos_iter,
        )
        finding = foel_check(table, tolerance=config.tolerances.violation)
        pairs = ", ".join(f"({v.lower},{v.upper})" for v in finding.violations) or "none"
        logger.info("N=%d: violations %s, equalities %s", n_sites, pairs, list(finding.equalities))
        results.append(
            {
                "N": n_sites,
                "e0_h": list(table.e0_h),
                "violations": list(finding.violations),
                "equalities": [list(pair) for pair in finding.equalities],
                "holds": finding.holds,
            }
        )
        rows.extend(
            {"N": n_sites, "k": k, "e0_h": value / 2, "e0_2h": value}
            for k, value in enumerate(table.e0_2h)
        )
    document = {
        "geometry": config.geometry.value,
        "convention": "H",
        "method": args.method,
        "results": results,
    }
    _emit(config, document, rows, ["N", "k", "e0_h", "e0_2h"])
    return EXIT_OK


def cmd_sutherland(config: RunConfig, args: argparse.Namespace) -> int:
    if config.geometry is not Geometry.RING:
        raise FoelError("Sutherland's surmise is stated for rings only.")
    n_sites = _single_n(config)
    report = sutherland_check(n_sites, tolerances=config.tolerances, threshold=config.dense_threshold)
    points = cos_theta_projection(n_sites, tolerances=config.tolerances)
    monotone = lowest_band_monotone(points, tolerance=config.tolerances.violation)
    projection = [
        {"j": p.index, "cos_theta": p.cos_theta, "energy": p.energy_2h, "s": p.total_spin_s, "lowest": p.lowest}
        for p in points
    ]
    document = {
        "N": n_sites,
        "convention": "2H",
        "route": report.route,
        "rows": list(report.rows),
        "all_equal": report.all_equal,
        "projection": projection,
        "lowest_band_monotone": monotone,
    }
    logger.info("N=%d: Sutherland equal for all k = %s, lowest band monotone = %s", n_sites, report.all_equal, monotone)
    _emit(config, document, projection, ["j", "cos_theta", "energy", "s", "lowest"])
    return EXIT_OK


def cmd_tl_verify(config: RunConfig, args: argparse.Namespace) -> int:
    n_sites = _single_n(config)
    if config.k is None:
        raise FoelError("The 'tl-verify' command needs --k.")
    verification = verify_sector(n_sites, config.k, config.geometry, tolerances=config.tolerances)
    logger.info("Removed A-eigenvalues: %s", [round(value, 12) for value in verification.removed_values])
    document = {
        "convention": "2H",
        **to_jsonable(verification),
        "tl_relations": verification.tl_relations,
        "passed": verification.passed,
    }
    rows = [{"N": n_sites, "k": config.k, "energy": value} for value in verification.kept_2h]
    _emit(config, document, rows, ["N", "k", "energy"])
    for failure in verification.relation_failures:
        logger.error("TL relation failed: %s", failure)
    return EXIT_OK if verification.passed else EXIT_VERIFICATION


def cmd_bethe(config: RunConfig, args: argparse.Namespace) -> int:
    k = config.k if config.k is not None else 2
    schedule = ContinuationSchedule(min_step=args.min_step)
    start = hermite_init(k, args.n_start, scale=args.hermite_scale)
    start = newton_refine(
        start, schedule.newton_max_iter, schedule.newton_tol, min_separation=schedule.min_separation
    )
    result = continue_in_n(start, args.n_target, schedule)

    chain = []
    mismatched = False
    skip_warning_emitted = False
    for state in result.chain:
        entry: dict[str, Any] = state.as_dict()
        if state.is_integer:
            entry["energy"] = energy_from_roots(state)
            if k == 1:
                mode = state.mode_numbers[0]
                entry["dispersion"] = 2 * (1 - math.cos(2 * math.pi * mode / state.n_param))
            if args.ed_check:
                match = ed_match(
                    state,
                    tolerances=config.tolerances,
                    threshold=config.dense_threshold,
                    pad=config.lanczos_pad,
                    seed=config.seed,
                    max_iter=config.max_lanczos_iter,
                )
                if match is None:
                    log = logger.debug if skip_warning_emitted else logger.warning
                    log("No ED level to compare at N=%g; the Bethe energy is above the Lanczos band", state.n_param)
                    skip_warning_emitted = True
                    entry["ed_energy"] = entry["ed_deviation"] = None
                else:
                    nearest, deviation = match
                    entry["ed_energy"] = nearest
                    entry["ed_deviation"] = deviation
                    mismatched |= deviation > ED_MATCH_TOLERANCE
        chain.append(entry)

    document = {
        "k": k,
        "n_start": args.n_start,
        "n_target": args.n_target,
        "convention": "2H",
        "chain": chain,
        "diagnostics": result.diagnostics,
        "completed": result.completed,
    }
    _emit(
        config,
        document,
        chain,
        ["n", "energy", "residual", "converged", "iterations", "dispersion", "ed_energy", "ed_deviation"],
    )
    if mismatched:
        logger.error("A Bethe energy has no ED eigenvalue within %g", ED_MATCH_TOLERANCE)
        return EXIT_VERIFICATION
    if not result.completed:
        logger.error("Continuation stopped early: %s", result.diagnostics.message)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_curve(config: RunConfig, args: argparse.Namespace) -> int:
    points = sutherland_sweep(curve_parameters(args.a_min, args.a_max, args.samples))
    rows = [
        {
            "a": point.a,
            "d": point.d,
            "eps_sutherland": point.eps,
            "eps_dhar_shastry": dhar_shastry_eps(min(max(point.d, 0.0), 1.0)),
        }
        for point in points
    ]
    _emit(config, {"convention": "energy density", "rows": rows}, rows, ["a", "d", "eps_sutherland", "eps_dhar_shastry"])
    return EXIT_OK


COMMANDS: dict[str, Callable[[RunConfig, argparse.Namespace], int]] = {
    "spectrum": cmd_spectrum,
    "foel": cmd_foel,
    "sutherland": cmd_sutherland,
    "tl-verify": cmd_tl_verify,
    "bethe": cmd_bethe,
    "curve": cmd_curve,
}


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--n", type=int, nargs="+", default=[], help="Ring or chain length(s).")
    common.add_argument(
        "--n-range",
        type=int,
        nargs=2,
        metavar=("START", "STOP"),
        help="Inclusive range of lengths, combined with --step.",
    )
    common.add_argument("--step", type=int, default=1, help="Stride for --n-range.")
    common.add_argument("--geometry", choices=[g.value for g in Geometry], default=Geometry.RING.value)
    common.add_argument("--k", type=int, help="Magnon (spin deviate) count.")
    common.add_argument("--dense-threshold", type=int, default=DEFAULT_DENSE_THRESHOLD)
    common.add_argument("--tol-degeneracy", type=float, default=SolverTolerances.degeneracy)
    common.add_argument("--tol-label", type=float, default=SolverTolerances.label)
    common.add_argument("--seed", type=int, default=DEFAULT_SEED, help="Seed for Lanczos start vectors.")
    common.add_argument("--lanczos-pad", type=int, default=8, help="Extra Lanczos vectors beyond the requested levels.")
    common.add_argument("--max-lanczos-iter", type=int, default=5000)
    common.add_argument("--format", dest="output_format", choices=["json", "csv"], default="json")
    common.add_argument("--out", dest="out_path", help="Output file; stdout when omitted.")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true", help="Log per-iteration detail.")
    verbosity.add_argument("--quiet", action="store_true", help="Log warnings and errors only.")
    return common


def build_parser() -> argparse.ArgumentParser:
    """Build the command-line parser for the foel commands."""
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="foel",
        description="Energy-level ordering of the spin-1/2 Heisenberg ferromagnet on rings and chains.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    commands.add_parser("spectrum", parents=[common], help="Labeled 2H spectrum of one sector.")

    foel = commands.add_parser("foel", parents=[common], help="E0 tables and FOEL violations.")
    foel.add_argument("--method", choices=["dense", "lanczos"], default="dense")

    commands.add_parser("sutherland", parents=[common], help="Sutherland's surmise and the cos-theta projection.")
    commands.add_parser("tl-verify", parents=[common], help="Temperley-Lieb route checks for one sector.")

    bethe = commands.add_parser("bethe", parents=[common], help="Bethe-root continuation in N.")
    bethe.add_argument("--n-start", type=float, default=60.0)
    bethe.add_argument("--n-target", type=float, default=12.0)
    bethe.add_argument("--hermite-scale", type=float, default=1.0)
    bethe.add_argument("--min-step", type=float, default=1 / 16)
    bethe.add_argument("--ed-check", action="store_true", help="Compare integer-N energies with ED.")

    curve = commands.add_parser("curve", parents=[common], help="Sutherland and Dhar-Shastry energy curves.")
    curve.add_argument("--a-min", type=float, default=1.1)
    curve.add_argument("--a-max", type=float, default=1e6)
    curve.add_argument("--samples", type=int, default=50)
    return parser


def _n_values(args: argparse.Namespace) -> tuple[int, ...]:
    values = list(args.n)
    if args.n_range:
        start, stop = args.n_range
        values.extend(range(start, stop + 1, args.step))
    return tuple(dict.fromkeys(values))


def build_config(args: argparse.Namespace) -> RunConfig:
    tolerances = SolverTolerances(degeneracy=args.tol_degeneracy, label=args.tol_label)
    return RunConfig(
        command=args.command,
        n_values=_n_values(args),
        geometry=Geometry(args.geometry),
        k=args.k,
        tolerances=tolerances,
        dense_threshold=args.dense_threshold,
        out_path=args.out_path,
        output_format=args.output_format,
        seed=args.seed,
        lanczos_pad=args.lanczos_pad,
        max_lanczos_iter=args.max_lanczos_iter,
    )


def main(argv: list[str] | None = None) -> int:
    """Main entry point for the foel command line."""
    args = build_parser().parse_args(argv)
    configure_logging(logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO)

    try:
        config = build_config(args)
        with _handle_console_interrupts():
            return COMMANDS[args.command](config, args)
    except (SolverConvergenceError, LabelAmbiguityError, BetheError) as exc:
        logger.error("%s", exc)
        return EXIT_SOLVER
    except VerificationError as exc:
        logger.error("Verification failed: %s", exc)
        return EXIT_VERIFICATION
    except (FoelError, ValueError) as exc:
        logger.error("%s", exc)
        return EXIT_INPUT
    except (KeyboardInterrupt, _ConsoleInterrupt):
        logger.warning("Interrupted")
        return EXIT_INTERRUPTED


if __name__ == "__main__":
    raise SystemExit(main())
