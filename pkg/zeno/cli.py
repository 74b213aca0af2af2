"""Command-line entry point: ``zeno simulate|analyze|fit|spectrum|scaling``.

Tables go to stdout (or ``--out``), diagnostics to stderr. Exit codes:
0 success, 1 worker or internal failure, 2 bad config, input file or
argument, 3 fit or estimator failure.
"""

import argparse
import logging
import math
import sys
from typing import Iterable, List, Optional, Sequence

from pydantic import ValidationError

from . import __version__
from .config import ZenoSettings
from .exceptions import (
    ZenoConfigError,
    ZenoError,
    ZenoEstimatorError,
    ZenoFitError,
    ZenoFormatError,
    ZenoValidationError,
)
from .experiment import AnalysisReport, ZenoExperiment, analyze_trajectories
from .models import Mode
from .protocol import zeno_scan
from .storage import FileTrajectoryStorage, dumps_trajectories

logger = logging.getLogger("zeno.cli")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INPUT = 2
EXIT_FIT = 3

DEFAULT_N_VALUES = [1, 2, 5, 10, 20, 50, 100, 200, 500, 1000]


def _fmt(value: object) -> str:
    if value is None:
        return "nan"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _table(header: Sequence[str], rows: Iterable[Sequence[object]], delimiter: str) -> List[str]:
    lines = ["# " + delimiter.join(header)]
    lines.extend(delimiter.join(_fmt(v) for v in row) for row in rows)
    return lines


def _emit(lines: List[str], out: Optional[str]) -> None:
    text = "\n".join(lines) + "\n"
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        logger.info("Wrote %s", out)
    else:
        sys.stdout.write(text)
        sys.stdout.flush()


def _experiment(args: argparse.Namespace, settings: ZenoSettings) -> ZenoExperiment:
    experiment = ZenoExperiment.from_file(
        args.config, workers=getattr(args, "workers", None), settings=settings
    )
    experiment.config = experiment.config.with_overrides(
        seed=args.seed, mode=getattr(args, "mode", None)
    )
    return experiment


def cmd_simulate(args: argparse.Namespace, settings: ZenoSettings) -> int:
    experiment = _experiment(args, settings)
    data = experiment.simulate()
    if args.out:
        FileTrajectoryStorage(args.out).save(data)
    else:
        sys.stdout.write(dumps_trajectories(data))
        sys.stdout.flush()
    return EXIT_OK


def _report_lines(report: AnalysisReport, delimiter: str) -> List[str]:
    header = ["q", "U_on", "U_off", "V_on", "V_off", "model_on", "model_off"]
    rows = (
        [r.q, r.u_on, r.u_off, r.v_on, r.v_off, r.model_on, r.model_off] for r in report.rows
    )
    lines = _table(header, rows, delimiter)
    hist = report.histogram
    lines.append(f"# trajectories = {hist.n_trajectories}")
    lines.append(f"# trajectory_length = {hist.trajectory_length}")
    fit = report.fit
    if fit is not None:
        low, high = fit.confidence_interval("theta")
        for key, value in (
            ("theta_hat", fit.theta_hat),
            ("theta_stderr", fit.stderr("theta")),
            ("theta_ci95_low", low),
            ("theta_ci95_high", high),
            ("f0_hat", fit.f0_hat),
            ("f0_stderr", fit.stderr("f0")),
            ("f1_hat", fit.f1_hat),
            ("f1_stderr", fit.stderr("f1")),
            ("p0_hat", fit.p0_hat),
            ("p1_hat", fit.p1_hat),
            ("objective", fit.objective),
            ("iterations", fit.iterations),
            ("converged", str(fit.converged).lower()),
        ):
            lines.append(f"# {key} = {_fmt(value)}")
    return lines


def cmd_analyze(args: argparse.Namespace, settings: ZenoSettings) -> int:
    files = [FileTrajectoryStorage(path).load() for path in args.files]
    report = analyze_trajectories(files, fit=args.fit)
    _emit(_report_lines(report, settings.delimiter), args.out)
    if report.fit_error is not None:
        print(f"error: fit failed: {report.fit_error}", file=sys.stderr)
        return EXIT_FIT
    return EXIT_OK


def cmd_spectrum(args: argparse.Namespace, settings: ZenoSettings) -> int:
    if not (math.isfinite(args.step_hz) and args.step_hz > 0):
        raise ZenoValidationError(f"--step-hz must be positive, got {args.step_hz}")
    experiment = _experiment(args, settings)
    points = experiment.spectrum(args.min_hz, args.max_hz, args.step_hz, args.samples)
    rows = ([p.detuning_hz, p.p_analytic, p.p_montecarlo, p.stderr] for p in points)
    header = ["detuning_Hz", "P_analytic", "P_montecarlo", "stderr"]
    _emit(_table(header, rows, settings.delimiter), args.out)
    return EXIT_OK


def cmd_scaling(args: argparse.Namespace, settings: ZenoSettings) -> int:
    points = zeno_scan(args.theta_total, args.n, args.samples, seed=args.seed or 0)
    rows = ([p.n, p.p_analytic, p.p_montecarlo, p.stderr, p.p_small_angle] for p in points)
    header = ["N", "P_analytic", "P_montecarlo", "stderr", "P_small_angle"]
    _emit(_table(header, rows, settings.delimiter), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zeno", description="Drive/probe simulations of a single two-level ion."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "--log-level",
        default=None,
        help="Logging level for stderr diagnostics (default: $ZENO_LOG_LEVEL or WARNING)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, config: bool = True) -> None:
        if config:
            p.add_argument("--config", required=True, help="Experiment TOML file")
        p.add_argument("--seed", type=int, default=None, help="Override the master seed")
        p.add_argument("--out", default=None, help="Output file (default: stdout)")

    p = sub.add_parser("simulate", help="Generate trajectories")
    add_common(p)
    p.add_argument("--mode", choices=[m.value for m in Mode], default=None)
    p.add_argument("--workers", type=int, default=None, help="Worker threads")
    p.set_defaults(func=cmd_simulate)

    for name, forced in (("analyze", False), ("fit", True)):
        p = sub.add_parser(
            name,
            help="Run-length table" + (" and model fit" if forced else " of trajectory files"),
        )
        p.add_argument("files", nargs="+", help="Trajectory files")
        p.add_argument("--out", default=None, help="Output file (default: stdout)")
        if forced:
            p.set_defaults(func=cmd_analyze, fit=True)
        else:
            p.add_argument("--fit", action="store_true", help="Also fit the survival model")
            p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("spectrum", help="Excitation probability against detuning")
    add_common(p)
    p.add_argument("--min-hz", type=float, default=None, help="Lowest detuning")
    p.add_argument("--max-hz", type=float, default=None, help="Highest detuning")
    p.add_argument("--step-hz", type=float, default=20e3, help="Detuning step (default 20 kHz)")
    p.add_argument("--samples", type=int, default=10_000, help="Probes per point")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("scaling", help="Transition probability of a pulse split N ways")
    add_common(p, config=False)
    p.add_argument("--theta-total", type=float, default=math.pi, help="Total pulse area")
    p.add_argument("--n", type=int, nargs="+", default=DEFAULT_N_VALUES, help="Values of N")
    p.add_argument("--samples", type=int, default=10_000, help="Samples per N")
    p.set_defaults(func=cmd_scaling)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = ZenoSettings()
    except ValidationError as exc:
        message = exc.errors()[0]["msg"]
        print(f"error: invalid ZENO_* environment setting: {message}", file=sys.stderr)
        return EXIT_INPUT
    level = (args.log_level or settings.log_level).upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )
    logger.info("zeno %s", args.command)
    try:
        return args.func(args, settings)
    except ZenoConfigError as exc:
        where = f" ({exc.field})" if exc.field else ""
        print(f"error: config{where}: {exc.message}", file=sys.stderr)
        return EXIT_INPUT
    except (ZenoFormatError, ZenoValidationError) as exc:
        print(f"error: {exc.message}", file=sys.stderr)
        return EXIT_INPUT
    except (ZenoFitError, ZenoEstimatorError) as exc:
        print(f"error: {exc.message}", file=sys.stderr)
        return EXIT_FIT
    except ZenoError as exc:
        print(f"error: {exc.message}", file=sys.stderr)
        return EXIT_FAILURE
    except Exception as exc:
        logger.exception("Command failed")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
