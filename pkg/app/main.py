import argparse
import logging
import sys
import time
from pathlib import Path

from app import commands
from app.config import settings
from app.errors import NonConvergenceError, TruncationOverflowError
from app.utils.report import dump_report, sweep_csv

logger = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_NONCONVERGENCE = 3


def _shared_options() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("-v", "--verbose", action="count", default=0)
    shared.add_argument("--out", help="write the report here instead of stdout")
    shared.add_argument("--format", choices=["json", "csv"], default="json")
    shared.add_argument("--seed", type=int)
    shared.add_argument("--threads", type=int)
    return shared


def _wheel_options(parser: argparse.ArgumentParser, d_required: bool = False):
    parser.add_argument("--d", type=int, required=d_required)
    parser.add_argument("--k", type=int, required=True)
    parser.add_argument("--n", help="d x k derivative orders, rows separated by ';'")
    parser.add_argument("--sigma", type=float, default=1.0)
    parser.add_argument("--centers", help="k points separated by ';', coordinates by ','")
    parser.add_argument(
        "--edge-powers",
        dest="edge_powers",
        help="alpha,i,power triples separated by ';': multiply the Gaussian by prod (z^{alpha+1}_i - z^alpha_i)^power",
    )


def build_parser() -> argparse.ArgumentParser:
    shared = _shared_options()
    parser = argparse.ArgumentParser(prog="holoflow", description="One-loop holomorphic renormalization checks")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("vanish", parents=[shared], help="exact form-factor vanishing")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--mode", choices=["wheel", "anomaly"], default="wheel")
    p.set_defaults(handler=commands.cmd_vanish)

    p = sub.add_parser("weight", parents=[shared], help="one wheel weight")
    _wheel_options(p)
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--L", type=float, default=1.0)
    p.add_argument("--scheme", choices=["direct", "gaussian", "both"], default="gaussian")
    p.set_defaults(handler=commands.cmd_weight)

    p = sub.add_parser("sweep", parents=[shared], help="epsilon sweep of a wheel weight")
    _wheel_options(p)
    p.add_argument("--L", type=float, default=1.0)
    p.add_argument("--eps-grid", dest="eps_grid")
    p.add_argument("--scheme", choices=["direct", "gaussian"], default="gaussian")
    p.set_defaults(handler=commands.cmd_sweep)

    p = sub.add_parser("anomaly", parents=[shared], help="anomaly weight limit scan")
    _wheel_options(p)
    p.add_argument("--edge", type=int, help="distinguished edge, default k")
    p.add_argument("--eps-grid", dest="eps_grid", help="eps/L ratios")
    p.add_argument("--L-grid", dest="L_grid")
    p.add_argument("--record-golden", action="store_true")
    p.set_defaults(handler=commands.cmd_anomaly)

    p = sub.add_parser("bm", parents=[shared], help="Bochner-Martinelli kernel and its regulated approximant")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--z", required=True)
    p.add_argument("--w", required=True)
    p.set_defaults(handler=commands.cmd_bm)

    p = sub.add_parser("det", parents=[shared], help="Gaussian determinant identity")
    p.add_argument("--k", type=int)
    p.add_argument("--t", required=True)
    p.set_defaults(handler=commands.cmd_det)

    p = sub.add_parser("rg", parents=[shared], help="toy-model RG flow")
    p.add_argument("--N", type=int, default=1)
    p.add_argument("--parity", help="comma-separated 0/1 per coordinate, 1 for odd")
    p.add_argument("--interaction", required=True, help="hbar^0 part in x1..xN")
    p.add_argument("--hbar-part", dest="hbar_part")
    p.add_argument("--P", required=True)
    p.add_argument("--P2")
    p.add_argument("--max-weight", dest="max_weight", type=int, default=4)
    p.set_defaults(handler=commands.cmd_rg)

    p = sub.add_parser("green", parents=[shared], help="Green's equation pairing")
    p.add_argument("--d", type=int, choices=[1, 2], required=True)
    p.add_argument("--center")
    p.add_argument("--sigma", type=float, default=1.0)
    p.set_defaults(handler=commands.cmd_green)

    p = sub.add_parser("bound", parents=[shared], help="AM-GM t-integral bound")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--eps", type=float, default=1e-2)
    p.add_argument("--L", type=float, default=1.0)
    p.set_defaults(handler=commands.cmd_bound)

    p = sub.add_parser("ibp", parents=[shared], help="integration-by-parts identity")
    _wheel_options(p)
    p.add_argument("--t", required=True)
    p.add_argument("--w", required=True, help="k-1 points separated by ';'")
    p.set_defaults(handler=commands.cmd_ibp)

    return parser


def _render(args: argparse.Namespace, report) -> str:
    if args.format == "json":
        return dump_report(report)
    if "sweep" in report.results:
        return sweep_csv([report.results["sweep"]])
    if "scan" in report.results:
        return sweep_csv(report.results["scan"].inner)
    raise commands.UsageError(f"--format csv is only available for sweep and anomaly scans, not {args.command}")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.seed is not None:
        settings.seed = args.seed
    if args.threads is not None:
        settings.threads = args.threads

    start = time.perf_counter()
    try:
        report = args.handler(args)
        if settings.report_timing:
            report.wall_time = time.perf_counter() - start
        text = _render(args, report)
    except NonConvergenceError as exc:
        logger.error("Numerical non-convergence: %s (estimate=%r, error=%r)", exc, exc.estimate, exc.error)
        return EXIT_NONCONVERGENCE
    except (ValueError, TruncationOverflowError) as exc:
        logger.error("Usage error: %s", exc)
        return EXIT_USAGE

    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")

    if report.results.get("inconclusive"):
        return EXIT_NONCONVERGENCE
    return EXIT_PASS if report.passed else EXIT_FAIL


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
