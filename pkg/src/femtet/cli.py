"""Command line entry point: femtet solve | inspect | probe | convergence."""

import logging
import sys
from argparse import ArgumentParser, Namespace
from collections.abc import Sequence

from orjson import OPT_INDENT_2, dumps
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from .exceptions import FemtetConfigError, FemtetError
from .postprocess import read_points_csv, write_error_table, write_probe_csv
from .session import Femtet


EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def setup_logging(verbose: bool) -> None:
    """Route package logs to stderr through rich."""

    handler = RichHandler(console=Console(stderr=True), show_path=False, markup=False)
    logger = logging.getLogger("femtet")
    logger.handlers = [handler]
    logger.setLevel(logging.DEBUG if verbose else logging.WARNING)
    logger.propagate = False


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="femtet", description="P1-P4 finite elements on GMSH tetrahedral meshes")
    parser.add_argument(
        "--threads", type=int, default=None, help="assembly worker threads (default: FEMTET_THREADS or all cores)"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    solve = commands.add_parser("solve", help="run the pipeline described by a JSON config")
    solve.add_argument("config")
    solve.add_argument("--verbose", "-v", action="store_true")

    inspect = commands.add_parser("inspect", help="report mesh statistics")
    inspect.add_argument("mesh")
    inspect.add_argument("--degree", "-m", type=int, default=1)
    inspect.add_argument("--json", action="store_true", help="print the report as JSON")
    inspect.add_argument("--verbose", "-v", action="store_true")

    probe = commands.add_parser("probe", help="solve, then evaluate the solution at points from a CSV file")
    probe.add_argument("config")
    probe.add_argument("--points", required=True)
    probe.add_argument("--verbose", "-v", action="store_true")

    convergence = commands.add_parser("convergence", help="error table over a sequence of meshes")
    convergence.add_argument("config")
    convergence.add_argument("--meshes", nargs="+", required=True)
    convergence.add_argument("--verbose", "-v", action="store_true")

    return parser


def cmd_solve(args: Namespace, session: Femtet) -> int:
    result = session.run(args.config)
    solution = result.solution
    out = sys.stdout

    if result.is_transient:
        out.write(f"snapshots {len(result.snapshots)}, t_end {solution.t:.6g}\n")

    out.write(
        f"nodes {result.problem.mesh.n_nodes}, iterations {solution.iterations}, residual {solution.residual:.3e}, "
        f"min {solution.u.min():.6g}, max {solution.u.max():.6g}\n"
    )

    if result.errors is not None:
        out.write(f"L2 {result.errors[0]:.6e}, H1semi {result.errors[1]:.6e}\n")

    if result.probes is not None:
        write_probe_csv(result.probes.located, result.probes.values, out)

    for path in result.written:
        out.write(f"wrote {path.as_posix()}\n")

    return EXIT_OK


def cmd_inspect(args: Namespace, session: Femtet) -> int:
    report = session.inspect_mesh(args.mesh, args.degree)

    if args.json:
        sys.stdout.write(dumps(report.model_dump(), option=OPT_INDENT_2).decode() + "\n")
        return EXIT_OK

    console = Console(file=sys.stdout, soft_wrap=True)
    console.print(report.summary_line, markup=False, highlight=False)
    console.print(
        f"faces {report.n_faces} ({report.n_interior_faces} interior, {report.n_boundary_faces} boundary), "
        f"unmatched boundary triangles {report.unmatched_boundary_triangles}",
        markup=False,
        highlight=False,
    )

    groups = Table(title="Physical groups")

    for column in ("name", "dim", "tag", "entities", "elements"):
        groups.add_column(column)

    for group in report.groups:
        groups.add_row(group.name, str(group.dim), str(group.tag), str(group.entities), str(group.elements))

    console.print(groups)

    quality = Table(title="Quality (h / rho)")
    quality.add_column("h min")
    quality.add_column("h max")

    for name in report.chunkiness_percentiles:
        quality.add_column(name)

    quality.add_row(
        f"{report.h_min:.4g}",
        f"{report.h_max:.4g}",
        *(f"{value:.4g}" for value in report.chunkiness_percentiles.values()),
    )
    console.print(quality)

    return EXIT_OK


def cmd_probe(args: Namespace, session: Femtet) -> int:
    points = read_points_csv(args.points)
    result = session.run(args.config, write=False)
    probed = session.probe(result.problem, result.solution, points)
    write_probe_csv(probed.located, probed.values, sys.stdout)

    return EXIT_OK


def cmd_convergence(args: Namespace, session: Femtet) -> int:
    rows = session.convergence(args.config, args.meshes)
    write_error_table(rows, sys.stdout)

    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "inspect": cmd_inspect,
    "probe": cmd_probe,
    "convergence": cmd_convergence,
}


def main(argv: Sequence[str] | None = None) -> int:
    """
    Run the command line interface.

    Returns:
        0 on success, 1 for any femtet error, 2 for configuration or argument errors
    """

    parser = build_parser()

    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_CONFIG

    setup_logging(args.verbose)

    if args.threads is not None and args.threads < 1:
        sys.stderr.write("error: --threads must be positive\n")
        return EXIT_CONFIG

    try:
        with Femtet(threads=args.threads) as session:
            return COMMANDS[args.command](args, session)
    except FemtetConfigError as e:
        sys.stderr.write(f"error: {type(e).__name__}: {e.message}\n")
        return EXIT_CONFIG
    except FemtetError as e:
        sys.stderr.write(f"error: {type(e).__name__}: {e.message}\n")
        return EXIT_FAILURE
