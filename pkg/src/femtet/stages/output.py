"""Probes, error norms, VTK snapshots and operator dumps."""

from logging import getLogger
from pathlib import Path

import numpy as np

from ..assembly import write_coo, write_vector
from ..coeff_lang import CoefficientField
from ..exceptions import FemtetConfigError, FemtetIOError
from ..postprocess import build_eval_matrix, error_norms, locate_points, write_probe_csv, write_vtk
from ..results import Operators, Problem, ProbeResult
from ..solver import Solution
from .base import StagesBase


logger = getLogger(__name__)


class OutputStages(StagesBase):
    """Everything that happens after the solve."""

    def probe(self, problem: Problem, solution: Solution, points: np.ndarray) -> ProbeResult:
        """
        Evaluate u_h at arbitrary points.

        Raises:
            FemtetUnlocatedPointError: If a point lies outside the mesh
        """

        located = locate_points(problem.mesh, problem.geom, points)
        values = build_eval_matrix(problem.mesh, located).evaluate(solution)

        return ProbeResult(located=located, values=values)

    def compute_errors(self, problem: Problem, solution: Solution) -> tuple[float, float]:
        """
        L2 and H1-seminorm errors against output.errors.

        Raises:
            FemtetConfigError: If the configuration has no errors block
        """

        errors = problem.config.output.errors

        if errors is None:
            raise FemtetConfigError("output.errors (exact solution) is required for error norms")

        exact = CoefficientField.scalar(errors.exact)
        exact_grad = CoefficientField.vector(errors.exact_grad)
        t = solution.t if solution.t is not None else problem.t_start

        return error_norms(problem.mesh, problem.geom, solution, exact, exact_grad, t=t)

    def write_snapshots(self, problem: Problem, snapshots: list[Solution]) -> list[Path]:
        """One VTK file per snapshot using the output.vtk pattern ({step}, {t})."""

        pattern = problem.config.output.vtk

        if pattern is None:
            return []

        transient = problem.config.transient
        written = []

        for solution in snapshots:
            t = solution.t if solution.t is not None else 0.0
            step = round((t - transient.t_start) / transient.dt) if transient else 0
            written.append(write_vtk(problem.mesh, {"u": solution.u}, pattern.format(step=step, t=t)))

        return written

    def dump_operators(self, problem: Problem, operators: Operators) -> list[Path]:
        """Write S, M, A, R, C as 1-based COO text and b, t, d as vectors into output.dump_dir."""

        dump_dir = problem.config.output.dump_dir

        if dump_dir is None:
            return []

        directory = Path(dump_dir)

        try:
            directory.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise FemtetIOError(f"Cannot create dump directory: {directory.as_posix()}") from e

        C, d = operators.system
        written = []

        for name, matrix in (("S", operators.S), ("M", operators.M), ("A", operators.A), ("R", operators.R), ("C", C)):
            path = directory / f"{name}.coo"
            write_coo(matrix, path)
            written.append(path)

        for name, vector in (("b", operators.b), ("t", operators.t), ("d", d)):
            path = directory / f"{name}.vec"
            write_vector(vector, path)
            written.append(path)

        logger.info("Dumped operators to %s", directory.as_posix())

        return written

    def write_probes(self, problem: Problem, result: ProbeResult) -> Path | None:
        path = problem.config.output.probe_csv

        if path is None:
            return None

        file_path = Path(path)

        try:
            file_path.parent.mkdir(parents=True, exist_ok=True)

            with file_path.open("w", newline="", encoding="utf-8") as handle:
                write_probe_csv(result.located, result.values, handle)
        except OSError as e:
            raise FemtetIOError(f"Cannot write probe file: {file_path.as_posix()}") from e

        return file_path
