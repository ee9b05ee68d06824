"""Steady and transient solves."""

from logging import getLogger
from time import perf_counter

import numpy as np

from ..exceptions import FemtetConfigError
from ..results import Operators, Problem
from ..solver import Solution, crank_nicolson, dirichlet_values, solve_steady
from .base import StagesBase


logger = getLogger(__name__)


def nodal_tags(problem: Problem) -> np.ndarray:
    """Entity tag per node, taken from the first tetrahedron (in ttrh order) using it."""

    mesh = problem.mesh
    nodes, first = np.unique(mesh.ttrh.ravel(), return_index=True)
    tags = np.zeros(mesh.n_nodes, dtype=np.int64)
    tags[nodes] = mesh.domain[first // mesh.ttrh.shape[1]]

    return tags


class SolveStages(StagesBase):
    """Dirichlet elimination and the linear solves."""

    def solve_steady(self, problem: Problem, operators: Operators) -> Solution:
        """
        Solve the steady problem C u = d with Dirichlet elimination.

        Raises:
            FemtetSolverError: If the linear solve fails
        """

        started = perf_counter()
        C, d = operators.system
        values = dirichlet_values(problem.mesh, problem.bc, problem.fields.dirichlet, problem.t_start)
        solution = solve_steady(C, d, problem.bc, values, problem.config.solver)
        self._log_elapsed("Steady solve", started)
        logger.info("Solved: %d iterations, residual %.3e", solution.iterations, solution.residual)

        return solution

    def solve_transient(self, problem: Problem, operators: Operators) -> list[Solution]:
        """
        Crank-Nicolson from the initial condition to t_end.

        The load and Robin vectors are re-assembled per step only when f, g or flux depend on t.

        Raises:
            FemtetSolverError: If a step fails
        """

        transient = problem.config.transient
        fields = problem.fields
        mesh = problem.mesh

        if transient is None:
            raise FemtetConfigError("run configuration has no transient block")

        if fields.time_dependent_operator:
            logger.warning("Coefficients of the operator depend on t; they are frozen at t=%g", transient.t_start)

        started = perf_counter()
        C, d = operators.system
        capacity = self.assemble_capacity(problem)
        u0 = fields.initial.evaluate(mesh.coord, transient.t_start, nodal_tags(problem))

        def rhs_of_t(t: float) -> np.ndarray:
            if not fields.time_dependent_load:
                return d

            b, t_R = self.assemble_rhs(problem, t)
            return b + t_R

        def dirichlet_of_t(t: float) -> np.ndarray:
            return dirichlet_values(mesh, problem.bc, fields.dirichlet, t)

        snapshots = crank_nicolson(
            capacity,
            C,
            rhs_of_t,
            u0,
            transient.dt,
            transient.t_end,
            problem.bc,
            dirichlet_of_t,
            problem.config.solver,
            t_start=transient.t_start,
            snapshot_every=transient.snapshot_every,
        )
        self._log_elapsed("Time stepping", started)

        return snapshots

