"""Global operator assembly for a prepared problem."""

from time import perf_counter

import numpy as np
from scipy import sparse

from ..assembly import (
    assemble_advection,
    assemble_boundary_mass,
    assemble_load,
    assemble_mass,
    assemble_robin_vector,
    assemble_stiffness,
)
from ..results import Operators, Problem
from .base import StagesBase


class AssembleStages(StagesBase):
    """Builds S, M, A, R, b and t from a Problem."""

    def assemble(self, problem: Problem, t: float | None = None) -> Operators:
        """
        Assemble every operator at time t (default: the start time).

        Raises:
            FemtetNonFiniteValueError: If a coefficient is not finite at a quadrature point
        """

        started = perf_counter()
        t = problem.t_start if t is None else t
        mesh, geom, fields = problem.mesh, problem.geom, problem.fields
        rule, rule_2d = problem.volume_rule, problem.boundary_rule
        executor = self._executor()

        b, t_R = self.assemble_rhs(problem, t)
        operators = Operators(
            S=assemble_stiffness(mesh, geom, fields.kappa, rule, t, executor),
            M=assemble_mass(mesh, geom, fields.c, rule, t, executor),
            A=assemble_advection(mesh, geom, fields.beta, rule, t, executor),
            R=assemble_boundary_mass(mesh, geom, fields.alpha, problem.robin_rows, rule_2d, t),
            b=b,
            t=t_R,
        )
        self._log_elapsed("Assembly", started)

        return operators

    def assemble_rhs(self, problem: Problem, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Load vector b_f and Robin vector t_R at time t."""

        mesh, geom, fields = problem.mesh, problem.geom, problem.fields
        b = assemble_load(mesh, geom, fields.f, problem.volume_rule, t, self._executor())
        t_R = assemble_robin_vector(
            mesh,
            geom,
            fields.g,
            problem.robin_rows,
            problem.boundary_rule,
            t,
            flux=fields.flux,
            normals=problem.normals,
        )

        return b, t_R

    def assemble_capacity(self, problem: Problem) -> sparse.csr_matrix:
        """Mass matrix with the rho c_p coefficient of the transient term."""

        if problem.fields.rho_cp is None:
            return sparse.csr_matrix((problem.mesh.n_nodes, problem.mesh.n_nodes))

        return assemble_mass(
            problem.mesh, problem.geom, problem.fields.rho_cp, problem.volume_rule, problem.t_start, self._executor()
        )
