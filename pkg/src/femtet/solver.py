"""Dirichlet elimination, linear solvers and Crank-Nicolson time stepping."""

from collections.abc import Callable
from logging import getLogger
from math import ceil
from time import perf_counter
from typing import Literal

import numpy as np
from humanize import intcomma, precisedelta
from pydantic import BaseModel, ConfigDict, Field
from scipy import linalg, sparse
from scipy.sparse import linalg as splinalg

from .coeff_lang import CoefficientField
from .config import Config
from .exceptions import (
    FemtetBreakdownError,
    FemtetDenseLimitError,
    FemtetNoConvergenceError,
    FemtetNonFiniteValueError,
    FemtetShapeMismatchError,
    FemtetSingularSystemError,
    FemtetSolverError,
)
from .mesh_model import BoundaryClassification
from .msh_reader import Mesh


logger = getLogger(__name__)

SolverMethod = Literal["auto", "cg", "bicgstab", "dense", "direct"]


class SolverConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    method: SolverMethod = Config.DEFAULT_SOLVER_METHOD
    tol: float = Field(default=Config.DEFAULT_TOL, gt=0.0, lt=1.0)
    max_iter: int = Field(default=Config.DEFAULT_MAX_ITER, ge=1)
    preconditioner: Literal["none", "jacobi"] = Config.DEFAULT_PRECONDITIONER


class Solution(BaseModel):
    """Nodal values with Dirichlet entries equal to the prescribed data."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    u: np.ndarray
    iterations: int
    residual: float
    t: float | None = None


def is_symmetric(C: sparse.spmatrix, tol: float = Config.SYMMETRY_TOL) -> bool:
    """max |C - C^T| <= tol * max |C|."""

    C = sparse.csr_matrix(C)

    if C.nnz == 0:
        return True

    scale = abs(C).max()
    skew = abs(C - C.T)

    return bool(skew.nnz == 0 or skew.max() <= tol * scale)


def dirichlet_values(mesh: Mesh, bc: BoundaryClassification, uD: CoefficientField, t: float = 0.0) -> np.ndarray:
    """
    u_D at the Dirichlet nodes, in the order of bc.iD.

    A node shared by several Dirichlet triangles takes the tag of the first one in trB order.
    """

    if not bc.iD.size:
        return np.empty(0)

    rows = np.flatnonzero(bc.gammaD)
    nodes = mesh.trB[rows].ravel()
    tags = np.repeat(mesh.domBd[rows], mesh.trB.shape[1])
    unique, first = np.unique(nodes, return_index=True)

    if not np.array_equal(unique, bc.iD):
        raise FemtetShapeMismatchError("Dirichlet nodes do not match the boundary classification")

    return uD.evaluate(mesh.coord[unique], t, tags[first])


def _jacobi(A: sparse.csr_matrix) -> sparse.dia_matrix:
    diagonal = A.diagonal()
    safe = np.where(diagonal != 0.0, diagonal, 1.0)

    return sparse.diags(1.0 / safe)


def _residual(A: sparse.spmatrix | np.ndarray, x: np.ndarray, rhs: np.ndarray) -> float:
    return float(np.linalg.norm(rhs - A @ x))


def _krylov(
    kind: Literal["cg", "bicgstab"],
    A: sparse.csr_matrix,
    rhs: np.ndarray,
    cfg: SolverConfig,
    x0: np.ndarray | None,
    preconditioner: sparse.spmatrix | None,
) -> tuple[np.ndarray, int, float]:
    iterations = 0

    def count(_: np.ndarray) -> None:
        nonlocal iterations
        iterations += 1

    method = splinalg.cg if kind == "cg" else splinalg.bicgstab

    if not np.any(rhs):
        return np.zeros_like(rhs), 0, 0.0

    x, info = method(A, rhs, x0=x0, rtol=cfg.tol, atol=0.0, maxiter=cfg.max_iter, M=preconditioner, callback=count)
    residual = _residual(A, x, rhs)
    logger.debug("%s: %s iterations, residual %.3e", kind, intcomma(iterations), residual)

    if info > 0:
        raise FemtetNoConvergenceError(
            f"{kind} did not converge in {cfg.max_iter} iterations (residual {residual:.3e})",
            details={"iterations": iterations, "residual": residual},
        )

    if info < 0 or not np.all(np.isfinite(x)):
        raise FemtetBreakdownError(f"{kind} broke down after {iterations} iterations", details={"info": int(info)})

    return x, iterations, residual


def cg_solve(
    C: sparse.spmatrix, rhs: np.ndarray, cfg: SolverConfig, x0: np.ndarray | None = None
) -> tuple[np.ndarray, int, float]:
    """
    Preconditioned conjugate gradients.

    C must be symmetric positive definite; other matrices are not supported.

    Raises:
        FemtetNoConvergenceError: If max_iter is exhausted
    """

    A = sparse.csr_matrix(C)
    preconditioner = _jacobi(A) if cfg.preconditioner == "jacobi" else None

    return _krylov("cg", A, np.asarray(rhs, dtype=float), cfg, x0, preconditioner)


def bicgstab_solve(
    C: sparse.spmatrix, rhs: np.ndarray, cfg: SolverConfig, x0: np.ndarray | None = None
) -> tuple[np.ndarray, int, float]:
    """
    Preconditioned BiCGSTAB for nonsymmetric systems.

    Raises:
        FemtetNoConvergenceError: If max_iter is exhausted
        FemtetBreakdownError: If the iteration breaks down
    """

    A = sparse.csr_matrix(C)
    preconditioner = _jacobi(A) if cfg.preconditioner == "jacobi" else None

    return _krylov("bicgstab", A, np.asarray(rhs, dtype=float), cfg, x0, preconditioner)


class ReducedSolver:
    """Solver bound to one reduced matrix; factorisations and preconditioners are built once."""

    def __init__(self, A: sparse.spmatrix, cfg: SolverConfig) -> None:
        self.A = sparse.csr_matrix(A)
        self.cfg = cfg
        self.method = self._resolve_method()
        self._preconditioner = None
        self._factor = None

        n = self.A.shape[0]

        if n == 0:
            return

        if self.method in ("cg", "bicgstab") and cfg.preconditioner == "jacobi":
            self._preconditioner = _jacobi(self.A)
        elif self.method == "dense":
            self._factor = self._dense_factor()
        elif self.method == "direct":
            try:
                self._factor = splinalg.splu(self.A.tocsc())
            except RuntimeError as e:
                raise FemtetSingularSystemError(f"sparse LU failed: {e}") from e

        logger.debug("Reduced system: %s unknowns, %s nonzeros, method %s", intcomma(n), intcomma(self.A.nnz), self.method)

    def _resolve_method(self) -> str:
        if self.cfg.method != "auto":
            return self.cfg.method

        return "cg" if is_symmetric(self.A) else "bicgstab"

    def _dense_factor(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.A.shape[0]

        if n > Config.DENSE_MAX_NODES:
            raise FemtetDenseLimitError(
                f"dense solve limited to {Config.DENSE_MAX_NODES} unknowns, got {n}",
                details={"unknowns": n},
            )

        dense = self.A.toarray()

        try:
            condition = np.linalg.cond(dense, 1)
        except np.linalg.LinAlgError:
            condition = np.inf

        if not np.isfinite(condition) or condition * np.finfo(float).eps >= 1.0:
            raise FemtetSingularSystemError(f"reduced system is singular (condition estimate {condition:.3e})")

        return linalg.lu_factor(dense)

    def solve(self, rhs: np.ndarray, x0: np.ndarray | None = None) -> tuple[np.ndarray, int, float]:
        rhs = np.asarray(rhs, dtype=float)

        if rhs.shape != (self.A.shape[0],):
            raise FemtetShapeMismatchError(f"right-hand side has shape {rhs.shape}, expected {(self.A.shape[0],)}")

        if not rhs.size:
            return rhs.copy(), 0, 0.0

        if self.method in ("cg", "bicgstab"):
            return _krylov(self.method, self.A, rhs, self.cfg, x0, self._preconditioner)

        if self.method == "dense":
            x = linalg.lu_solve(self._factor, rhs)
        else:
            x = self._factor.solve(rhs)

        if not np.all(np.isfinite(x)):
            raise FemtetSingularSystemError(f"{self.method} solve produced non-finite values")

        return x, 1, _residual(self.A, x, rhs)


def _partition(C: sparse.spmatrix, bc: BoundaryClassification) -> tuple[sparse.csr_matrix, sparse.csr_matrix]:
    rows = sparse.csr_matrix(C)[bc.inD]

    return rows[:, bc.inD].tocsr(), rows[:, bc.iD].tocsr()


def _check_square(C: sparse.spmatrix, d: np.ndarray, bc: BoundaryClassification) -> int:
    n = C.shape[0]

    if C.shape != (n, n) or np.shape(d) != (n,):
        raise FemtetShapeMismatchError(f"system shapes disagree: C {C.shape}, d {np.shape(d)}")

    if bc.iD.size + bc.inD.size != n:
        raise FemtetShapeMismatchError(f"boundary classification covers {bc.iD.size + bc.inD.size} of {n} nodes")

    return n


def solve_steady(
    C: sparse.spmatrix,
    d: np.ndarray,
    bc: BoundaryClassification,
    dirichlet: np.ndarray,
    cfg: SolverConfig,
) -> Solution:
    """
    Solve C u = d with u[iD] = dirichlet by elimination.

    Args:
        C: Combined system matrix
        d: Combined right-hand side
        bc: Boundary classification giving iD and inD
        dirichlet: Values at bc.iD, see dirichlet_values()
        cfg: Solver settings

    Raises:
        FemtetNoConvergenceError: If an iterative method does not converge
        FemtetSingularSystemError: If a factorisation detects singularity
        FemtetNonFiniteValueError: If the data is not finite
    """

    started = perf_counter()
    n = _check_square(C, d, bc)
    dirichlet = np.asarray(dirichlet, dtype=float)

    if dirichlet.shape != bc.iD.shape:
        raise FemtetShapeMismatchError(f"{dirichlet.size} Dirichlet values for {bc.iD.size} nodes")

    if not (np.all(np.isfinite(d)) and np.all(np.isfinite(dirichlet))):
        raise FemtetNonFiniteValueError("system right-hand side or Dirichlet data is not finite")

    Cii, Cid = _partition(C, bc)
    rhs = np.asarray(d, dtype=float)[bc.inD] - Cid @ dirichlet
    x, iterations, residual = ReducedSolver(Cii, cfg).solve(rhs)

    u = np.empty(n)
    u[bc.iD] = dirichlet
    u[bc.inD] = x
    logger.debug("Steady solve finished in %s", precisedelta(perf_counter() - started, minimum_unit="milliseconds"))

    return Solution(u=u, iterations=iterations, residual=residual)


def crank_nicolson(
    M: sparse.spmatrix,
    C: sparse.spmatrix,
    rhs_of_t: Callable[[float], np.ndarray],
    u0: np.ndarray,
    tau: float,
    t_end: float,
    bc: BoundaryClassification,
    dirichlet_of_t: Callable[[float], np.ndarray],
    cfg: SolverConfig,
    t_start: float = 0.0,
    snapshot_every: int = 1,
) -> list[Solution]:
    """
    Crank-Nicolson steps (M/tau + C/2) u^{n+1} = (M/tau - C/2) u^n + (d^{n+1} + d^n) / 2.

    Dirichlet data is imposed at t_{n+1} in every step. The reduced left-hand
    matrix is prepared once (factorisation or preconditioner) and reused.

    Args:
        M: Capacity mass matrix (coefficient rho c_p)
        C: Combined steady operator
        rhs_of_t: d(t)
        u0: Initial nodal values at t_start
        tau: Time step
        t_end: Final time; ceil((t_end - t_start) / tau) steps are taken
        bc: Boundary classification
        dirichlet_of_t: Values at bc.iD for a given time
        cfg: Solver settings
        t_start: Initial time
        snapshot_every: Keep every k-th step; the first and last are always kept

    Returns:
        Snapshots, starting with the initial state

    Raises:
        FemtetSolverError: If tau or snapshot_every is not positive, or a step fails
    """

    if not tau > 0.0:
        raise FemtetSolverError(f"time step must be positive, got {tau}")

    if snapshot_every < 1:
        raise FemtetSolverError(f"snapshot_every must be at least 1, got {snapshot_every}")

    u = np.asarray(u0, dtype=float).copy()
    n = _check_square(C, u, bc)

    if M.shape != C.shape:
        raise FemtetShapeMismatchError(f"mass matrix shape {M.shape} differs from {C.shape}")

    started = perf_counter()
    steps = max(0, ceil((t_end - t_start) / tau - 1e-9))
    M = sparse.csr_matrix(M)
    C = sparse.csr_matrix(C)
    lhs = (M / tau + 0.5 * C).tocsr()
    rhs_matrix = (M / tau - 0.5 * C).tocsr()
    Lii, Lid = _partition(lhs, bc)
    solver = ReducedSolver(Lii, cfg)

    snapshots = [Solution(u=u.copy(), iterations=0, residual=0.0, t=t_start)]
    d_old = np.asarray(rhs_of_t(t_start), dtype=float)

    for k in range(1, steps + 1):
        t_new = t_start + k * tau
        d_new = np.asarray(rhs_of_t(t_new), dtype=float)
        values = np.asarray(dirichlet_of_t(t_new), dtype=float)
        full = rhs_matrix @ u + 0.5 * (d_new + d_old)
        rhs = full[bc.inD] - Lid @ values

        x, iterations, residual = solver.solve(rhs, x0=u[bc.inD])

        u = np.empty(n)
        u[bc.iD] = values
        u[bc.inD] = x
        d_old = d_new

        if k % snapshot_every == 0 or k == steps:
            snapshots.append(Solution(u=u.copy(), iterations=iterations, residual=residual, t=t_new))

        logger.debug("Step %d/%d at t=%.6g: %d iterations, residual %.3e", k, steps, t_new, iterations, residual)

    logger.info(
        "Crank-Nicolson: %s steps in %s",
        intcomma(steps),
        precisedelta(perf_counter() - started, minimum_unit="milliseconds"),
    )

    return snapshots
