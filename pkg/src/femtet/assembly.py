"""Element-by-element assembly of the global operators."""

from collections.abc import Callable, Iterable
from concurrent.futures import Executor
from logging import getLogger
from os import PathLike
from pathlib import Path
from time import perf_counter
from typing import TypeVar

import numpy as np
from humanize import intcomma, precisedelta
from pydantic import BaseModel, ConfigDict
from scipy import sparse

from .coeff_lang import CoefficientField
from .config import Config
from .exceptions import FemtetIOError, FemtetShapeMismatchError
from .mesh_model import GeometryCache
from .msh_reader import Mesh
from .quadrature import QuadratureRule, simplex_rule
from .ref_element import get_reference_element, tabulate


logger = getLogger(__name__)

T = TypeVar("T")


class Triplets(BaseModel):
    """Coordinate-format contributions; duplicates are summed on conversion."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray

    def model_post_init(self, __context: object) -> None:
        if not len(self.rows) == len(self.cols) == len(self.vals):
            raise FemtetShapeMismatchError(
                f"triplet lengths differ: {len(self.rows)}, {len(self.cols)}, {len(self.vals)}"
            )

    @classmethod
    def from_local(cls, connectivity: np.ndarray, local: np.ndarray) -> "Triplets":
        """Scatter local matrices (E, dof, dof) through element connectivity (E, dof)."""

        dof = connectivity.shape[1]
        rows = np.repeat(connectivity, dof, axis=1).ravel()
        cols = np.tile(connectivity, (1, dof)).ravel()

        return cls(rows=rows, cols=cols, vals=local.ravel())

    @classmethod
    def concat(cls, parts: Iterable["Triplets"]) -> "Triplets":
        parts = list(parts)

        if not parts:
            empty = np.empty(0, dtype=np.int64)
            return cls(rows=empty, cols=empty, vals=np.empty(0))

        return cls(
            rows=np.concatenate([p.rows for p in parts]),
            cols=np.concatenate([p.cols for p in parts]),
            vals=np.concatenate([p.vals for p in parts]),
        )

    def to_csr(self, n: int) -> sparse.csr_matrix:
        if len(self.rows) and (self.rows.max() >= n or self.cols.max() >= n or min(self.rows.min(), self.cols.min()) < 0):
            raise FemtetShapeMismatchError(f"triplet index outside a {n} x {n} matrix")

        order = np.lexsort((self.cols, self.rows))
        matrix = sparse.coo_matrix((self.vals[order], (self.rows[order], self.cols[order])), shape=(n, n)).tocsr()
        matrix.sort_indices()

        return matrix


def default_rule(cell_kind: str, m: int) -> QuadratureRule:
    """Rule of exactness 2m, enough for every operator with constant coefficients."""

    return simplex_rule(cell_kind, 2 * m)


def _chunks(n: int) -> list[tuple[int, int]]:
    step = Config.ASSEMBLY_CHUNK

    return [(start, min(start + step, n)) for start in range(0, n, step)]


def _map_chunks(n: int, work: Callable[[tuple[int, int]], T], executor: Executor | None) -> list[T]:
    """Apply work to consecutive element ranges; results keep element order."""

    ranges = _chunks(n)

    if executor is not None and len(ranges) > 1:
        return list(executor.map(work, ranges))

    return [work(r) for r in ranges]


def _mapped_points(mesh: Mesh, rows: np.ndarray, connectivity: np.ndarray, rule: QuadratureRule) -> np.ndarray:
    vertices = mesh.coord[connectivity[rows, : rule.points.shape[1]]]

    return np.einsum("qi,eid->eqd", rule.points, vertices)


def _evaluate(field: CoefficientField, points: np.ndarray, tags: np.ndarray, t: float) -> np.ndarray:
    e, q = points.shape[:2]
    values = field.evaluate(points.reshape(-1, 3), t, np.repeat(tags, q))

    return values.reshape(e, q, *values.shape[1:])


def _empty(n: int) -> sparse.csr_matrix:
    return sparse.csr_matrix((n, n))


def _timed(name: str, started: float, count: int) -> None:
    elapsed = precisedelta(perf_counter() - started, minimum_unit="microseconds")
    logger.debug("Assembled %s over %s elements in %s", name, intcomma(count), elapsed)


def assemble_load(
    mesh: Mesh,
    geom: GeometryCache,
    f: CoefficientField,
    rule: QuadratureRule,
    t: float = 0.0,
    executor: Executor | None = None,
) -> np.ndarray:
    """
    Load vector b_f: integrals of f against every shape function.

    Args:
        mesh: Mesh of degree m
        geom: Geometry of the mesh
        f: Scalar source field
        rule: Tetrahedron quadrature rule
        t: Time at which f is evaluated
        executor: Optional pool running element chunks, serial without one

    Raises:
        FemtetNonFiniteValueError: If f is not finite at a quadrature point
    """

    started = perf_counter()
    n = mesh.n_nodes

    if f.is_zero:
        return np.zeros(n)

    values, _ = tabulate(get_reference_element("tetrahedron", mesh.degree), rule)

    def work(bounds: tuple[int, int]) -> np.ndarray:
        rows = np.arange(*bounds)
        fq = _evaluate(f, _mapped_points(mesh, rows, mesh.ttrh, rule), mesh.domain[rows], t)
        local = np.einsum("eq,q,qr->er", fq, rule.weights, values)
        return local * (geom.detBk[rows] / 6.0)[:, None]

    local = np.concatenate(_map_chunks(mesh.n_ttrh, work, executor))
    b = np.bincount(mesh.ttrh.ravel(), weights=local.ravel(), minlength=n)
    _timed("load vector", started, mesh.n_ttrh)

    return b


def assemble_robin_vector(
    mesh: Mesh,
    geom: GeometryCache,
    gR: CoefficientField,
    robin_rows: np.ndarray,
    rule_2d: QuadratureRule,
    t: float = 0.0,
    flux: CoefficientField | None = None,
    normals: np.ndarray | None = None,
) -> np.ndarray:
    """
    Robin vector t_R over the selected boundary triangles.

    Args:
        mesh: Mesh of degree m
        geom: Geometry of the mesh
        gR: Scalar Robin data
        robin_rows: 0-based trB rows on the Robin boundary
        rule_2d: Triangle quadrature rule
        t: Time at which the data is evaluated
        flux: Optional vector field; flux . n is added to gR
        normals: Outward unit normals per trB row, required with flux

    Note:
        The 1/2 reference-triangle measure is applied here, |l1 x l2| comes from geom.bd_area2.
    """

    started = perf_counter()
    n = mesh.n_nodes
    robin_rows = np.asarray(robin_rows, dtype=np.int64)

    if not robin_rows.size or (gR.is_zero and (flux is None or flux.is_zero)):
        return np.zeros(n)

    values, _ = tabulate(get_reference_element("triangle", mesh.degree), rule_2d)
    points = _mapped_points(mesh, robin_rows, mesh.trB, rule_2d)
    tags = mesh.domBd[robin_rows]
    gq = _evaluate(gR, points, tags, t)

    if flux is not None and not flux.is_zero:
        if normals is None:
            raise FemtetShapeMismatchError("Robin flux data needs outward normals")

        gq = gq + np.einsum("eqd,ed->eq", _evaluate(flux, points, tags, t), normals[robin_rows])

    local = np.einsum("eq,q,qr->er", gq, rule_2d.weights, values) * (geom.bd_area2[robin_rows] / 2.0)[:, None]
    vector = np.bincount(mesh.trB[robin_rows].ravel(), weights=local.ravel(), minlength=n)
    _timed("Robin vector", started, robin_rows.size)

    return vector


def assemble_mass(
    mesh: Mesh,
    geom: GeometryCache,
    c: CoefficientField,
    rule: QuadratureRule,
    t: float = 0.0,
    executor: Executor | None = None,
) -> sparse.csr_matrix:
    """
    Mass matrix M_c with a scalar reaction (or capacity) coefficient.

    Raises:
        FemtetNonFiniteValueError: If c is not finite at a quadrature point
    """

    started = perf_counter()

    if c.is_zero:
        return _empty(mesh.n_nodes)

    values, _ = tabulate(get_reference_element("tetrahedron", mesh.degree), rule)

    def work(bounds: tuple[int, int]) -> Triplets:
        rows = np.arange(*bounds)
        cq = _evaluate(c, _mapped_points(mesh, rows, mesh.ttrh, rule), mesh.domain[rows], t)
        local = np.einsum("eq,q,qr,qs->ers", cq, rule.weights, values, values)
        return Triplets.from_local(mesh.ttrh[rows], local * (geom.detBk[rows] / 6.0)[:, None, None])

    matrix = Triplets.concat(_map_chunks(mesh.n_ttrh, work, executor)).to_csr(mesh.n_nodes)
    _timed("mass matrix", started, mesh.n_ttrh)

    return matrix


def assemble_boundary_mass(
    mesh: Mesh,
    geom: GeometryCache,
    alpha: CoefficientField,
    robin_rows: np.ndarray,
    rule_2d: QuadratureRule,
    t: float = 0.0,
) -> sparse.csr_matrix:
    """Robin matrix R_alpha over the selected boundary triangles."""

    started = perf_counter()
    robin_rows = np.asarray(robin_rows, dtype=np.int64)

    if not robin_rows.size or alpha.is_zero:
        return _empty(mesh.n_nodes)

    values, _ = tabulate(get_reference_element("triangle", mesh.degree), rule_2d)
    aq = _evaluate(alpha, _mapped_points(mesh, robin_rows, mesh.trB, rule_2d), mesh.domBd[robin_rows], t)
    local = np.einsum("eq,q,qr,qs->ers", aq, rule_2d.weights, values, values)
    local *= (geom.bd_area2[robin_rows] / 2.0)[:, None, None]
    matrix = Triplets.from_local(mesh.trB[robin_rows], local).to_csr(mesh.n_nodes)
    _timed("Robin matrix", started, robin_rows.size)

    return matrix


def assemble_stiffness(
    mesh: Mesh,
    geom: GeometryCache,
    kappa: CoefficientField,
    rule: QuadratureRule,
    t: float = 0.0,
    executor: Executor | None = None,
) -> sparse.csr_matrix:
    """
    Stiffness matrix S_kappa for a 3x3 diffusion field.

    Per element and quadrature point the transformed coefficient
    kappa_hat = det B_K B_K^-1 kappa B_K^-T is contracted with reference gradients,
    so only the 1/6 reference measure remains.

    Raises:
        FemtetNonFiniteValueError: If kappa is not finite at a quadrature point
    """

    started = perf_counter()

    if kappa.is_zero:
        return _empty(mesh.n_nodes)

    _, grads = tabulate(get_reference_element("tetrahedron", mesh.degree), rule)
    binv = geom.binv

    def work(bounds: tuple[int, int]) -> Triplets:
        rows = np.arange(*bounds)
        kq = _evaluate(kappa, _mapped_points(mesh, rows, mesh.ttrh, rule), mesh.domain[rows], t)
        b = binv[rows]
        kappa_hat = np.einsum("eij,eqjk,elk->eqil", b, kq, b) * geom.detBk[rows][:, None, None, None]
        local = np.einsum("q,eqkl,qrk,qsl->ers", rule.weights, kappa_hat, grads, grads, optimize=True) / 6.0
        return Triplets.from_local(mesh.ttrh[rows], local)

    matrix = Triplets.concat(_map_chunks(mesh.n_ttrh, work, executor)).to_csr(mesh.n_nodes)
    _timed("stiffness matrix", started, mesh.n_ttrh)

    return matrix


def assemble_advection(
    mesh: Mesh,
    geom: GeometryCache,
    beta: CoefficientField,
    rule: QuadratureRule,
    t: float = 0.0,
    executor: Executor | None = None,
) -> sparse.csr_matrix:
    """
    Advection matrix A_beta; row r is the test function, column s the trial function.

    Raises:
        FemtetNonFiniteValueError: If beta is not finite at a quadrature point
    """

    started = perf_counter()

    if beta.is_zero:
        return _empty(mesh.n_nodes)

    values, grads = tabulate(get_reference_element("tetrahedron", mesh.degree), rule)
    binv = geom.binv

    def work(bounds: tuple[int, int]) -> Triplets:
        rows = np.arange(*bounds)
        bq = _evaluate(beta, _mapped_points(mesh, rows, mesh.ttrh, rule), mesh.domain[rows], t)
        beta_hat = np.einsum("eij,eqj->eqi", binv[rows], bq)
        local = np.einsum("q,qr,qsk,eqk->ers", rule.weights, values, grads, beta_hat, optimize=True)
        return Triplets.from_local(mesh.ttrh[rows], local * (geom.detBk[rows] / 6.0)[:, None, None])

    matrix = Triplets.concat(_map_chunks(mesh.n_ttrh, work, executor)).to_csr(mesh.n_nodes)
    _timed("advection matrix", started, mesh.n_ttrh)

    return matrix


def combine_system(
    S: sparse.spmatrix,
    R: sparse.spmatrix,
    A: sparse.spmatrix,
    M: sparse.spmatrix,
    b: np.ndarray,
    t: np.ndarray,
) -> tuple[sparse.csr_matrix, np.ndarray]:
    """
    C = S + R + A + M and d = b + t.

    Raises:
        FemtetShapeMismatchError: If any operand disagrees in size
    """

    n = S.shape[0]

    for name, matrix in (("S", S), ("R", R), ("A", A), ("M", M)):
        if matrix.shape != (n, n):
            raise FemtetShapeMismatchError(f"{name} has shape {matrix.shape}, expected {(n, n)}")

    for name, vector in (("b", b), ("t", t)):
        if np.shape(vector) != (n,):
            raise FemtetShapeMismatchError(f"{name} has shape {np.shape(vector)}, expected {(n,)}")

    C = (sparse.csr_matrix(S) + R + A + M).tocsr()
    C.sort_indices()

    return C, np.asarray(b, dtype=float) + np.asarray(t, dtype=float)


def write_coo(matrix: sparse.spmatrix, path: str | PathLike) -> None:
    """
    Write a matrix as `row col value` lines with 1-based indices, sorted by (row, col).

    Raises:
        FemtetIOError: If the file cannot be written
    """

    coo = sparse.csr_matrix(matrix).tocoo()
    order = np.lexsort((coo.col, coo.row))
    lines = [f"{r + 1} {c + 1} {v:.17g}\n" for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order])]

    try:
        Path(path).write_text("".join(lines), encoding="ascii")
    except OSError as e:
        raise FemtetIOError(f"Cannot write matrix dump: {Path(path).as_posix()}") from e


def write_vector(vector: np.ndarray, path: str | PathLike) -> None:
    """
    Write a vector as `index value` lines with 1-based indices.

    Raises:
        FemtetIOError: If the file cannot be written
    """

    lines = [f"{i + 1} {v:.17g}\n" for i, v in enumerate(np.asarray(vector, dtype=float))]

    try:
        Path(path).write_text("".join(lines), encoding="ascii")
    except OSError as e:
        raise FemtetIOError(f"Cannot write vector dump: {Path(path).as_posix()}") from e
