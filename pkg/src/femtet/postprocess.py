"""Point location, solution evaluation, error norms and result export."""

import csv
from logging import getLogger
from math import log
from os import PathLike
from pathlib import Path
from typing import TextIO

import numpy as np
from humanize import naturalsize
from pydantic import BaseModel, ConfigDict
from scipy import sparse

from .coeff_lang import CoefficientField
from .config import Config
from .exceptions import FemtetIOError, FemtetShapeMismatchError, FemtetUnlocatedPointError
from .mesh_model import GeometryCache
from .msh_reader import Mesh
from .quadrature import QuadratureRule, simplex_rule
from .ref_element import get_reference_element, tabulate
from .solver import Solution


logger = getLogger(__name__)

NOT_FOUND = -1
ERROR_TABLE_HEADER = ("level", "h", "nNodes", "L2", "H1semi", "rate_L2", "rate_H1")
PROBE_HEADER = ("x", "y", "z", "element", "value")

# points x elements evaluated at once by the brute-force scan
_SCAN_BLOCK = 2_000_000


class LocatedPoints(BaseModel):
    """Containing element (0-based, NOT_FOUND if none) and barycentric coordinates per point."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    points: np.ndarray
    element: np.ndarray
    lambdas: np.ndarray

    @property
    def found(self) -> np.ndarray:
        return self.element != NOT_FOUND

    @property
    def all_found(self) -> bool:
        return bool(self.found.all())


class EvalMatrix(BaseModel):
    """Sparse map from nodal values to values at located points."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    matrix: sparse.csr_matrix
    element: np.ndarray
    lambdas: np.ndarray

    def evaluate(self, u: np.ndarray | Solution) -> np.ndarray:
        values = u.u if isinstance(u, Solution) else np.asarray(u, dtype=float)

        if values.shape != (self.matrix.shape[1],):
            raise FemtetShapeMismatchError(f"{values.shape[0]} nodal values for {self.matrix.shape[1]} nodes")

        return self.matrix @ values


def _barycentric(mesh: Mesh, geom: GeometryCache, points: np.ndarray, elements: np.ndarray) -> np.ndarray:
    """Barycentric coordinates (P, E, 4) of every point in every listed element."""

    x0 = mesh.coord[mesh.ttrh[elements, 0]]
    rel = points[:, None, :] - x0[None, :, :]
    tail = np.einsum("ekd,ped->pek", geom.binv[elements], rel)

    return np.concatenate([1.0 - tail.sum(axis=2, keepdims=True), tail], axis=2)


def _first_containing(lam: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    inside = lam.min(axis=2) >= -tol
    hit = inside.any(axis=1)
    first = np.where(hit, inside.argmax(axis=1), NOT_FOUND)

    return first, hit


def _scan(
    mesh: Mesh, geom: GeometryCache, points: np.ndarray, candidates: np.ndarray, tol: float
) -> tuple[np.ndarray, np.ndarray]:
    element = np.full(len(points), NOT_FOUND, dtype=np.int64)
    lambdas = np.zeros((len(points), 4))

    if not candidates.size or not len(points):
        return element, lambdas

    block = max(1, _SCAN_BLOCK // candidates.size)

    for start in range(0, len(points), block):
        chunk = slice(start, start + block)
        lam = _barycentric(mesh, geom, points[chunk], candidates)
        first, hit = _first_containing(lam, tol)
        rows = np.flatnonzero(hit)
        element[start + rows] = candidates[first[rows]]
        lambdas[start + rows] = lam[rows, first[rows]]

    return element, lambdas


def _scan_with_boxes(mesh: Mesh, geom: GeometryCache, points: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    vertices = mesh.coord[mesh.ttrh[:, :4]]
    lo, hi = vertices.min(axis=1), vertices.max(axis=1)
    margin = tol * (hi - lo).max(axis=1, keepdims=True) * 4.0
    element = np.full(len(points), NOT_FOUND, dtype=np.int64)
    lambdas = np.zeros((len(points), 4))

    for p, point in enumerate(points):
        candidates = np.flatnonzero(np.all((lo - margin <= point) & (point <= hi + margin), axis=1))

        if candidates.size:
            found, lam = _scan(mesh, geom, point[None, :], candidates, tol)
            element[p], lambdas[p] = found[0], lam[0]

    return element, lambdas


def locate_points(mesh: Mesh, geom: GeometryCache, pts: np.ndarray) -> LocatedPoints:
    """
    Lowest-index tetrahedron containing each point, with its barycentric coordinates.

    A point is inside when all barycentric coordinates are >= -1e-12; points not
    found are retried once at -1e-8. Accepted coordinates are clamped to [0, 1]
    and renormalised. Large meshes use a bounding-box prefilter with identical results.

    Args:
        mesh: Mesh
        geom: Its geometry
        pts: P x 3 coordinates

    Note:
        Unlocated points get element NOT_FOUND; nothing is raised here.
    """

    points = np.asarray(pts, dtype=float).reshape(-1, 3)
    all_elements = np.arange(mesh.n_ttrh)

    def scan(subset: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
        if mesh.n_ttrh > Config.BBOX_PREFILTER_MIN_ELEMENTS:
            return _scan_with_boxes(mesh, geom, points[subset], tol)

        return _scan(mesh, geom, points[subset], all_elements, tol)

    element, lambdas = scan(np.arange(len(points)), Config.LOCATE_TOL)
    missing = np.flatnonzero(element == NOT_FOUND)

    if missing.size:
        element[missing], lambdas[missing] = scan(missing, Config.LOCATE_RETRY_TOL)

    found = element != NOT_FOUND
    clamped = np.clip(lambdas[found], 0.0, 1.0)
    lambdas[found] = clamped / clamped.sum(axis=1, keepdims=True)

    if not found.all():
        logger.debug("%d of %d points lie outside the mesh", int((~found).sum()), len(points))

    return LocatedPoints(points=points, element=element, lambdas=lambdas)


def build_eval_matrix(mesh: Mesh, located: LocatedPoints, m: int | None = None) -> EvalMatrix:
    """
    Rows of shape function values N_r(lambda_p) at the columns ttrh(elem_p, :).

    Raises:
        FemtetUnlocatedPointError: If any point was not located
    """

    if not located.all_found:
        missing = np.flatnonzero(~located.found)
        raise FemtetUnlocatedPointError(
            f"{missing.size} point(s) outside the mesh, first {located.points[missing[0]].tolist()}",
            details={"points": (missing + 1).tolist()},
        )

    degree = mesh.degree if m is None else m
    values = get_reference_element("tetrahedron", degree).values(located.lambdas)
    columns = mesh.ttrh[located.element]
    rows = np.repeat(np.arange(len(located.element)), columns.shape[1])
    matrix = sparse.csr_matrix((values.ravel(), (rows, columns.ravel())), shape=(len(located.element), mesh.n_nodes))

    return EvalMatrix(matrix=matrix, element=located.element, lambdas=located.lambdas)


def error_norms(
    mesh: Mesh,
    geom: GeometryCache,
    u: np.ndarray | Solution,
    exact: CoefficientField,
    exact_grad: CoefficientField | None = None,
    rule: QuadratureRule | None = None,
    t: float = 0.0,
) -> tuple[float, float]:
    """
    L2 error and H1 seminorm error of the finite element function u against exact fields.

    Args:
        mesh: Mesh
        geom: Its geometry
        u: Nodal values or a Solution
        exact: Scalar exact solution
        exact_grad: Its gradient (vector3); when omitted the seminorm of u_h is returned
        rule: Tetrahedron rule, default exactness 2m + 2
        t: Time passed to the exact fields

    Raises:
        FemtetNonFiniteValueError: If an exact field is not finite at a quadrature point
    """

    values_u = u.u if isinstance(u, Solution) else np.asarray(u, dtype=float)

    if values_u.shape != (mesh.n_nodes,):
        raise FemtetShapeMismatchError(f"{values_u.shape[0]} nodal values for {mesh.n_nodes} nodes")

    rule = rule or simplex_rule("tetrahedron", 2 * mesh.degree + 2)
    values, grads = tabulate(get_reference_element("tetrahedron", mesh.degree), rule)
    binv = geom.binv
    l2, h1 = 0.0, 0.0

    for start in range(0, mesh.n_ttrh, Config.ASSEMBLY_CHUNK):
        rows = np.arange(start, min(start + Config.ASSEMBLY_CHUNK, mesh.n_ttrh))
        local = values_u[mesh.ttrh[rows]]
        q = len(rule.weights)
        points = np.einsum("qi,eid->eqd", rule.points, mesh.coord[mesh.ttrh[rows, :4]]).reshape(-1, 3)
        tags = np.repeat(mesh.domain[rows], q)
        scale = geom.detBk[rows] / 6.0

        uh = local @ values.T
        diff = uh - exact.evaluate(points, t, tags).reshape(len(rows), q)
        l2 += float(np.einsum("e,q,eq->", scale, rule.weights, diff**2))

        grad_ref = np.einsum("qrk,er->eqk", grads, local)
        grad_uh = np.einsum("eki,eqk->eqi", binv[rows], grad_ref)

        if exact_grad is not None:
            grad_uh = grad_uh - exact_grad.evaluate(points, t, tags).reshape(len(rows), q, 3)

        h1 += float(np.einsum("e,q,eqi->", scale, rule.weights, grad_uh**2))

    return float(np.sqrt(max(l2, 0.0))), float(np.sqrt(max(h1, 0.0)))


def write_vtk(mesh: Mesh, fields: dict[str, np.ndarray], path: str | PathLike, title: str = "femtet solution") -> Path:
    """
    Write a legacy ASCII VTK unstructured grid with linear tetrahedra (cell type 10).

    All nodes are written as points, so high-order nodes are attached to no cell.

    Args:
        mesh: Mesh
        fields: Name -> nodal values (length nNodes)
        path: Output file
        title: Header title line

    Raises:
        FemtetShapeMismatchError: If a field has the wrong length or its name contains whitespace
        FemtetIOError: If the file cannot be written
    """

    file_path = Path(path)
    n = mesh.n_nodes

    for name, values in fields.items():
        if not name or any(ch.isspace() for ch in name):
            raise FemtetShapeMismatchError(f"invalid VTK field name {name!r}")

        if np.shape(values) != (n,):
            raise FemtetShapeMismatchError(f"field {name!r} has shape {np.shape(values)}, expected {(n,)}")

    cells = mesh.ttrh[:, :4]
    lines = [
        "# vtk DataFile Version 3.0",
        title.splitlines()[0] if title else "femtet",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {n} double",
        *(f"{x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.coord),
        f"CELLS {len(cells)} {5 * len(cells)}",
        *(f"4 {a} {b} {c} {d}" for a, b, c, d in cells),
        f"CELL_TYPES {len(cells)}",
        *(["10"] * len(cells)),
    ]

    if fields:
        lines.append(f"POINT_DATA {n}")

        for name, values in fields.items():
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [f"{v:.17g}" for v in np.asarray(values, dtype=float)]

    payload = "\n".join(lines) + "\n"

    try:
        file_path.parent.mkdir(parents=True, exist_ok=True)
        file_path.write_text(payload, encoding="ascii")
    except OSError as e:
        raise FemtetIOError(f"Cannot write VTK file: {file_path.as_posix()}") from e

    logger.info("Wrote %s (%s)", file_path.as_posix(), naturalsize(len(payload)))

    return file_path


def read_points_csv(path: str | PathLike) -> np.ndarray:
    """
    Points from a CSV file with one `x,y,z` row each; a non-numeric first row is a header.

    Raises:
        FemtetIOError: If the file cannot be read or a row is malformed
    """

    file_path = Path(path)

    try:
        with file_path.open(newline="", encoding="utf-8") as handle:
            rows = [row for row in csv.reader(handle) if any(cell.strip() for cell in row)]
    except OSError as e:
        raise FemtetIOError(f"Cannot read points file: {file_path.as_posix()}") from e

    points = []

    for number, row in enumerate(rows, start=1):
        try:
            values = [float(cell) for cell in row[:3]]
        except ValueError as e:
            if number == 1:
                continue

            raise FemtetIOError(f"{file_path.name}:{number}: expected three numbers, got {row}") from e

        if len(values) != 3:
            raise FemtetIOError(f"{file_path.name}:{number}: expected three numbers, got {row}")

        points.append(values)

    return np.array(points, dtype=float).reshape(-1, 3)


def write_probe_csv(located: LocatedPoints, values: np.ndarray, handle: TextIO) -> None:
    """Rows `x,y,z,element,value` with 1-based element numbers."""

    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(PROBE_HEADER)

    for point, element, value in zip(located.points, located.element, values):
        writer.writerow([f"{point[0]:.17g}", f"{point[1]:.17g}", f"{point[2]:.17g}", int(element) + 1, f"{value:.17g}"])


def observed_rates(h: list[float], errors: list[float]) -> list[float | None]:
    """log(e_i / e_{i+1}) / log(h_i / h_{i+1}) for consecutive levels; None for the first level."""

    rates: list[float | None] = [None]

    for i in range(1, len(errors)):
        if errors[i] > 0 and errors[i - 1] > 0 and h[i] != h[i - 1]:
            rates.append(log(errors[i - 1] / errors[i]) / log(h[i - 1] / h[i]))
        else:
            rates.append(None)

    return rates


def write_error_table(rows: list[tuple[float, int, float, float]], handle: TextIO) -> list[dict[str, float | int | None]]:
    """
    Write the convergence CSV `level,h,nNodes,L2,H1semi,rate_L2,rate_H1`.

    Args:
        rows: (h, nNodes, L2, H1semi) per level, coarse to fine
        handle: Text stream

    Returns:
        The table as a list of dicts
    """

    h = [row[0] for row in rows]
    rate_l2 = observed_rates(h, [row[2] for row in rows])
    rate_h1 = observed_rates(h, [row[3] for row in rows])
    table = []
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(ERROR_TABLE_HEADER)

    def cell(value: float | None) -> str:
        return "" if value is None else f"{value:.6g}"

    for level, ((size, nodes, l2, h1), r2, r1) in enumerate(zip(rows, rate_l2, rate_h1), start=1):
        writer.writerow([level, f"{size:.6g}", nodes, f"{l2:.6e}", f"{h1:.6e}", cell(r2), cell(r1)])
        table.append({"level": level, "h": size, "nNodes": nodes, "L2": l2, "H1semi": h1, "rate_L2": r2, "rate_H1": r1})

    return table
