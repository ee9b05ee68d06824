"""Lagrange reference elements in GMSH node ordering."""

from functools import lru_cache
from math import comb
from typing import TYPE_CHECKING, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict

from .config import Config
from .exceptions import FemtetElementError, FemtetUnsupportedDegreeError


if TYPE_CHECKING:
    from .quadrature import QuadratureRule


CellKind = Literal["tetrahedron", "triangle"]

TET_EDGES: tuple[tuple[int, int], ...] = ((0, 1), (1, 2), (2, 0), (3, 0), (3, 2), (3, 1))
TET_FACES: tuple[tuple[int, int, int], ...] = ((0, 2, 1), (0, 1, 3), (0, 3, 2), (3, 1, 2))
TRI_EDGES: tuple[tuple[int, int], ...] = ((0, 1), (1, 2), (2, 0))

REFERENCE_VERTICES = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])


def _check_degree(m: int) -> None:
    if not Config.MIN_DEGREE <= m <= Config.MAX_DEGREE:
        raise FemtetUnsupportedDegreeError(f"degree {m} is not supported (1..4)")


def _vertex_nodes(m: int, count: int) -> list[tuple[int, ...]]:
    return [tuple(m if k == v else 0 for k in range(count)) for v in range(count)]


def _edge_nodes(m: int, count: int, edges: tuple[tuple[int, int], ...]) -> list[tuple[int, ...]]:
    nodes = []

    for a, b in edges:
        for k in range(1, m):
            index = [0] * count
            index[a], index[b] = m - k, k
            nodes.append(tuple(index))

    return nodes


def _tri_lattice(m: int) -> list[tuple[int, ...]]:
    if m == 0:
        return [(0, 0, 0)]

    nodes = _vertex_nodes(m, 3) + _edge_nodes(m, 3, TRI_EDGES)

    if m >= 3:
        nodes += [tuple(i + 1 for i in inner) for inner in _tri_lattice(m - 3)]

    return nodes


def _tet_lattice(m: int) -> list[tuple[int, ...]]:
    if m == 0:
        return [(0, 0, 0, 0)]

    nodes = _vertex_nodes(m, 4) + _edge_nodes(m, 4, TET_EDGES)

    if m >= 3:
        for face in TET_FACES:
            for inner in _tri_lattice(m - 3):
                index = [0] * 4

                for k, vertex in enumerate(face):
                    index[vertex] = inner[k] + 1

                nodes.append(tuple(index))

    if m >= 4:
        nodes += [tuple(i + 1 for i in inner) for inner in _tet_lattice(m - 4)]

    return nodes


def tet_node_order(m: int) -> list[tuple[int, ...]]:
    """
    Barycentric indices (i0, i1, i2, i3) of the P_m tetrahedron nodes in GMSH order.

    Vertices first, then edge-interior nodes along (0,1), (1,2), (2,0), (3,0), (3,2), (3,1),
    then face-interior nodes with outward orientation, then interior nodes.

    Raises:
        FemtetUnsupportedDegreeError: If m is outside 1..4
    """

    _check_degree(m)

    return _tet_lattice(m)


def tri_node_order(m: int) -> list[tuple[int, ...]]:
    """
    Barycentric indices (i0, i1, i2) of the P_m triangle nodes in GMSH order.

    Raises:
        FemtetUnsupportedDegreeError: If m is outside 1..4
    """

    _check_degree(m)

    return _tri_lattice(m)


class ReferenceElement(BaseModel):
    """Lagrange P_m element on the reference tetrahedron or triangle."""

    model_config = ConfigDict(frozen=True)

    cell_kind: CellKind
    degree: int
    nodes: tuple[tuple[int, ...], ...]

    @property
    def dim(self) -> int:
        return 3 if self.cell_kind == "tetrahedron" else 2

    @property
    def dof(self) -> int:
        return len(self.nodes)

    @property
    def node_lambdas(self) -> np.ndarray:
        """Barycentric coordinates of the nodes, shape (dof, dim + 1)."""

        return np.array(self.nodes, dtype=float) / self.degree

    @property
    def node_points(self) -> np.ndarray:
        """Reference Cartesian coordinates of the nodes, shape (dof, dim)."""

        return self.node_lambdas[:, 1:]

    def _factor_tables(self, lam: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        # g_i(l) = prod_{k<i} (m l - k) / i!  and its derivative, for i = 0..m
        m = self.degree
        lt = lam.T
        values = np.empty((m + 1, *lt.shape))
        derivs = np.empty((m + 1, *lt.shape))
        num = np.ones_like(lt)
        dnum = np.zeros_like(lt)
        fact = 1.0
        values[0], derivs[0] = num, dnum

        for i in range(1, m + 1):
            dnum = dnum * (m * lt - (i - 1)) + num * m
            num = num * (m * lt - (i - 1))
            fact *= i
            values[i], derivs[i] = num / fact, dnum / fact

        return values, derivs

    def _gathered(self, lam: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        lam = np.atleast_2d(np.asarray(lam, dtype=float))

        if lam.shape[1] != self.dim + 1:
            raise FemtetElementError(f"expected {self.dim + 1} barycentric components, got {lam.shape[1]}")

        values, derivs = self._factor_tables(lam)
        index = np.array(self.nodes)
        columns = np.arange(self.dim + 1)
        # (dof, nb, P)
        return values[index, columns], derivs[index, columns]

    def values(self, lam: np.ndarray) -> np.ndarray:
        """Shape function values at barycentric points, shape (P, dof)."""

        factors, _ = self._gathered(lam)

        return np.prod(factors, axis=1).T

    def gradients(self, lam: np.ndarray) -> np.ndarray:
        """Gradients with respect to reference Cartesian coordinates, shape (P, dof, dim)."""

        factors, derivs = self._gathered(lam)
        nb = self.dim + 1
        by_lambda = np.empty_like(factors)

        for n in range(nb):
            others = np.prod(np.delete(factors, n, axis=1), axis=1)
            by_lambda[:, n] = derivs[:, n] * others

        # dl0/dx_j = -1, dl_{j+1}/dx_j = 1
        grads = by_lambda[:, 1:] - by_lambda[:, :1]

        return np.transpose(grads, (2, 0, 1))


@lru_cache(maxsize=None)
def get_reference_element(cell_kind: CellKind, m: int) -> ReferenceElement:
    """Cached reference element of the given kind and degree."""

    nodes = tet_node_order(m) if cell_kind == "tetrahedron" else tri_node_order(m)
    element = ReferenceElement(cell_kind=cell_kind, degree=m, nodes=tuple(nodes))
    expected = comb(m + 3, 3) if cell_kind == "tetrahedron" else comb(m + 2, 2)
    assert element.dof == expected

    return element


def shape_value(elem: ReferenceElement, r: int, lam: np.ndarray | tuple[float, ...]) -> float:
    """Value of the r-th shape function at one barycentric point."""

    return float(elem.values(np.asarray(lam, dtype=float)[None, :])[0, r])


def shape_grad(elem: ReferenceElement, r: int, x_hat: np.ndarray | tuple[float, ...]) -> np.ndarray:
    """Reference gradient of the r-th shape function at a reference Cartesian point."""

    x_hat = np.asarray(x_hat, dtype=float)
    lam = np.concatenate([[1.0 - x_hat.sum()], x_hat])

    return elem.gradients(lam[None, :])[0, r]


def face_node_map(m: int, face: int) -> list[int]:
    """
    Tetrahedron-local indices of the nodes on face `face` (nodes with i_face = 0).

    The indices follow the triangle's GMSH order, with the face vertices taken
    in ascending order and flipped when needed so the normal points outwards.

    Raises:
        FemtetUnsupportedDegreeError: If m is outside 1..4
        FemtetElementError: If face is not 0..3
    """

    _check_degree(m)

    if face not in range(4):
        raise FemtetElementError(f"face index must be 0..3, got {face}")

    vertices = [v for v in range(4) if v != face]
    p0, p1, p2 = REFERENCE_VERTICES[vertices]
    normal = np.cross(p1 - p0, p2 - p0)
    outward = (p0 + p1 + p2) / 3 - REFERENCE_VERTICES.mean(axis=0)

    if normal @ outward < 0:
        vertices[1], vertices[2] = vertices[2], vertices[1]

    lookup = {index: r for r, index in enumerate(tet_node_order(m))}
    local = []

    for tri_index in tri_node_order(m):
        index = [0] * 4

        for k, vertex in enumerate(vertices):
            index[vertex] = tri_index[k]

        local.append(lookup[tuple(index)])

    return local


@lru_cache(maxsize=None)
def _tables(cell_kind: CellKind, degree: int, shape: tuple[int, ...], raw: bytes) -> tuple[np.ndarray, np.ndarray]:
    elem = get_reference_element(cell_kind, degree)
    points = np.frombuffer(raw, dtype=float).reshape(shape).copy()
    values = elem.values(points)
    grads = elem.gradients(points)
    values.setflags(write=False)
    grads.setflags(write=False)

    return values, grads


def tabulate(elem: ReferenceElement, rule: "QuadratureRule") -> tuple[np.ndarray, np.ndarray]:
    """
    Shape values (Q, dof) and reference gradients (Q, dof, dim) at the rule's points.

    Tables are cached per element and point set; the arrays are read-only.
    """

    if rule.cell_kind != elem.cell_kind:
        raise FemtetElementError(f"cannot tabulate a {elem.cell_kind} element on a {rule.cell_kind} rule")

    points = np.ascontiguousarray(rule.points, dtype=float)

    return _tables(elem.cell_kind, elem.degree, points.shape, points.tobytes())
