"""Per-element geometry, face connectivity and boundary classification."""

from logging import getLogger

import numpy as np
from pydantic import BaseModel, ConfigDict

from .config import Config
from .exceptions import (
    FemtetDegenerateElementError,
    FemtetNegativeOrientationError,
    FemtetNonConformalError,
    FemtetUnknownGroupError,
)
from .msh_reader import Mesh


logger = getLogger(__name__)

# Faces opposite vertices 0..3, ordered so that normals point outwards.
LOCAL_FACES = np.array([[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]])
TET_EDGE_PAIRS = np.array([[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]])


class GeometryCache(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    detBk: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    b3: np.ndarray
    bd_normal: np.ndarray
    bd_area2: np.ndarray

    @property
    def binv(self) -> np.ndarray:
        """B_K^-1 for every element, shape (nTtrh, 3, 3), rows b1, b2, b3."""

        return np.stack([self.b1, self.b2, self.b3], axis=1)

    @property
    def volume(self) -> float:
        return float(self.detBk.sum() / 6.0)


class Connectivity(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    faces: np.ndarray
    ttrh2faces: np.ndarray
    faces2ttrh: np.ndarray

    @property
    def n_faces(self) -> int:
        return int(self.faces.shape[0])

    @property
    def boundary_mask(self) -> np.ndarray:
        return self.faces2ttrh[:, 1] == Config.NO_OWNER

    @property
    def n_boundary_faces(self) -> int:
        return int(self.boundary_mask.sum())


class BoundaryClassification(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    gammaD: np.ndarray
    iD: np.ndarray
    inD: np.ndarray
    robin_rows: np.ndarray


class QualityReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    h_K: np.ndarray
    rho_K: np.ndarray
    chunkiness: float

    @property
    def h(self) -> float:
        return float(self.h_K.max())


def _vertices(mesh: Mesh) -> np.ndarray:
    return mesh.coord[mesh.ttrh[:, :4]]


def _diameters(vertices: np.ndarray) -> np.ndarray:
    edges = vertices[:, TET_EDGE_PAIRS[:, 1]] - vertices[:, TET_EDGE_PAIRS[:, 0]]

    return np.linalg.norm(edges, axis=2).max(axis=1)


def compute_geometry(mesh: Mesh) -> GeometryCache:
    """
    Determinants, inverse-map rows and boundary normals of every element.

    Raises:
        FemtetDegenerateElementError: If |det B_K| < 1e-14 h_K^3 for some element
        FemtetNegativeOrientationError: If det B_K < 0 for some element
    """

    x = _vertices(mesh)
    v01, v02, v03 = x[:, 1] - x[:, 0], x[:, 2] - x[:, 0], x[:, 3] - x[:, 0]
    c23 = np.cross(v02, v03)
    detBk = np.einsum("ij,ij->i", v01, c23)

    scale = _diameters(x) ** 3
    degenerate = np.flatnonzero(np.abs(detBk) < Config.DEGENERATE_RELATIVE_TOL * scale)

    if degenerate.size:
        k = int(degenerate[0])
        raise FemtetDegenerateElementError(
            f"tetrahedron {k + 1} is degenerate (det B_K = {detBk[k]:.3e})",
            element=k + 1,
            details={"elements": (degenerate + 1).tolist()},
        )

    negative = np.flatnonzero(detBk < 0)

    if negative.size:
        k = int(negative[0])
        raise FemtetNegativeOrientationError(
            f"tetrahedron {k + 1} is negatively oriented (det B_K = {detBk[k]:.3e})",
            element=k + 1,
            details={"elements": (negative + 1).tolist()},
        )

    det = detBk[:, None]
    b1 = c23 / det
    b2 = np.cross(v03, v01) / det
    b3 = np.cross(v01, v02) / det

    if mesh.n_trb:
        y = mesh.coord[mesh.trB[:, :3]]
        bd_normal = np.cross(y[:, 1] - y[:, 0], y[:, 2] - y[:, 0])
    else:
        bd_normal = np.empty((0, 3))

    bd_area2 = np.linalg.norm(bd_normal, axis=1)

    return GeometryCache(detBk=detBk, b1=b1, b2=b2, b3=b3, bd_normal=bd_normal, bd_area2=bd_area2)


def build_connectivity(mesh: Mesh) -> Connectivity:
    """
    Unique faces of the mesh and the face/tetrahedron incidence in both directions.

    faces2ttrh holds first and last owner (0-based); boundary faces get Config.NO_OWNER as second owner.

    Raises:
        FemtetNonConformalError: If a face is shared by three or more tetrahedra
    """

    n = mesh.n_ttrh
    vertices = mesh.ttrh[:, :4]
    all_faces = vertices[:, LOCAL_FACES].reshape(4 * n, 3)
    owners = np.repeat(np.arange(n), 4)
    keys = np.sort(all_faces, axis=1)

    _, first, inverse, counts = np.unique(keys, axis=0, return_index=True, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()

    if np.any(counts > 2):
        bad = int(np.flatnonzero(counts > 2)[0])
        raise FemtetNonConformalError(
            f"face {(keys[first[bad]] + 1).tolist()} is shared by {counts[bad]} tetrahedra",
            details={"face": (keys[first[bad]] + 1).tolist()},
        )

    order = np.argsort(inverse, kind="stable")
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    first_owner = owners[order[starts]]
    last_owner = owners[order[starts + counts - 1]]
    second = np.where(counts == 2, last_owner, Config.NO_OWNER)

    connectivity = Connectivity(
        faces=all_faces[first],
        ttrh2faces=inverse.reshape(n, 4),
        faces2ttrh=np.stack([first_owner, second], axis=1),
    )
    logger.debug("Connectivity: %d faces, %d on the boundary", connectivity.n_faces, connectivity.n_boundary_faces)

    return connectivity


def match_boundary_faces(mesh: Mesh, conn: Connectivity) -> np.ndarray:
    """
    Owning tetrahedron (0-based) of every trB row, or Config.NO_OWNER if its vertices form no mesh face.
    """

    if not mesh.n_trb:
        return np.empty(0, dtype=np.int64)

    base = mesh.n_nodes + 1

    def encode(rows: np.ndarray) -> np.ndarray:
        rows = np.sort(rows, axis=1).astype(np.int64)
        return (rows[:, 0] * base + rows[:, 1]) * base + rows[:, 2]

    face_keys = encode(conn.faces)
    order = np.argsort(face_keys)
    sorted_keys = face_keys[order]
    wanted = encode(mesh.trB[:, :3])
    pos = np.clip(np.searchsorted(sorted_keys, wanted), 0, max(len(sorted_keys) - 1, 0))
    found = sorted_keys[pos] == wanted

    return np.where(found, conn.faces2ttrh[order[pos], 0], Config.NO_OWNER)


def resolve_groups(mesh: Mesh, names: list[str]) -> list[int]:
    """
    Entity tags of the given physical groups.

    Raises:
        FemtetUnknownGroupError: If a name is not a physical group of the mesh
    """

    tags: set[int] = set()

    for name in names:
        if name not in mesh.group_index:
            raise FemtetUnknownGroupError(
                f"unknown physical group {name!r}; available: {', '.join(sorted(mesh.group_index)) or 'none'}"
            )

        tags.update(mesh.group_index[name])

    return sorted(tags)


def classify_boundary(mesh: Mesh, dirichlet_groups: list[str]) -> BoundaryClassification:
    """
    Split boundary triangles and nodes into Dirichlet and the rest.

    Raises:
        FemtetUnknownGroupError: If a group name is not defined
    """

    tags = resolve_groups(mesh, dirichlet_groups)
    gammaD = np.isin(mesh.domBd, tags)
    iD = np.unique(mesh.trB[gammaD]).astype(np.int64)
    inD = np.setdiff1d(np.arange(mesh.n_nodes), iD)

    return BoundaryClassification(gammaD=gammaD, iD=iD, inD=inD, robin_rows=np.flatnonzero(~gammaD))


def compute_quality(mesh: Mesh, geom: GeometryCache) -> QualityReport:
    """Diameters, inradii (3V / surface area) and the chunkiness parameter."""

    x = _vertices(mesh)
    h_K = _diameters(x)
    face_vertices = x[:, LOCAL_FACES]
    areas = 0.5 * np.linalg.norm(
        np.cross(face_vertices[:, :, 1] - face_vertices[:, :, 0], face_vertices[:, :, 2] - face_vertices[:, :, 0]),
        axis=2,
    ).sum(axis=1)
    rho_K = 3.0 * (geom.detBk / 6.0) / areas

    return QualityReport(h_K=h_K, rho_K=rho_K, chunkiness=float((h_K / rho_K).max()))


def outward_unit_normals(mesh: Mesh, geom: GeometryCache, owners: np.ndarray) -> np.ndarray:
    """
    Unit normals of the trB rows, flipped where they point into the owning tetrahedron.

    Rows without an owner keep the file orientation.
    """

    normals = geom.bd_normal / geom.bd_area2[:, None]

    if not mesh.n_trb:
        return normals

    owned = owners != Config.NO_OWNER

    if not owned.all():
        logger.warning("%d boundary triangles match no tetrahedron face", int((~owned).sum()))

    tri_centroid = mesh.coord[mesh.trB[:, :3]].mean(axis=1)
    tet_centroid = mesh.coord[mesh.ttrh[np.where(owned, owners, 0), :4]].mean(axis=1)
    inward = np.einsum("ij,ij->i", normals, tri_centroid - tet_centroid) < 0
    flip = np.where(owned & inward, -1.0, 1.0)

    return normals * flip[:, None]
