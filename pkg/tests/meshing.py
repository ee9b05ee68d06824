"""Structured unit-cube meshes written as GMSH 4.1 ASCII text."""

from itertools import permutations
from pathlib import Path

import numpy as np

from femtet.mesh_model import LOCAL_FACES
from femtet.msh_reader import TETRAHEDRON_CODES, TRIANGLE_CODES
from femtet.ref_element import tet_node_order, tri_node_order


SIDES = ("x0", "x1", "y0", "y1", "z0", "z1")
DOMAIN_TAG = 7


def _side(points: np.ndarray, n: int) -> int | None:
    """Surface tag 1..6 of a face whose vertices (integer cell units) lie on one cube side."""

    for axis in range(3):
        for upper in (0, 1):
            if np.all(points[:, axis] == upper * n):
                return 2 * axis + upper + 1

    return None


def cube_mesh_text(n: int, m: int = 1, sparse_ids: bool = False) -> str:
    """
    Unit cube split into n^3 cells of six Kuhn tetrahedra each, degree m.

    Physical surfaces x0, x1, y0, y1, z0, z1 (tags 1..6, one entity each) and the volume "Domain" (tag 7).
    """

    node_index: dict[tuple[int, int, int], int] = {}
    tets: list[list[int]] = []
    tris: dict[int, list[list[int]]] = {tag: [] for tag in range(1, 7)}
    tet_order = tet_node_order(m)
    tri_order = tri_node_order(m)

    def node(key: tuple[int, int, int]) -> int:
        if key not in node_index:
            node_index[key] = len(node_index)
        return node_index[key]

    unit = np.eye(3, dtype=np.int64)

    for i in range(n):
        for j in range(n):
            for k in range(n):
                corner = np.array([i, j, k], dtype=np.int64)

                for perm in permutations(range(3)):
                    v = [corner, corner + unit[perm[0]]]
                    v.append(v[1] + unit[perm[1]])
                    v.append(v[2] + unit[perm[2]])

                    if np.linalg.det(np.array([v[1] - v[0], v[2] - v[0], v[3] - v[0]], dtype=float)) < 0:
                        v[1], v[2] = v[2], v[1]

                    vertices = np.array(v)
                    tets.append([node(tuple(int(c) for c in np.array(index) @ vertices)) for index in tet_order])

                    for face in LOCAL_FACES:
                        face_vertices = vertices[face]
                        tag = _side(face_vertices, n)

                        if tag is not None:
                            tris[tag].append(
                                [node(tuple(int(c) for c in np.array(index) @ face_vertices)) for index in tri_order]
                            )

    keys = sorted(node_index, key=node_index.get)
    ids = [3 * p + 10 if sparse_ids else p + 1 for p in range(len(keys))]
    scale = float(n * m)
    lines = ["$MeshFormat", "4.1 0 8", "$EndMeshFormat", "$PhysicalNames", "7"]
    lines += [f'2 {tag} "{name}"' for tag, name in enumerate(SIDES, start=1)]
    lines += [f'3 {DOMAIN_TAG} "Domain"', "$EndPhysicalNames", "$Entities", "0 0 6 1"]

    for tag in range(1, 7):
        axis, upper = divmod(tag - 1, 2)
        lo, hi = [0.0, 0.0, 0.0], [1.0, 1.0, 1.0]
        lo[axis] = hi[axis] = float(upper)
        lines.append(f"{tag} {lo[0]} {lo[1]} {lo[2]} {hi[0]} {hi[1]} {hi[2]} 1 {tag} 0")

    lines += [f"1 0 0 0 1 1 1 1 {DOMAIN_TAG} 6 1 2 3 4 5 6", "$EndEntities"]
    lines += ["$Nodes", f"1 {len(keys)} {min(ids)} {max(ids)}", f"3 1 0 {len(keys)}"]
    lines += [str(node_id) for node_id in ids]
    lines += [f"{x / scale!r} {y / scale!r} {z / scale!r}" for x, y, z in keys]
    lines.append("$EndNodes")

    blocks = [(2, tag, TRIANGLE_CODES[m], rows) for tag, rows in tris.items() if rows]
    blocks.append((3, 1, TETRAHEDRON_CODES[m], tets))
    total = sum(len(rows) for *_, rows in blocks)
    lines += ["$Elements", f"{len(blocks)} {total} 1 {total}"]
    element_id = 1

    for dim, tag, code, rows in blocks:
        lines.append(f"{dim} {tag} {code} {len(rows)}")

        for row in rows:
            lines.append(" ".join([str(element_id), *(str(ids[p]) for p in row)]))
            element_id += 1

    lines.append("$EndElements")

    return "\n".join(lines) + "\n"


def write_cube(directory: Path, n: int, m: int = 1, sparse_ids: bool = False) -> Path:
    path = directory / f"cube_n{n}_p{m}{'_sparse' if sparse_ids else ''}.msh"

    if not path.exists():
        path.write_text(cube_mesh_text(n, m, sparse_ids), encoding="ascii")

    return path
