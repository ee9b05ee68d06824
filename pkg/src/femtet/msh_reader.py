"""GMSH 4.1 ASCII mesh reader."""

from logging import getLogger
from math import comb
from os import PathLike
from pathlib import Path
from typing import NamedTuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .config import Config
from .exceptions import (
    FemtetBinaryNotSupportedError,
    FemtetDegreeMismatchError,
    FemtetDuplicateNodeIdError,
    FemtetIOError,
    FemtetMalformedSectionError,
    FemtetMixedDegreesError,
    FemtetUnsupportedDegreeError,
    FemtetUnsupportedElementTypeError,
    FemtetUnsupportedVersionError,
)


logger = getLogger(__name__)


class ElementType(NamedTuple):
    dim: int
    num_nodes: int
    order: int


# Codes 8/26/27 (high-order lines) are accepted so that P2-P4 files load; lines are discarded anyway.
ELEMENT_TYPES: dict[int, ElementType] = {
    15: ElementType(0, 1, 0),
    1: ElementType(1, 2, 1),
    8: ElementType(1, 3, 2),
    26: ElementType(1, 4, 3),
    27: ElementType(1, 5, 4),
    2: ElementType(2, 3, 1),
    9: ElementType(2, 6, 2),
    21: ElementType(2, 10, 3),
    23: ElementType(2, 15, 4),
    4: ElementType(3, 4, 1),
    11: ElementType(3, 10, 2),
    29: ElementType(3, 20, 3),
    30: ElementType(3, 35, 4),
}

TETRAHEDRON_CODES: dict[int, int] = {1: 4, 2: 11, 3: 29, 4: 30}
TRIANGLE_CODES: dict[int, int] = {1: 2, 2: 9, 3: 21, 4: 23}


class PhysicalGroup(BaseModel):
    """Named GMSH label attached to entities of one dimension."""

    model_config = ConfigDict(frozen=True)

    dim: int = Field(ge=0, le=3)
    tag: int = Field(gt=0)
    name: str = Field(min_length=1)


class EntityRecord(BaseModel):
    """One CAD entity of the boundary representation."""

    model_config = ConfigDict(frozen=True)

    dim: int
    tag: int
    bbox_min: tuple[float, float, float]
    bbox_max: tuple[float, float, float]
    physical_tags: tuple[int, ...] = ()
    bounding_entities: tuple[int, ...] = ()


class NodeBlock(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    entity_dim: int
    entity_tag: int
    node_ids: np.ndarray
    coords: np.ndarray


class ElementBlock(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    entity_dim: int
    entity_tag: int
    element_type: int
    element_ids: np.ndarray
    node_rows: np.ndarray


class ParsedMesh(BaseModel):
    """Sections of a .msh file, materialized but not yet interpreted."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    groups: list[PhysicalGroup]
    entities: dict[int, list[EntityRecord]]
    node_blocks: list[NodeBlock]
    element_blocks: list[ElementBlock]

    @property
    def num_nodes(self) -> int:
        return sum(len(block.node_ids) for block in self.node_blocks)

    @property
    def num_elements(self) -> int:
        return sum(len(block.element_ids) for block in self.element_blocks)


class Mesh(BaseModel):
    """Tetrahedral mesh with dense 0-based node indexing.

    Node indices are stored 0-based; everything shown to users adds one.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    coord: np.ndarray
    ttrh: np.ndarray
    trB: np.ndarray
    domain: np.ndarray
    domBd: np.ndarray
    degree: int
    groups: list[PhysicalGroup]
    group_index: dict[str, list[int]]
    node_ids: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.coord.shape[0])

    @property
    def n_ttrh(self) -> int:
        return int(self.ttrh.shape[0])

    @property
    def n_trb(self) -> int:
        return int(self.trB.shape[0])

    @property
    def dof_k(self) -> int:
        return comb(self.degree + 3, 3)

    @property
    def dof_a(self) -> int:
        return comb(self.degree + 2, 2)

    @property
    def boundary_tags(self) -> list[int]:
        return sorted({int(tag) for tag in self.domBd})

    def group_dim(self, name: str) -> int | None:
        for group in self.groups:
            if group.name == name:
                return group.dim

        return None


class _Cursor:
    """Line cursor over the file with 1-based line numbers for diagnostics."""

    def __init__(self, text: str) -> None:
        self._lines = text.splitlines()
        self._pos = 0

    @property
    def line_number(self) -> int:
        return self._pos

    def at_end(self) -> bool:
        while self._pos < len(self._lines) and not self._lines[self._pos].strip():
            self._pos += 1

        return self._pos >= len(self._lines)

    def next_line(self, section: str) -> str:
        if self.at_end():
            raise FemtetMalformedSectionError(f"unexpected end of file inside ${section}", line=self._pos)

        line = self._lines[self._pos].strip()
        self._pos += 1

        return line

    def next_ints(self, section: str, count: int | None = None) -> list[int]:
        line = self.next_line(section)

        try:
            values = [int(token) for token in line.split()]
        except ValueError as e:
            raise FemtetMalformedSectionError(f"expected integers in ${section}, got {line!r}", line=self._pos) from e

        if count is not None and len(values) != count:
            raise FemtetMalformedSectionError(
                f"expected {count} integers in ${section}, got {len(values)}", line=self._pos
            )

        return values

    def expect_end(self, section: str) -> None:
        line = self.next_line(section)

        if line != f"$End{section}":
            raise FemtetMalformedSectionError(
                f"expected $End{section}, got {line!r} (declared counts do not match content)", line=self._pos
            )

    def skip_section(self, section: str) -> None:
        while True:
            if self.next_line(section) == f"$End{section}":
                return


def _parse_mesh_format(cursor: _Cursor) -> None:
    tokens = cursor.next_line("MeshFormat").split()

    if len(tokens) < 2:
        raise FemtetMalformedSectionError("incomplete $MeshFormat header", line=cursor.line_number)

    version, file_type = tokens[0], tokens[1]

    if version != Config.SUPPORTED_MSH_VERSION:
        raise FemtetUnsupportedVersionError(
            f"mesh format {version} is not supported, expected {Config.SUPPORTED_MSH_VERSION}",
            line=cursor.line_number,
        )

    if file_type != "0":
        raise FemtetBinaryNotSupportedError("binary .msh files are not supported", line=cursor.line_number)

    cursor.expect_end("MeshFormat")


def _parse_physical_names(cursor: _Cursor) -> list[PhysicalGroup]:
    (count,) = cursor.next_ints("PhysicalNames", 1)
    groups: list[PhysicalGroup] = []
    seen: set[tuple[int, int]] = set()

    for _ in range(count):
        line = cursor.next_line("PhysicalNames")
        parts = line.split(maxsplit=2)

        if len(parts) != 3:
            raise FemtetMalformedSectionError(f"bad physical group row {line!r}", line=cursor.line_number)

        try:
            dim, tag = int(parts[0]), int(parts[1])
        except ValueError as e:
            raise FemtetMalformedSectionError(f"bad physical group row {line!r}", line=cursor.line_number) from e

        name = parts[2].strip().strip('"').strip()

        if not 0 <= dim <= 3 or tag <= 0 or not name:
            raise FemtetMalformedSectionError(f"invalid physical group {line!r}", line=cursor.line_number)

        if (dim, tag) in seen:
            raise FemtetMalformedSectionError(f"duplicate physical tag {tag} in dimension {dim}", line=cursor.line_number)

        seen.add((dim, tag))
        groups.append(PhysicalGroup(dim=dim, tag=tag, name=name))

    cursor.expect_end("PhysicalNames")

    return groups


def _parse_entities(cursor: _Cursor) -> dict[int, list[EntityRecord]]:
    counts = cursor.next_ints("Entities", 4)
    entities: dict[int, list[EntityRecord]] = {0: [], 1: [], 2: [], 3: []}

    for dim, count in enumerate(counts):
        for _ in range(count):
            line = cursor.next_line("Entities")
            tokens = line.split()

            try:
                tag = int(tokens[0])
                bbox_len = 3 if dim == 0 else 6
                bbox = [float(token) for token in tokens[1 : 1 + bbox_len]]
                pos = 1 + bbox_len
                num_physical = int(tokens[pos])
                physical = tuple(int(token) for token in tokens[pos + 1 : pos + 1 + num_physical])
                pos += 1 + num_physical

                if dim == 0:
                    bounding: tuple[int, ...] = ()
                else:
                    num_bounding = int(tokens[pos])
                    bounding = tuple(int(token) for token in tokens[pos + 1 : pos + 1 + num_bounding])
                    pos += 1 + num_bounding
            except (IndexError, ValueError) as e:
                raise FemtetMalformedSectionError(f"bad entity row {line!r}", line=cursor.line_number) from e

            if len(bbox) != bbox_len or len(physical) != num_physical or pos > len(tokens):
                raise FemtetMalformedSectionError(f"truncated entity row {line!r}", line=cursor.line_number)

            if dim == 0:
                bbox_min = bbox_max = (bbox[0], bbox[1], bbox[2])
            else:
                bbox_min, bbox_max = (bbox[0], bbox[1], bbox[2]), (bbox[3], bbox[4], bbox[5])

            entities[dim].append(
                EntityRecord(
                    dim=dim,
                    tag=tag,
                    bbox_min=bbox_min,
                    bbox_max=bbox_max,
                    physical_tags=physical,
                    bounding_entities=bounding,
                )
            )

    cursor.expect_end("Entities")

    return entities


def _parse_nodes(cursor: _Cursor) -> list[NodeBlock]:
    num_blocks, num_nodes, _, _ = cursor.next_ints("Nodes", 4)
    blocks: list[NodeBlock] = []

    for _ in range(num_blocks):
        entity_dim, entity_tag, parametric, count = cursor.next_ints("Nodes", 4)

        if parametric != 0:
            raise FemtetMalformedSectionError("parametric node coordinates are not supported", line=cursor.line_number)

        ids = [cursor.next_ints("Nodes", 1)[0] for _ in range(count)]
        rows = [cursor.next_line("Nodes").split() for _ in range(count)]

        try:
            coords = np.array(rows, dtype=float).reshape(count, 3)
        except ValueError as e:
            raise FemtetMalformedSectionError(
                f"node block ({entity_dim}, {entity_tag}) has malformed coordinates", line=cursor.line_number
            ) from e

        blocks.append(
            NodeBlock(
                entity_dim=entity_dim,
                entity_tag=entity_tag,
                node_ids=np.array(ids, dtype=np.int64),
                coords=coords,
            )
        )

    cursor.expect_end("Nodes")

    total = sum(len(block.node_ids) for block in blocks)

    if total != num_nodes:
        raise FemtetMalformedSectionError(f"$Nodes declares {num_nodes} nodes but lists {total}", line=cursor.line_number)

    return blocks


def _parse_elements(cursor: _Cursor) -> list[ElementBlock]:
    num_blocks, num_elements, _, _ = cursor.next_ints("Elements", 4)
    blocks: list[ElementBlock] = []

    for _ in range(num_blocks):
        entity_dim, entity_tag, element_type, count = cursor.next_ints("Elements", 4)

        if element_type not in ELEMENT_TYPES:
            raise FemtetUnsupportedElementTypeError(
                f"element type {element_type} is not supported", line=cursor.line_number
            )

        spec = ELEMENT_TYPES[element_type]

        if spec.dim != entity_dim:
            raise FemtetMalformedSectionError(
                f"element type {element_type} has dimension {spec.dim}, block declares {entity_dim}",
                line=cursor.line_number,
            )

        rows = [cursor.next_ints("Elements", spec.num_nodes + 1) for _ in range(count)]
        data = np.array(rows, dtype=np.int64).reshape(count, spec.num_nodes + 1)

        blocks.append(
            ElementBlock(
                entity_dim=entity_dim,
                entity_tag=entity_tag,
                element_type=element_type,
                element_ids=data[:, 0].copy(),
                node_rows=data[:, 1:].copy(),
            )
        )

    cursor.expect_end("Elements")

    total = sum(len(block.element_ids) for block in blocks)

    if total != num_elements:
        raise FemtetMalformedSectionError(
            f"$Elements declares {num_elements} elements but lists {total}", line=cursor.line_number
        )

    return blocks


def parse_msh(text: str) -> ParsedMesh:
    """
    Parse the text of a GMSH 4.1 ASCII mesh file.

    Reads $MeshFormat, the optional $PhysicalNames and the mandatory $Entities,
    $Nodes and $Elements sections. Other sections are skipped.

    Args:
        text: Full file contents

    Raises:
        FemtetUnsupportedVersionError: If the format version is not 4.1
        FemtetBinaryNotSupportedError: If the file type flag is 1
        FemtetMalformedSectionError: On count mismatches, truncation or missing sections
        FemtetUnsupportedElementTypeError: On element codes outside the accepted table
    """

    cursor = _Cursor(text)
    seen_format = False
    groups: list[PhysicalGroup] = []
    entities: dict[int, list[EntityRecord]] | None = None
    node_blocks: list[NodeBlock] | None = None
    element_blocks: list[ElementBlock] | None = None

    while not cursor.at_end():
        header = cursor.next_line("file")

        if not header.startswith("$"):
            raise FemtetMalformedSectionError(f"expected a section header, got {header!r}", line=cursor.line_number)

        section = header[1:]

        if not seen_format and section != "MeshFormat":
            raise FemtetMalformedSectionError("file does not start with $MeshFormat", line=cursor.line_number)

        if section == "MeshFormat":
            _parse_mesh_format(cursor)
            seen_format = True
        elif section == "PhysicalNames":
            groups = _parse_physical_names(cursor)
        elif section == "Entities":
            entities = _parse_entities(cursor)
        elif section == "Nodes":
            node_blocks = _parse_nodes(cursor)
        elif section == "Elements":
            element_blocks = _parse_elements(cursor)
        else:
            logger.debug("Skipping section $%s", section)
            cursor.skip_section(section)

    for name, value in (("Entities", entities), ("Nodes", node_blocks), ("Elements", element_blocks)):
        if value is None:
            raise FemtetMalformedSectionError(f"missing ${name} section")

    assert entities is not None and node_blocks is not None and element_blocks is not None

    known = np.concatenate([block.node_ids for block in node_blocks]) if node_blocks else np.empty(0, np.int64)
    referenced = [block.node_rows.ravel() for block in element_blocks]

    if referenced:
        used = np.unique(np.concatenate(referenced))
        missing = used[~np.isin(used, known)]

        if missing.size:
            raise FemtetMalformedSectionError(
                f"elements reference undefined node ids {missing[:10].tolist()}",
                details={"missing": missing.tolist()},
            )

    parsed = ParsedMesh(groups=groups, entities=entities, node_blocks=node_blocks, element_blocks=element_blocks)
    logger.debug(
        "Parsed mesh: %d groups, %d nodes, %d elements in %d blocks",
        len(groups),
        parsed.num_nodes,
        parsed.num_elements,
        len(element_blocks),
    )

    return parsed


def _sorted_nodes(parsed: ParsedMesh) -> tuple[np.ndarray, np.ndarray]:
    if not parsed.node_blocks:
        return np.empty(0, dtype=np.int64), np.empty((0, 3))

    ids = np.concatenate([block.node_ids for block in parsed.node_blocks])
    coords = np.concatenate([block.coords for block in parsed.node_blocks])
    order = np.argsort(ids, kind="stable")
    ids, coords = ids[order], coords[order]

    duplicated = ids[1:][ids[1:] == ids[:-1]]

    if duplicated.size:
        raise FemtetDuplicateNodeIdError(
            f"node ids defined more than once: {np.unique(duplicated)[:10].tolist()}",
            details={"duplicates": np.unique(duplicated).tolist()},
        )

    return ids, coords


def renumber_nodes(parsed: ParsedMesh) -> tuple[dict[int, int], np.ndarray]:
    """
    Compact sparse GMSH node ids into 1..nNodes, keeping ascending id order.

    Returns:
        Mapping from file id to dense 1-based index, and the nNodes x 3 coordinates
        whose row k-1 holds the node mapped to k.

    Raises:
        FemtetDuplicateNodeIdError: If a node id appears twice
    """

    ids, coords = _sorted_nodes(parsed)

    return {int(node_id): k + 1 for k, node_id in enumerate(ids)}, coords


def extract_mesh(parsed: ParsedMesh, m: int) -> Mesh:
    """
    Build the finite element mesh of degree m from parsed sections.

    Tetrahedra and boundary triangles keep their order of appearance in the file.
    Points and lines are discarded.

    Args:
        parsed: Output of parse_msh()
        m: Polynomial degree 1..4

    Raises:
        FemtetUnsupportedDegreeError: If m is outside 1..4
        FemtetMixedDegreesError: If surface/volume elements have different orders
        FemtetDegreeMismatchError: If their order differs from m
    """

    if not Config.MIN_DEGREE <= m <= Config.MAX_DEGREE:
        raise FemtetUnsupportedDegreeError(f"degree {m} is not supported (1..4)")

    fem_blocks = [block for block in parsed.element_blocks if block.entity_dim in (2, 3)]
    orders = {ELEMENT_TYPES[block.element_type].order for block in fem_blocks}

    if len(orders) > 1:
        raise FemtetMixedDegreesError(f"mesh mixes element orders {sorted(orders)}")

    if orders and orders != {m}:
        (found,) = orders
        raise FemtetDegreeMismatchError(f"mesh elements have order {found} but degree {m} was requested")

    ids, coord = _sorted_nodes(parsed)

    def to_dense(rows: np.ndarray) -> np.ndarray:
        return np.searchsorted(ids, rows).astype(np.int64)

    tets = [block for block in fem_blocks if block.entity_dim == 3]
    tris = [block for block in fem_blocks if block.entity_dim == 2]

    if not tets:
        raise FemtetMalformedSectionError("mesh contains no tetrahedra")

    ttrh = to_dense(np.concatenate([block.node_rows for block in tets]))
    domain = np.concatenate([np.full(len(block.element_ids), block.entity_tag, dtype=np.int64) for block in tets])

    if tris:
        trB = to_dense(np.concatenate([block.node_rows for block in tris]))
        domBd = np.concatenate([np.full(len(block.element_ids), block.entity_tag, dtype=np.int64) for block in tris])
    else:
        trB = np.empty((0, comb(m + 2, 2)), dtype=np.int64)
        domBd = np.empty(0, dtype=np.int64)

    group_index: dict[str, list[int]] = {}

    for group in parsed.groups:
        tags = {entity.tag for entity in parsed.entities.get(group.dim, []) if group.tag in entity.physical_tags}
        group_index[group.name] = sorted(tags | set(group_index.get(group.name, [])))

    mesh = Mesh(
        coord=coord,
        ttrh=ttrh,
        trB=trB,
        domain=domain,
        domBd=domBd,
        degree=m,
        groups=list(parsed.groups),
        group_index=group_index,
        node_ids=ids,
    )
    logger.debug("Extracted P%d mesh: %d nodes, %d tets, %d boundary triangles", m, mesh.n_nodes, mesh.n_ttrh, mesh.n_trb)

    return mesh


def read_mesh(path: str | PathLike, m: int) -> Mesh:
    """
    Read and extract a .msh file from disk.

    Raises:
        FemtetIOError: If the file cannot be read
    """

    file_path = Path(path).expanduser()

    try:
        raw = file_path.read_bytes()
    except OSError as e:
        raise FemtetIOError(f"Cannot read mesh file: {file_path.as_posix()}") from e

    return extract_mesh(parse_msh(raw.decode("latin-1")), m)
