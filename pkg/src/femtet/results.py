"""Records passed between pipeline stages and returned to callers."""

from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import sparse

from .assembly import combine_system
from .coeff_lang import CoefficientField
from .mesh_model import BoundaryClassification, Connectivity, GeometryCache, QualityReport
from .msh_reader import Mesh
from .postprocess import LocatedPoints
from .quadrature import QuadratureRule
from .run_config import RunConfig
from .solver import Solution


class ProblemFields(BaseModel):
    """Coefficient and boundary data resolved against the mesh's physical groups."""

    model_config = ConfigDict(frozen=True)

    kappa: CoefficientField
    beta: CoefficientField
    c: CoefficientField
    f: CoefficientField
    alpha: CoefficientField
    g: CoefficientField
    flux: CoefficientField | None = None
    dirichlet: CoefficientField
    rho_cp: CoefficientField | None = None
    initial: CoefficientField | None = None

    @property
    def time_dependent_load(self) -> bool:
        """Whether the right-hand side must be re-assembled at every time step."""

        return self.f.depends_on("t") or self.g.depends_on("t") or (self.flux is not None and self.flux.depends_on("t"))

    @property
    def time_dependent_operator(self) -> bool:
        return any(field.depends_on("t") for field in (self.kappa, self.beta, self.c, self.alpha))


class Problem(BaseModel):
    """Everything the assembly and solve stages need, computed once per mesh."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    config: RunConfig
    mesh: Mesh
    geom: GeometryCache
    conn: Connectivity
    bc: BoundaryClassification
    robin_rows: np.ndarray
    normals: np.ndarray
    fields: ProblemFields
    volume_rule: QuadratureRule
    boundary_rule: QuadratureRule

    @property
    def t_start(self) -> float:
        return self.config.transient.t_start if self.config.transient else 0.0


class Operators(BaseModel):
    """Assembled global matrices and vectors."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    S: sparse.csr_matrix
    M: sparse.csr_matrix
    A: sparse.csr_matrix
    R: sparse.csr_matrix
    b: np.ndarray
    t: np.ndarray

    @property
    def system(self) -> tuple[sparse.csr_matrix, np.ndarray]:
        """Combined (C, d)."""

        return combine_system(self.S, self.R, self.A, self.M, self.b, self.t)


class ProbeResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    located: LocatedPoints
    values: np.ndarray


class RunResult(BaseModel):
    """Outcome of one pipeline run."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    problem: Problem
    operators: Operators
    snapshots: list[Solution]
    probes: ProbeResult | None = None
    errors: tuple[float, float] | None = None
    written: list[Path] = []

    @property
    def solution(self) -> Solution:
        """Steady solution or the last time step."""

        return self.snapshots[-1]

    @property
    def is_transient(self) -> bool:
        return self.problem.config.transient is not None


class GroupSummary(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    dim: int
    tag: int
    entities: int
    elements: int


class MeshReport(BaseModel):
    """Summary printed by `femtet inspect`."""

    model_config = ConfigDict(frozen=True)

    path: str
    degree: int
    n_nodes: int
    n_ttrh: int
    n_trb: int
    volume: float
    n_faces: int
    n_interior_faces: int
    n_boundary_faces: int
    unmatched_boundary_triangles: int
    groups: list[GroupSummary]
    h_min: float
    h_max: float
    chunkiness_percentiles: dict[str, float]

    @classmethod
    def build(
        cls,
        path: str,
        mesh: Mesh,
        geom: GeometryCache,
        conn: Connectivity,
        quality: QualityReport,
        owners: np.ndarray,
    ) -> "MeshReport":
        groups = []

        for group in mesh.groups:
            tags = mesh.group_index.get(group.name, [])

            if group.dim == 3:
                elements = int(np.isin(mesh.domain, tags).sum())
            elif group.dim == 2:
                elements = int(np.isin(mesh.domBd, tags).sum())
            else:
                elements = 0

            groups.append(GroupSummary(name=group.name, dim=group.dim, tag=group.tag, entities=len(tags), elements=elements))

        ratios = quality.h_K / quality.rho_K
        percentiles = {f"p{p}": float(np.percentile(ratios, p)) for p in (50, 90, 99)}
        percentiles["max"] = quality.chunkiness

        return cls(
            path=path,
            degree=mesh.degree,
            n_nodes=mesh.n_nodes,
            n_ttrh=mesh.n_ttrh,
            n_trb=mesh.n_trb,
            volume=geom.volume,
            n_faces=conn.n_faces,
            n_interior_faces=conn.n_faces - conn.n_boundary_faces,
            n_boundary_faces=conn.n_boundary_faces,
            unmatched_boundary_triangles=int((owners < 0).sum()),
            groups=groups,
            h_min=float(quality.h_K.min()),
            h_max=quality.h,
            chunkiness_percentiles=percentiles,
        )

    @property
    def summary_line(self) -> str:
        return f"nodes {self.n_nodes}, tets {self.n_ttrh}, boundary tris {self.n_trb}, volume {self.volume:.7f}"
