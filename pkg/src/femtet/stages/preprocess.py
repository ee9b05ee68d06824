"""Mesh loading, geometry and boundary classification."""

from os import PathLike
from pathlib import Path
from time import perf_counter

from ..assembly import default_rule
from ..coeff_lang import CoefficientField
from ..exceptions import FemtetConfigError, FemtetUnknownGroupError
from ..mesh_model import (
    build_connectivity,
    classify_boundary,
    compute_geometry,
    compute_quality,
    match_boundary_faces,
    outward_unit_normals,
)
from ..msh_reader import Mesh, read_mesh
from ..quadrature import simplex_rule
from ..results import MeshReport, Problem, ProblemFields
from ..run_config import RunConfig, dirichlet_groups, kappa_field, robin_rows, scalar_field
from .base import StagesBase


class PreprocessStages(StagesBase):
    """Reading meshes and turning a run configuration into a Problem."""

    def load_mesh(self, path: str | PathLike, degree: int) -> Mesh:
        """
        Read a GMSH 4.1 ASCII file as a P_degree mesh.

        Args:
            path: Mesh file path (tilde expansion supported)
            degree: Polynomial degree 1..4

        Raises:
            FemtetIOError: If the file cannot be read
            FemtetMeshError: If the file is malformed or does not match the degree
        """

        started = perf_counter()
        mesh = read_mesh(path, degree)
        self._log_elapsed(f"Reading {Path(path).name}", started)

        return mesh

    def inspect_mesh(self, path: str | PathLike, degree: int) -> MeshReport:
        """
        Counts, volume, group table, face statistics and quality percentiles of a mesh file.

        Raises:
            FemtetMeshError: If the file cannot be parsed
            FemtetElementError: If an element is degenerate or inverted
        """

        mesh = self.load_mesh(path, degree)
        geom = compute_geometry(mesh)
        conn = build_connectivity(mesh)
        owners = match_boundary_faces(mesh, conn)

        return MeshReport.build(Path(path).as_posix(), mesh, geom, conn, compute_quality(mesh, geom), owners)

    def _resolve_fields(self, config: RunConfig, mesh: Mesh) -> ProblemFields:
        coefficients = config.coefficients
        robin = config.boundary.robin
        dirichlet = config.boundary.dirichlet
        transient = config.transient

        return ProblemFields(
            kappa=kappa_field(coefficients.kappa, mesh),
            beta=CoefficientField.vector(coefficients.beta),
            c=scalar_field(coefficients.c, mesh, "coefficients.c"),
            f=scalar_field(coefficients.f, mesh, "coefficients.f"),
            alpha=scalar_field(robin.alpha if robin else 0.0, mesh, "boundary.robin.alpha"),
            g=scalar_field(robin.g if robin else 0.0, mesh, "boundary.robin.g"),
            flux=CoefficientField.vector(robin.flux) if robin and robin.flux else None,
            dirichlet=scalar_field(dirichlet.value if dirichlet else 0.0, mesh, "boundary.dirichlet.value"),
            rho_cp=scalar_field(transient.rho_cp, mesh, "transient.rho_cp") if transient else None,
            initial=scalar_field(transient.initial, mesh, "transient.initial") if transient else None,
        )

    def prepare(self, config: RunConfig, mesh: Mesh | None = None) -> Problem:
        """
        Load the mesh and compute everything assembly needs.

        Args:
            config: Validated run configuration
            mesh: Already loaded mesh to reuse instead of config.mesh_path

        Raises:
            FemtetConfigError: If groups are unknown or the boundary is not fully covered
            FemtetMeshError: If the mesh is malformed
            FemtetElementError: If an element is degenerate or inverted
        """

        started = perf_counter()
        mesh = mesh if mesh is not None else self.load_mesh(config.mesh_path, config.degree)

        try:
            bc = classify_boundary(mesh, dirichlet_groups(mesh, config.boundary))
        except FemtetUnknownGroupError as e:
            raise FemtetConfigError(e.message) from e

        rows = robin_rows(mesh, bc.gammaD, config.boundary)
        fields = self._resolve_fields(config, mesh)
        geom = compute_geometry(mesh)
        conn = build_connectivity(mesh)
        normals = outward_unit_normals(mesh, geom, match_boundary_faces(mesh, conn))
        quadrature = config.quadrature
        volume_rule = (
            simplex_rule("tetrahedron", quadrature.volume_degree)
            if quadrature.volume_degree is not None
            else default_rule("tetrahedron", mesh.degree)
        )
        boundary_rule = (
            simplex_rule("triangle", quadrature.boundary_degree)
            if quadrature.boundary_degree is not None
            else default_rule("triangle", mesh.degree)
        )

        problem = Problem(
            config=config,
            mesh=mesh,
            geom=geom,
            conn=conn,
            bc=bc,
            robin_rows=rows,
            normals=normals,
            fields=fields,
            volume_rule=volume_rule,
            boundary_rule=boundary_rule,
        )
        self._log_elapsed("Preprocessing", started)

        return problem
