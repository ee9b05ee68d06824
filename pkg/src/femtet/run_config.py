"""JSON run configuration: schema, loading and resolution against a mesh."""

from os import PathLike
from pathlib import Path
from typing import Any, Literal, Union

import numpy as np
from orjson import JSONDecodeError, loads
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .coeff_lang import CoefficientField
from .exceptions import FemtetConfigError, FemtetExpressionError, FemtetUnknownGroupError
from .mesh_model import resolve_groups
from .msh_reader import Mesh
from .solver import SolverConfig


ExprSpec = Union[float, str]
ScalarSpec = Union[float, str, dict[str, ExprSpec]]

DEFAULT_PIECE = "default"


def _check_expr(value: Any) -> Any:
    """Parse every expression string so that syntax errors surface at load time."""

    if isinstance(value, str):
        CoefficientField.scalar(value)
    elif isinstance(value, dict):
        for item in value.values():
            _check_expr(item)
    elif isinstance(value, list):
        for item in value:
            _check_expr(item)

    return value


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class CoefficientsConfig(_Section):
    kappa: ScalarSpec | list[ExprSpec] = 1.0
    beta: list[ExprSpec] = Field(default=[0.0, 0.0, 0.0], min_length=3, max_length=3)
    c: ScalarSpec = 0.0
    f: ScalarSpec = 0.0

    @field_validator("kappa")
    @classmethod
    def _kappa_entries(cls, value: Any) -> Any:
        if isinstance(value, list) and len(value) not in (1, 9):
            raise ValueError(f"kappa needs 1 or 9 entries, got {len(value)}")

        return _check_expr(value)

    @field_validator("beta", "c", "f")
    @classmethod
    def _expressions(cls, value: Any) -> Any:
        return _check_expr(value)


class DirichletConfig(_Section):
    groups: list[str] = Field(min_length=1)
    value: ScalarSpec = 0.0

    @field_validator("value")
    @classmethod
    def _expressions(cls, value: Any) -> Any:
        return _check_expr(value)


class RobinConfig(_Section):
    groups: list[str] | Literal["rest"] = "rest"
    alpha: ScalarSpec = 0.0
    g: ScalarSpec = 0.0
    flux: list[ExprSpec] | None = Field(default=None, min_length=3, max_length=3)

    @field_validator("alpha", "g", "flux")
    @classmethod
    def _expressions(cls, value: Any) -> Any:
        return _check_expr(value)


class BoundaryConfig(_Section):
    dirichlet: DirichletConfig | None = None
    robin: RobinConfig | None = None


class TransientConfig(_Section):
    rho_cp: ScalarSpec = 1.0
    t_start: float = 0.0
    t_end: float
    dt: float = Field(gt=0.0)
    initial: ScalarSpec = 0.0
    snapshot_every: int = Field(default=1, ge=1)

    @field_validator("rho_cp", "initial")
    @classmethod
    def _expressions(cls, value: Any) -> Any:
        return _check_expr(value)

    @model_validator(mode="after")
    def _interval(self) -> "TransientConfig":
        if self.t_end <= self.t_start:
            raise ValueError(f"t_end ({self.t_end}) must be greater than t_start ({self.t_start})")

        return self


class ErrorsConfig(_Section):
    exact: ExprSpec
    exact_grad: list[ExprSpec] = Field(min_length=3, max_length=3)

    @field_validator("exact", "exact_grad")
    @classmethod
    def _expressions(cls, value: Any) -> Any:
        return _check_expr(value)


class OutputConfig(_Section):
    vtk: str | None = None
    probes: list[tuple[float, float, float]] = []
    probe_csv: str | None = None
    errors: ErrorsConfig | None = None
    dump_dir: str | None = None

    @field_validator("vtk")
    @classmethod
    def _pattern(cls, value: str | None) -> str | None:
        if value is not None:
            try:
                value.format(step=0, t=0.0)
            except (KeyError, IndexError, ValueError) as e:
                raise ValueError(f"vtk pattern may only use {{step}} and {{t}}: {e}") from e

        return value


class QuadratureConfig(_Section):
    volume_degree: int | None = Field(default=None, ge=0)
    boundary_degree: int | None = Field(default=None, ge=0)


class RunConfig(_Section):
    """A complete run: mesh, degree, PDE data, boundary conditions, solver and outputs."""

    mesh_path: Path
    degree: int = Field(ge=1, le=4)
    coefficients: CoefficientsConfig = CoefficientsConfig()
    boundary: BoundaryConfig = BoundaryConfig()
    solver: SolverConfig = SolverConfig()
    transient: TransientConfig | None = None
    output: OutputConfig = OutputConfig()
    quadrature: QuadratureConfig = QuadratureConfig()

    def resolve_paths(self, base: Path) -> "RunConfig":
        """Copy with relative paths made absolute against base."""

        def absolute(value: str | Path | None) -> str | None:
            if value is None:
                return None

            path = Path(value).expanduser()
            return (path if path.is_absolute() else base / path).as_posix()

        output = self.output.model_copy(
            update={
                "vtk": absolute(self.output.vtk),
                "probe_csv": absolute(self.output.probe_csv),
                "dump_dir": absolute(self.output.dump_dir),
            }
        )

        return self.model_copy(update={"mesh_path": Path(absolute(self.mesh_path)), "output": output})


def parse_run_config(data: Any, base: str | PathLike = ".") -> RunConfig:
    """
    Validate decoded JSON.

    Raises:
        FemtetConfigError: For schema violations and invalid expressions
    """

    try:
        config = RunConfig.model_validate(data)
    except ValidationError as e:
        problems = "; ".join(f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in e.errors())
        raise FemtetConfigError(f"invalid run configuration: {problems}", details={"errors": e.errors()}) from e
    except FemtetExpressionError as e:
        raise FemtetConfigError(f"invalid expression: {e.message}") from e

    return config.resolve_paths(Path(base))


def load_run_config(path: str | PathLike) -> RunConfig:
    """
    Read, decode and validate a JSON run configuration.

    Relative paths inside the file resolve against its directory.

    Raises:
        FemtetConfigError: If the file is unreadable, not JSON or invalid
    """

    file_path = Path(path).expanduser()

    try:
        raw = file_path.read_bytes()
    except OSError as e:
        raise FemtetConfigError(f"Cannot read config file: {file_path.as_posix()}") from e

    try:
        data = loads(raw)
    except JSONDecodeError as e:
        raise FemtetConfigError(f"{file_path.name} is not valid JSON: {e}") from e

    return parse_run_config(data, file_path.resolve().parent)


def _group_tags(mesh: Mesh, names: list[str], where: str) -> list[int]:
    try:
        return resolve_groups(mesh, names)
    except FemtetUnknownGroupError as e:
        raise FemtetConfigError(f"{where}: {e.message}") from e


def scalar_field(spec: ScalarSpec, mesh: Mesh, where: str) -> CoefficientField:
    """
    Scalar field from a number, an expression or a `{group: expr}` object.

    Groups not listed fall back to the "default" entry, or 0 without one.

    Raises:
        FemtetConfigError: If a group name is not defined in the mesh
    """

    if not isinstance(spec, dict):
        return CoefficientField.scalar(spec)

    field = CoefficientField.scalar(spec.get(DEFAULT_PIECE, 0.0))
    pieces = {}

    for name, expr in spec.items():
        if name == DEFAULT_PIECE:
            continue

        piece = CoefficientField.scalar(expr)

        for tag in _group_tags(mesh, [name], where):
            pieces[tag] = piece

    return field.with_pieces(pieces)


def kappa_field(spec: ScalarSpec | list[ExprSpec], mesh: Mesh) -> CoefficientField:
    """Diffusion matrix field; scalar or piecewise scalar k means k times the identity."""

    if isinstance(spec, list):
        return CoefficientField.matrix(spec)

    scalar = scalar_field(spec, mesh, "coefficients.kappa")

    matrix = CoefficientField.matrix([scalar.entries[0]])
    pieces = {tag: CoefficientField.matrix([entries[0]]) for tag, entries in scalar.pieces.items()}

    return matrix.with_pieces(pieces)


def robin_rows(mesh: Mesh, gammaD: np.ndarray, config: BoundaryConfig) -> np.ndarray:
    """
    trB rows on the Robin boundary (0-based) after checking that every boundary tag is covered.

    Raises:
        FemtetConfigError: If boundary entity tags are claimed by neither condition
    """

    if config.robin is None:
        robin = np.zeros(mesh.n_trb, dtype=bool)
    elif config.robin.groups == "rest":
        robin = ~gammaD
    else:
        tags = _group_tags(mesh, config.robin.groups, "boundary.robin")
        robin = ~gammaD & np.isin(mesh.domBd, tags)

    uncovered = sorted({int(tag) for tag in mesh.domBd[~(gammaD | robin)]})

    if uncovered:
        raise FemtetConfigError(
            f"boundary entity tags {uncovered} are covered by neither Dirichlet nor Robin groups",
            details={"uncovered": uncovered},
        )

    return np.flatnonzero(robin)


def dirichlet_groups(mesh: Mesh, config: BoundaryConfig) -> list[str]:
    """Dirichlet group names after checking they exist."""

    if config.dirichlet is None:
        return []

    _group_tags(mesh, config.dirichlet.groups, "boundary.dirichlet")

    return list(config.dirichlet.groups)
