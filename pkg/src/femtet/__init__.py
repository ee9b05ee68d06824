from .coeff_lang import CoefficientField, eval_batch, parse_expr
from .exceptions import (
    FemtetConfigError,
    FemtetElementError,
    FemtetError,
    FemtetExpressionError,
    FemtetIOError,
    FemtetMeshError,
    FemtetSolverError,
)
from .msh_reader import Mesh, read_mesh
from .results import RunResult
from .run_config import RunConfig, load_run_config
from .session import Femtet
from .solver import Solution, SolverConfig


__all__ = [
    "CoefficientField",
    "Femtet",
    "FemtetConfigError",
    "FemtetElementError",
    "FemtetError",
    "FemtetExpressionError",
    "FemtetIOError",
    "FemtetMeshError",
    "FemtetSolverError",
    "Mesh",
    "RunConfig",
    "RunResult",
    "Solution",
    "SolverConfig",
    "eval_batch",
    "load_run_config",
    "parse_expr",
    "read_mesh",
]
