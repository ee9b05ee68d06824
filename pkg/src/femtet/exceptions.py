from typing import Any


class FemtetError(Exception):
    """Base exception for femtet errors."""

    def __init__(self, message: str, details: dict[str, Any] | None = None) -> None:
        self.message = message
        self.details = details or {}

        super().__init__(self.message)


class FemtetMeshError(FemtetError):
    """Exception raised while reading or interpreting a mesh file."""

    def __init__(self, message: str, line: int | None = None, details: dict[str, Any] | None = None) -> None:
        self.line = line

        if line is not None:
            message = f"line {line}: {message}"

        super().__init__(message, details)


class FemtetUnsupportedVersionError(FemtetMeshError):
    """Exception raised when the mesh file is not GMSH format 4.1."""

    pass


class FemtetBinaryNotSupportedError(FemtetMeshError):
    """Exception raised when the mesh file is stored in binary mode."""

    pass


class FemtetMalformedSectionError(FemtetMeshError):
    """Exception raised when a mesh section is truncated or its counts disagree."""

    pass


class FemtetUnsupportedElementTypeError(FemtetMeshError):
    """Exception raised for GMSH element type codes outside the accepted table."""

    pass


class FemtetDuplicateNodeIdError(FemtetMeshError):
    """Exception raised when a node id appears in more than one node block."""

    pass


class FemtetDegreeMismatchError(FemtetMeshError):
    """Exception raised when element types do not match the requested degree."""

    pass


class FemtetMixedDegreesError(FemtetMeshError):
    """Exception raised when a mesh mixes elements of different orders."""

    pass


class FemtetNonConformalError(FemtetMeshError):
    """Exception raised when a face is shared by three or more tetrahedra."""

    pass


class FemtetUnknownGroupError(FemtetMeshError):
    """Exception raised when a physical group name is not defined in the mesh."""

    pass


class FemtetElementError(FemtetError):
    """Exception raised for reference element, quadrature and geometry problems."""

    def __init__(self, message: str, element: int | None = None, details: dict[str, Any] | None = None) -> None:
        self.element = element

        super().__init__(message, details)


class FemtetUnsupportedDegreeError(FemtetElementError):
    """Exception raised for polynomial degrees outside 1..4."""

    pass


class FemtetDegreeTooHighError(FemtetElementError):
    """Exception raised when no quadrature rule reaches the requested exactness."""

    pass


class FemtetDegenerateElementError(FemtetElementError):
    """Exception raised when a tetrahedron has (numerically) zero volume."""

    pass


class FemtetNegativeOrientationError(FemtetElementError):
    """Exception raised when a tetrahedron has a negative Jacobian determinant."""

    pass


class FemtetExpressionError(FemtetError):
    """Exception raised while parsing or evaluating a coefficient expression."""

    def __init__(self, message: str, offset: int | None = None, details: dict[str, Any] | None = None) -> None:
        self.offset = offset

        if offset is not None:
            message = f"{message} (at offset {offset})"

        super().__init__(message, details)


class FemtetExpressionSyntaxError(FemtetExpressionError):
    """Exception raised for malformed expression text."""

    pass


class FemtetUnknownIdentifierError(FemtetExpressionError):
    """Exception raised for variables or functions outside the expression language."""

    pass


class FemtetNonFiniteValueError(FemtetExpressionError):
    """Exception raised when an evaluated coefficient is NaN or infinite."""

    pass


class FemtetAssemblyError(FemtetError):
    """Base exception for global operator assembly problems."""

    pass


class FemtetShapeMismatchError(FemtetAssemblyError):
    """Exception raised when assembled operators have incompatible shapes."""

    pass


class FemtetSolverError(FemtetError):
    """Base exception for linear solver failures."""

    pass


class FemtetNoConvergenceError(FemtetSolverError):
    """Exception raised when an iterative solver exhausts its iterations."""

    pass


class FemtetBreakdownError(FemtetSolverError):
    """Exception raised when BiCGSTAB breaks down."""

    pass


class FemtetSingularSystemError(FemtetSolverError):
    """Exception raised when the reduced system is singular."""

    pass


class FemtetDenseLimitError(FemtetSolverError):
    """Exception raised when the dense path is requested for a too large system."""

    pass


class FemtetOutputError(FemtetError):
    """Base exception for postprocessing and result export problems."""

    pass


class FemtetUnlocatedPointError(FemtetOutputError):
    """Exception raised when a point lies outside every tetrahedron."""

    pass


class FemtetIOError(FemtetOutputError):
    """Exception raised when a file cannot be read or written."""

    pass


class FemtetConfigError(FemtetError):
    """Exception raised for invalid run configurations."""

    pass
