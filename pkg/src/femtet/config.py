"""femtet configuration."""

from logging import getLogger
from os import cpu_count, environ


logger = getLogger(__name__)


class Config:
    """Central configuration for femtet."""

    SUPPORTED_MSH_VERSION: str = "4.1"
    MIN_DEGREE: int = 1
    MAX_DEGREE: int = 4

    DEGENERATE_RELATIVE_TOL: float = 1e-14
    LOCATE_TOL: float = 1e-12
    LOCATE_RETRY_TOL: float = 1e-8
    BBOX_PREFILTER_MIN_ELEMENTS: int = 10_000

    SYMMETRY_TOL: float = 1e-12
    DEFAULT_SOLVER_METHOD: str = "auto"
    DEFAULT_PRECONDITIONER: str = "jacobi"
    DEFAULT_TOL: float = 1e-10
    DEFAULT_MAX_ITER: int = 10_000
    DENSE_MAX_NODES: int = 2000

    NO_OWNER: int = -1
    ASSEMBLY_CHUNK: int = 4096

    THREADS_ENV: str = "FEMTET_THREADS"

    @classmethod
    def worker_count(cls) -> int:
        """Number of assembly workers, capped by FEMTET_THREADS when set."""

        available = cpu_count() or 1
        raw = environ.get(cls.THREADS_ENV)

        if raw is None:
            return available

        try:
            requested = int(raw)
        except ValueError:
            logger.warning("Ignoring %s=%r: not an integer", cls.THREADS_ENV, raw)
            return available

        if requested < 1:
            logger.warning("Ignoring %s=%r: must be positive", cls.THREADS_ENV, raw)
            return available

        return min(requested, available)
