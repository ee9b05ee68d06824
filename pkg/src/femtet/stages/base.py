"""Base class shared by all pipeline stages."""

from concurrent.futures import Executor
from logging import getLogger
from time import perf_counter
from typing import TYPE_CHECKING

import numpy as np
from humanize import precisedelta
from scipy import sparse


if TYPE_CHECKING:
    from ..results import Problem


logger = getLogger(__name__)


class StagesBase:
    """Hooks every stage mixin relies on."""

    def _executor(self) -> Executor | None:
        """Worker pool for element-parallel assembly."""

        ...

    def assemble_rhs(self, problem: "Problem", t: float) -> tuple[np.ndarray, np.ndarray]:
        """Load and Robin vectors at time t."""

        ...

    def assemble_capacity(self, problem: "Problem") -> sparse.csr_matrix:
        """Mass matrix of the transient term."""

        ...

    def _log_elapsed(self, what: str, started: float) -> None:
        logger.info("%s took %s", what, precisedelta(perf_counter() - started, minimum_unit="milliseconds"))
