from concurrent.futures import Executor, ThreadPoolExecutor
from logging import getLogger
from os import PathLike
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, PrivateAttr

from .config import Config
from .exceptions import FemtetConfigError
from .mesh_model import compute_quality
from .results import RunResult
from .run_config import RunConfig, load_run_config
from .stages import Stages


logger = getLogger(__name__)


class Femtet(Stages, BaseModel):
    """Pipeline facade: parse, preprocess, assemble, solve and write outputs."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    threads: int | None = Field(default=None, ge=1)

    _pool: ThreadPoolExecutor | None = PrivateAttr(default=None)

    def _executor(self) -> Executor | None:
        workers = self.threads or Config.worker_count()

        if workers < 2:
            return None

        if self._pool is None:
            self._pool = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="femtet")

        return self._pool

    def close(self) -> None:
        """Shut down the worker pool."""

        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None

    def __enter__(self) -> "Femtet":
        """Enter context manager."""

        return self

    def __exit__(self, exc_type: Any, exc_val: Any, exc_tb: Any) -> None:
        """Exit context manager and shut down the pool."""

        self.close()

    def run(self, config: RunConfig | str | PathLike, write: bool = True) -> RunResult:
        """
        Run the whole pipeline for one configuration.

        Solves the steady problem, or steps in time when a transient block is present,
        then evaluates probes and error norms and writes the configured files.

        Args:
            config: Run configuration or path to its JSON file
            write: Write VTK, probe CSV and operator dumps

        Raises:
            FemtetConfigError: For invalid configurations
            FemtetError: For any failure of a later stage
        """

        if not isinstance(config, RunConfig):
            config = load_run_config(config)

        problem = self.prepare(config)
        operators = self.assemble(problem)

        if config.transient is None:
            snapshots = [self.solve_steady(problem, operators)]
        else:
            snapshots = self.solve_transient(problem, operators)

        result = RunResult(problem=problem, operators=operators, snapshots=snapshots)

        if config.output.probes:
            result.probes = self.probe(problem, result.solution, config.output.probes)

        if config.output.errors is not None:
            result.errors = self.compute_errors(problem, result.solution)
            logger.info("L2 error %.6e, H1 seminorm error %.6e", *result.errors)

        if write:
            written = self.write_snapshots(problem, snapshots) + self.dump_operators(problem, operators)

            if result.probes is not None and (probe_path := self.write_probes(problem, result.probes)) is not None:
                written.append(probe_path)

            result.written = written

        return result

    def convergence(
        self, config: RunConfig | str | PathLike, meshes: list[str | PathLike]
    ) -> list[tuple[float, int, float, float]]:
        """
        Solve on each mesh and collect (h, nNodes, L2, H1semi), coarse to fine as given.

        Args:
            config: Run configuration with an output.errors block
            meshes: Mesh files replacing config.mesh_path

        Raises:
            FemtetConfigError: If output.errors is missing
        """

        if not isinstance(config, RunConfig):
            config = load_run_config(config)

        if config.output.errors is None:
            raise FemtetConfigError("convergence needs an output.errors block with the exact solution")

        rows = []

        for level, mesh_path in enumerate(meshes, start=1):
            level_config = config.model_copy(update={"mesh_path": Path(mesh_path)})
            result = self.run(level_config, write=False)
            problem = result.problem
            h = compute_quality(problem.mesh, problem.geom).h
            rows.append((h, problem.mesh.n_nodes, *result.errors))
            logger.info("Level %d: h=%.4g, %d nodes, L2 %.3e, H1 %.3e", level, h, problem.mesh.n_nodes, *result.errors)

        return rows
