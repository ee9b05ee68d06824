from collections.abc import Callable
from pathlib import Path
from typing import Any

import pytest
from orjson import OPT_INDENT_2, dumps

from femtet.msh_reader import Mesh, read_mesh
from meshing import write_cube


DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def sample_path() -> Path:
    return DATA / "sample.msh"


@pytest.fixture(scope="session")
def sample_mesh(sample_path: Path) -> Mesh:
    return read_mesh(sample_path, 1)


@pytest.fixture(scope="session")
def cube_path(tmp_path_factory: pytest.TempPathFactory) -> Callable[..., Path]:
    directory = tmp_path_factory.mktemp("cubes")

    def make(n: int, m: int = 1, sparse_ids: bool = False) -> Path:
        return write_cube(directory, n, m, sparse_ids)

    return make


@pytest.fixture
def write_config(tmp_path: Path) -> Callable[[dict[str, Any]], Path]:
    def write(data: dict[str, Any], name: str = "run.json") -> Path:
        path = tmp_path / name
        path.write_bytes(dumps(data, option=OPT_INDENT_2))
        return path

    return write
