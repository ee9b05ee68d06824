from pathlib import Path

import numpy as np
import pytest

from femtet.exceptions import FemtetConfigError
from femtet.mesh_model import classify_boundary
from femtet.run_config import (
    BoundaryConfig,
    dirichlet_groups,
    kappa_field,
    load_run_config,
    parse_run_config,
    robin_rows,
    scalar_field,
)


MINIMAL = {"mesh_path": "sample.msh", "degree": 1}


def _boundary(**values) -> BoundaryConfig:
    return parse_run_config({**MINIMAL, "boundary": values}).boundary


def test_defaults(tmp_path):
    config = parse_run_config(MINIMAL, tmp_path)

    assert config.mesh_path == tmp_path / "sample.msh"
    assert config.coefficients.kappa == 1.0
    assert config.coefficients.beta == [0.0, 0.0, 0.0]
    assert config.transient is None
    assert config.boundary.dirichlet is None
    assert config.solver.method == "auto"


def test_full_config(tmp_path):
    config = parse_run_config(
        {
            "mesh_path": "/meshes/cube.msh",
            "degree": 2,
            "coefficients": {"kappa": [1, 0, 0, 0, 2, 0, 0, 0, "1+x"], "beta": [1, "y", 0], "f": {"Volume1": "x"}},
            "boundary": {
                "dirichlet": {"groups": ["DirichletCondition"], "value": "t*x"},
                "robin": {"groups": ["NeumannCondition"], "alpha": 5, "g": 135, "flux": [0, 0, "z"]},
            },
            "solver": {"method": "bicgstab", "tol": 1e-10},
            "transient": {"t_end": 1.0, "dt": 0.1, "snapshot_every": 5},
            "output": {
                "vtk": "out/u_{step:04d}.vtk",
                "probes": [[0.1, 0.1, 0.1]],
                "probe_csv": "probes.csv",
                "errors": {"exact": "x", "exact_grad": [1, 0, 0]},
                "dump_dir": "/dumps",
            },
            "quadrature": {"volume_degree": 6},
        },
        tmp_path,
    )

    assert config.mesh_path == Path("/meshes/cube.msh")
    assert config.output.vtk == (tmp_path / "out/u_{step:04d}.vtk").as_posix()
    assert config.output.probe_csv == (tmp_path / "probes.csv").as_posix()
    assert config.output.dump_dir == "/dumps"
    assert config.output.probes == [(0.1, 0.1, 0.1)]
    assert config.transient.snapshot_every == 5
    assert config.quadrature.boundary_degree is None


@pytest.mark.parametrize(
    "data",
    [
        {"degree": 1},
        {**MINIMAL, "degree": 5},
        {**MINIMAL, "degree": 0},
        {**MINIMAL, "unknown": True},
        {**MINIMAL, "solver": {"method": "gmres"}},
        {**MINIMAL, "coefficients": {"kappa": [1, 2]}},
        {**MINIMAL, "coefficients": {"beta": [1, 2]}},
        {**MINIMAL, "coefficients": {"sigma": 1}},
        {**MINIMAL, "boundary": {"dirichlet": {"groups": []}}},
        {**MINIMAL, "boundary": {"robin": {"groups": "others"}}},
        {**MINIMAL, "transient": {"t_end": 1.0, "dt": 0.0}},
        {**MINIMAL, "transient": {"t_start": 1.0, "t_end": 1.0, "dt": 0.1}},
        {**MINIMAL, "transient": {"t_end": 1.0, "dt": 0.1, "snapshot_every": 0}},
        {**MINIMAL, "output": {"vtk": "u_{name}.vtk"}},
        {**MINIMAL, "output": {"errors": {}}},
        {**MINIMAL, "output": {"errors": {"exact": "x"}}},
        {**MINIMAL, "output": {"errors": {"exact": "x", "exact_grad": [1, 0]}}},
        {**MINIMAL, "quadrature": {"volume_degree": -1}},
    ],
)
def test_schema_violations(data):
    with pytest.raises(FemtetConfigError):
        parse_run_config(data)


@pytest.mark.parametrize(
    "section",
    [
        {"coefficients": {"f": "x +"}},
        {"coefficients": {"c": {"Volume1": "w"}}},
        {"boundary": {"robin": {"g": "sin("}}},
        {"output": {"errors": {"exact": "x", "exact_grad": [1, "2*", 0]}}},
        {"transient": {"t_end": 1.0, "dt": 0.1, "initial": "foo(x)"}},
    ],
)
def test_bad_expressions(section):
    with pytest.raises(FemtetConfigError):
        parse_run_config({**MINIMAL, **section})


def test_error_lists_location():
    with pytest.raises(FemtetConfigError, match="transient"):
        parse_run_config({**MINIMAL, "transient": {"t_start": 2.0, "t_end": 1.0, "dt": 0.1}})


def test_load_resolves_against_file(write_config):
    path = write_config({**MINIMAL, "output": {"vtk": "u.vtk"}})
    config = load_run_config(path)

    assert config.mesh_path == path.resolve().parent / "sample.msh"
    assert config.output.vtk == (path.resolve().parent / "u.vtk").as_posix()


def test_load_failures(tmp_path):
    broken = tmp_path / "broken.json"
    broken.write_text("{degree: 1")

    with pytest.raises(FemtetConfigError, match="not valid JSON"):
        load_run_config(broken)

    with pytest.raises(FemtetConfigError, match="Cannot read"):
        load_run_config(tmp_path / "missing.json")


def test_scalar_field_forms(sample_mesh):
    points = np.zeros((2, 3))
    tags = np.array([1, 5])

    np.testing.assert_allclose(scalar_field(3.0, sample_mesh, "c").evaluate(points, 0.0, tags), 3.0)
    np.testing.assert_allclose(scalar_field("2 + t", sample_mesh, "c").evaluate(points, 1.0, tags), 3.0)

    pieces = scalar_field({"Volume1": 7, "default": 2}, sample_mesh, "c")
    np.testing.assert_allclose(pieces.evaluate(points, 0.0, tags), [7.0, 2.0])

    without_default = scalar_field({"Volume1": 7}, sample_mesh, "c")
    np.testing.assert_allclose(without_default.evaluate(points, 0.0, tags), [7.0, 0.0])


def test_scalar_field_unknown_group(sample_mesh):
    with pytest.raises(FemtetConfigError, match="coefficients.f"):
        scalar_field({"Nowhere": 1}, sample_mesh, "coefficients.f")


def test_kappa_field(sample_mesh):
    points = np.zeros((2, 3))
    tags = np.array([1, 2])

    isotropic = kappa_field({"Volume1": 4, "default": 1}, sample_mesh).evaluate(points, 0.0, tags)
    np.testing.assert_allclose(isotropic[0], 4 * np.eye(3))
    np.testing.assert_allclose(isotropic[1], np.eye(3))

    full = kappa_field([1, 0, 0, 0, 2, 0, 0, 0, 3], sample_mesh).evaluate(points, 0.0, tags)
    np.testing.assert_allclose(full[0], np.diag([1.0, 2.0, 3.0]))


def test_robin_rows(sample_mesh):
    gammaD = classify_boundary(sample_mesh, ["DirichletCondition"]).gammaD
    dirichlet = {"groups": ["DirichletCondition"]}

    rest = robin_rows(sample_mesh, gammaD, _boundary(dirichlet=dirichlet, robin={}))
    named = robin_rows(sample_mesh, gammaD, _boundary(dirichlet=dirichlet, robin={"groups": ["NeumannCondition"]}))

    np.testing.assert_array_equal(rest, [0, 1, 2, 3, 4, 5])
    np.testing.assert_array_equal(named, rest)


def test_robin_rows_must_cover_boundary(sample_mesh):
    gammaD = classify_boundary(sample_mesh, ["DirichletCondition"]).gammaD
    boundary = _boundary(dirichlet={"groups": ["DirichletCondition"]}, robin={"groups": ["SolutionAtSurface"]})

    with pytest.raises(FemtetConfigError) as error:
        robin_rows(sample_mesh, gammaD, boundary)

    assert error.value.details["uncovered"] == [1, 2]


def test_boundary_without_conditions_is_rejected(sample_mesh):
    gammaD = classify_boundary(sample_mesh, []).gammaD

    with pytest.raises(FemtetConfigError):
        robin_rows(sample_mesh, gammaD, _boundary())


def test_dirichlet_groups(sample_mesh):
    assert dirichlet_groups(sample_mesh, _boundary()) == []
    assert dirichlet_groups(sample_mesh, _boundary(dirichlet={"groups": ["DirichletCondition"]})) == [
        "DirichletCondition"
    ]

    with pytest.raises(FemtetConfigError):
        dirichlet_groups(sample_mesh, _boundary(dirichlet={"groups": ["Missing"]}))
