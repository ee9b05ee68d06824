from io import StringIO

import numpy as np
import pytest

from femtet.coeff_lang import CoefficientField
from femtet.config import Config
from femtet.exceptions import FemtetIOError, FemtetShapeMismatchError, FemtetUnlocatedPointError
from femtet.mesh_model import compute_geometry
from femtet.msh_reader import read_mesh
from femtet.postprocess import (
    NOT_FOUND,
    build_eval_matrix,
    error_norms,
    locate_points,
    observed_rates,
    read_points_csv,
    write_error_table,
    write_probe_csv,
    write_vtk,
)
from femtet.solver import Solution


def test_locate_inside_points(sample_mesh):
    geom = compute_geometry(sample_mesh)
    points = np.array([[0.1, 0.1, 0.1], [0.2, 0.3, 0.4], [0.05, 0.6, 0.05]])
    located = locate_points(sample_mesh, geom, points)

    assert located.all_found

    for point, element, lam in zip(points, located.element, located.lambdas):
        vertices = sample_mesh.coord[sample_mesh.ttrh[element, :4]]
        assert lam.sum() == pytest.approx(1.0)
        assert np.all(lam >= 0)
        np.testing.assert_allclose(lam @ vertices, point, atol=1e-12)


def test_shared_vertex_takes_lowest_element(sample_mesh):
    located = locate_points(sample_mesh, compute_geometry(sample_mesh), np.array([[0.0, 0.0, 0.0]]))

    assert located.element[0] == 0


def test_point_just_outside_is_accepted(sample_mesh):
    located = locate_points(sample_mesh, compute_geometry(sample_mesh), np.array([[-1e-10, 0.2, 0.2]]))

    assert located.all_found
    assert located.lambdas.min() >= 0.0


def test_outside_point(sample_mesh):
    located = locate_points(sample_mesh, compute_geometry(sample_mesh), np.array([[0.1, 0.1, 0.1], [2.0, 2.0, 2.0]]))

    assert located.element[1] == NOT_FOUND
    assert located.found.tolist() == [True, False]

    with pytest.raises(FemtetUnlocatedPointError) as error:
        build_eval_matrix(sample_mesh, located)

    assert error.value.details["points"] == [2]


def test_bounding_box_prefilter_agrees(cube_path, monkeypatch):
    mesh = read_mesh(cube_path(3), 1)
    geom = compute_geometry(mesh)
    points = np.random.default_rng(3).random((40, 3))
    points[:5] = np.array([[0, 0, 0], [1, 1, 1], [0.5, 0.5, 0.5], [1 / 3, 1 / 3, 1 / 3], [1.5, 0, 0]])
    plain = locate_points(mesh, geom, points)

    monkeypatch.setattr(Config, "BBOX_PREFILTER_MIN_ELEMENTS", 0)
    boxed = locate_points(mesh, geom, points)

    np.testing.assert_array_equal(plain.element, boxed.element)
    np.testing.assert_allclose(plain.lambdas, boxed.lambdas, atol=1e-14)
    assert plain.element[4] == NOT_FOUND


@pytest.mark.parametrize("m", [1, 2, 3])
def test_evaluation_reproduces_polynomials(cube_path, m):
    mesh = read_mesh(cube_path(2, m), m)
    x, y, z = mesh.coord.T
    u = x**m + 2 * y * z ** (m - 1) - z
    points = np.random.default_rng(m).random((30, 3))
    matrix = build_eval_matrix(mesh, locate_points(mesh, compute_geometry(mesh), points))
    px, py, pz = points.T

    np.testing.assert_allclose(matrix.evaluate(u), px**m + 2 * py * pz ** (m - 1) - pz, atol=1e-12)
    np.testing.assert_allclose(matrix.evaluate(Solution(u=u, iterations=0, residual=0.0)), matrix.matrix @ u)


def test_error_of_zero_against_one(sample_mesh):
    l2, h1 = error_norms(sample_mesh, compute_geometry(sample_mesh), np.zeros(7), CoefficientField.scalar(1.0))

    assert l2 == pytest.approx(np.sqrt(1 / 6))
    assert h1 == 0.0


@pytest.mark.parametrize("m", [1, 2])
def test_interpolated_polynomial_has_no_error(cube_path, m):
    mesh = read_mesh(cube_path(2, m), m)
    x, y, z = mesh.coord.T
    u = x * y ** (m - 1) + z
    exact = CoefficientField.scalar("x*y^" + str(m - 1) + " + z")
    grad = CoefficientField.vector(["y^" + str(m - 1), f"{m - 1}*x*y^{max(m - 2, 0)}", 1])
    l2, h1 = error_norms(mesh, compute_geometry(mesh), u, exact, grad)

    assert l2 < 1e-13
    assert h1 < 1e-12


def test_seminorm_without_exact_gradient(cube_path):
    mesh = read_mesh(cube_path(1), 1)
    _, h1 = error_norms(mesh, compute_geometry(mesh), mesh.coord[:, 0] + mesh.coord[:, 1], CoefficientField.scalar(0))

    assert h1 == pytest.approx(np.sqrt(2.0))


def test_error_norms_shape_check(sample_mesh):
    with pytest.raises(FemtetShapeMismatchError):
        error_norms(sample_mesh, compute_geometry(sample_mesh), np.zeros(5), CoefficientField.scalar(0))


def test_vtk_layout(sample_mesh, tmp_path):
    path = write_vtk(sample_mesh, {"u": np.arange(7.0)}, tmp_path / "out" / "u.vtk", title="sample")
    lines = path.read_text().splitlines()

    assert lines[:5] == ["# vtk DataFile Version 3.0", "sample", "ASCII", "DATASET UNSTRUCTURED_GRID", "POINTS 7 double"]
    assert "CELLS 4 20" in lines
    assert lines[lines.index("CELLS 4 20") + 1] == "4 4 5 0 3"
    assert "CELL_TYPES 4" in lines
    assert lines[lines.index("CELL_TYPES 4") + 1 :][:4] == ["10"] * 4
    assert lines[lines.index("POINT_DATA 7") + 1 : lines.index("POINT_DATA 7") + 3] == [
        "SCALARS u double 1",
        "LOOKUP_TABLE default",
    ]
    assert lines[-1] == "6"


def test_vtk_high_order_writes_vertex_cells(cube_path, tmp_path):
    mesh = read_mesh(cube_path(1, 2), 2)
    lines = write_vtk(mesh, {}, tmp_path / "p2.vtk").read_text().splitlines()

    assert f"POINTS {mesh.n_nodes} double" in lines
    assert "CELLS 6 30" in lines
    assert not any(line.startswith("POINT_DATA") for line in lines)


@pytest.mark.parametrize("fields", [{"two words": np.zeros(7)}, {"u": np.zeros(6)}])
def test_vtk_rejects_bad_fields(sample_mesh, tmp_path, fields):
    with pytest.raises(FemtetShapeMismatchError):
        write_vtk(sample_mesh, fields, tmp_path / "bad.vtk")


def test_vtk_unwritable(sample_mesh, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")

    with pytest.raises(FemtetIOError):
        write_vtk(sample_mesh, {"u": np.zeros(7)}, blocker / "u.vtk")


def test_read_points_csv(tmp_path):
    path = tmp_path / "points.csv"
    path.write_text("x,y,z\n0.1, 0.2, 0.3\n\n1,2,3\n")

    np.testing.assert_allclose(read_points_csv(path), [[0.1, 0.2, 0.3], [1, 2, 3]])


def test_read_points_csv_errors(tmp_path):
    path = tmp_path / "points.csv"
    path.write_text("0,0,0\n1,2\n")

    with pytest.raises(FemtetIOError, match="points.csv:2"):
        read_points_csv(path)

    with pytest.raises(FemtetIOError):
        read_points_csv(tmp_path / "missing.csv")


def test_probe_csv(sample_mesh):
    located = locate_points(sample_mesh, compute_geometry(sample_mesh), np.array([[0.0, 0.0, 0.0]]))
    handle = StringIO()
    write_probe_csv(located, np.array([0.25]), handle)

    assert handle.getvalue().splitlines() == ["x,y,z,element,value", "0,0,0,1,0.25"]


def test_observed_rates():
    rates = observed_rates([1.0, 0.5, 0.25], [1.0, 0.25, 0.0625])

    assert rates[0] is None
    assert rates[1:] == pytest.approx([2.0, 2.0])
    assert observed_rates([1.0, 0.5], [1.0, 0.0]) == [None, None]


def test_error_table():
    handle = StringIO()
    table = write_error_table([(0.5, 27, 1e-2, 1e-1), (0.25, 125, 2.5e-3, 5e-2)], handle)
    lines = handle.getvalue().splitlines()

    assert lines[0] == "level,h,nNodes,L2,H1semi,rate_L2,rate_H1"
    assert lines[1] == "1,0.5,27,1.000000e-02,1.000000e-01,,"
    assert lines[2] == "2,0.25,125,2.500000e-03,5.000000e-02,2,1"
    assert table[1]["rate_L2"] == pytest.approx(2.0)
