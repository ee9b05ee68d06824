from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from femtet.assembly import assemble_mass
from femtet.coeff_lang import CoefficientField
from femtet.config import Config
from femtet.exceptions import FemtetConfigError, FemtetUnlocatedPointError
from femtet.postprocess import error_norms, observed_rates
from femtet.run_config import parse_run_config
from femtet.session import Femtet
from meshing import SIDES


def _cube_config(mesh_path, degree=1, **sections):
    data = {"mesh_path": str(mesh_path), "degree": degree, "solver": {"method": "direct"}}
    data.update(sections)

    return parse_run_config(data)


def _patch_sections(m: int) -> dict:
    p = "(1 + (x + 2*y + 3*z)/6)"
    u = f"{p}^{m}"
    grad = [f"{m}*{p}^{m - 1}*{k}/6" for k in (1, 2, 3)]

    return {
        "coefficients": {
            "kappa": 1,
            "beta": [1, 2, 3],
            "c": 1,
            "f": f"-{m * (m - 1)}*(14/36)*{p}^{max(m - 2, 0)} + {m}*(14/6)*{p}^{m - 1} + {u}",
        },
        "boundary": {
            "dirichlet": {"groups": ["x0", "y0", "z0"], "value": u},
            "robin": {"groups": "rest", "alpha": 1, "g": u, "flux": grad},
        },
        "output": {"errors": {"exact": u, "exact_grad": grad}},
    }


def test_steady_constant_on_sample(sample_path):
    config = parse_run_config(
        {
            "mesh_path": str(sample_path),
            "degree": 1,
            "boundary": {"dirichlet": {"groups": ["DirichletCondition"], "value": 2.5}, "robin": {}},
            "output": {"probes": [[0.1, 0.1, 0.1]]},
        }
    )

    with Femtet() as femtet:
        result = femtet.run(config)

    np.testing.assert_allclose(result.solution.u, 2.5)
    np.testing.assert_allclose(result.probes.values, [2.5])
    assert not result.is_transient
    assert result.errors is None
    assert result.written == []


@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_polynomial_patch(cube_path, m):
    config = _cube_config(cube_path(3, m), m, **_patch_sections(m))

    with Femtet() as femtet:
        result = femtet.run(config, write=False)

    l2, h1 = result.errors
    assert l2 < 1e-8
    assert h1 < 1e-8


def test_patch_with_iterative_solver(cube_path):
    sections = {**_patch_sections(2), "solver": {"method": "auto", "tol": 1e-12}}
    config = _cube_config(cube_path(3, 2), 2, **sections)

    with Femtet() as femtet:
        result = femtet.run(config, write=False)

    assert result.solution.iterations > 0
    assert result.errors[0] < 1e-8


def test_threaded_assembly_matches_serial(cube_path, monkeypatch):
    monkeypatch.setattr(Config, "ASSEMBLY_CHUNK", 16)
    config = _cube_config(cube_path(2, 2), 2, **_patch_sections(2))

    with Femtet(threads=1) as serial, Femtet(threads=3) as threaded:
        one = serial.run(config, write=False)
        many = threaded.run(config, write=False)

    np.testing.assert_allclose(many.solution.u, one.solution.u, atol=1e-12)
    assert abs(many.operators.S - one.operators.S).max() < 1e-12


def test_single_thread_session_never_starts_a_pool(cube_path, monkeypatch):
    def refuse(self, *args, **kwargs):
        raise AssertionError("thread pool started")

    monkeypatch.setattr(Config, "ASSEMBLY_CHUNK", 4)
    monkeypatch.setattr(Config, "worker_count", classmethod(lambda cls: 4))
    monkeypatch.setattr(ThreadPoolExecutor, "__init__", refuse)
    config = _cube_config(cube_path(2, 2), 2, **_patch_sections(2))

    with Femtet(threads=1) as femtet:
        result = femtet.run(config, write=False)

    assert result.errors[0] < 1e-8


def test_heat_case_respects_bounds(cube_path):
    config = _cube_config(
        cube_path(3),
        coefficients={"kappa": 52},
        boundary={"dirichlet": {"groups": ["x0"], "value": 300}, "robin": {"alpha": 5, "g": 135}},
    )

    with Femtet() as femtet:
        result = femtet.run(config, write=False)

    u = result.solution.u
    assert u.min() > 27.0
    assert u.max() <= 300.0 + 1e-6
    np.testing.assert_allclose(u[result.problem.bc.iD], 300.0)


def test_transient_energy_decays(cube_path):
    config = _cube_config(
        cube_path(4),
        boundary={"dirichlet": {"groups": list(SIDES)}},
        transient={"t_end": 0.1, "dt": 0.01, "initial": "sin(pi*x)*sin(pi*y)*sin(pi*z)"},
    )

    with Femtet() as femtet:
        result = femtet.run(config, write=False)

    problem = result.problem
    zero = CoefficientField.scalar(0)
    energies = [error_norms(problem.mesh, problem.geom, s.u, zero)[0] for s in result.snapshots]

    assert result.is_transient
    assert len(result.snapshots) == 11
    assert result.solution.t == pytest.approx(0.1)
    assert all(later < earlier for earlier, later in zip(energies, energies[1:]))
    assert energies[-1] < 0.5 * energies[0]


def test_eigenfunction_decays_at_analytic_rate(cube_path):
    config = _cube_config(
        cube_path(8, 2),
        2,
        boundary={"dirichlet": {"groups": list(SIDES)}},
        transient={"t_end": 0.05, "dt": 0.005, "initial": "sin(pi*x)*sin(pi*y)*sin(pi*z)"},
    )

    with Femtet() as femtet:
        result = femtet.run(config, write=False)

    coord = result.problem.mesh.coord
    centre = np.flatnonzero(np.all(np.isclose(coord, 0.5), axis=1))

    assert centre.size == 1
    assert result.solution.u[centre[0]] == pytest.approx(np.exp(-3 * np.pi**2 * 0.05), rel=2e-2)


def test_transient_approaches_steady_state(cube_path):
    sections = {
        "coefficients": {"kappa": 52},
        "boundary": {"dirichlet": {"groups": ["x0"], "value": 300}, "robin": {"alpha": 5, "g": 135}},
    }
    mesh_path = cube_path(3)

    with Femtet() as femtet:
        steady = femtet.run(_cube_config(mesh_path, **sections), write=False)
        transient = femtet.run(
            _cube_config(mesh_path, transient={"t_end": 0.1, "dt": 0.01, "initial": "300 - 273*x"}, **sections),
            write=False,
        )

    problem = transient.problem
    M = assemble_mass(problem.mesh, problem.geom, CoefficientField.scalar(1), problem.volume_rule)
    distances = [np.sqrt((s.u - steady.solution.u) @ M @ (s.u - steady.solution.u)) for s in transient.snapshots]

    assert 27.0 <= steady.solution.u.min() <= steady.solution.u.max() <= 300.0 + 1e-6
    assert all(later < earlier for earlier, later in zip(distances, distances[1:]))
    assert distances[-1] < 0.1 * distances[0]


def test_transient_follows_time_dependent_dirichlet(cube_path):
    config = _cube_config(
        cube_path(2),
        coefficients={"f": 1},
        boundary={"dirichlet": {"groups": list(SIDES), "value": "t"}},
        transient={"t_end": 1.0, "dt": 0.25},
    )

    with Femtet() as femtet:
        result = femtet.run(config, write=False)

    for snapshot in result.snapshots:
        np.testing.assert_allclose(snapshot.u, snapshot.t, atol=1e-10)


def test_transient_capacity(cube_path):
    config = _cube_config(
        cube_path(2),
        coefficients={"f": 2},
        boundary={"dirichlet": {"groups": list(SIDES), "value": "t"}},
        transient={"t_end": 0.5, "dt": 0.1, "rho_cp": 2},
    )

    with Femtet() as femtet:
        result = femtet.run(config, write=False)
        capacity = femtet.assemble_capacity(result.problem)

    problem = result.problem
    mass = assemble_mass(problem.mesh, problem.geom, CoefficientField.scalar(1), problem.volume_rule)

    np.testing.assert_allclose(capacity.toarray(), 2 * mass.toarray(), atol=1e-14)
    np.testing.assert_allclose(result.solution.u, 0.5, atol=1e-10)


def test_solve_transient_needs_transient_block(cube_path):
    config = _cube_config(cube_path(1), boundary={"dirichlet": {"groups": list(SIDES)}})

    with Femtet() as femtet:
        problem = femtet.prepare(config)

        with pytest.raises(FemtetConfigError):
            femtet.solve_transient(problem, femtet.assemble(problem))


def test_crank_nicolson_is_second_order_in_time(cube_path):
    mesh_path = cube_path(3)
    errors = []

    for dt in (0.1, 0.05, 0.025):
        config = _cube_config(
            mesh_path,
            coefficients={"f": "-(1 + x)*exp(-t)"},
            boundary={"dirichlet": {"groups": list(SIDES), "value": "(1 + x)*exp(-t)"}},
            transient={"t_end": 1.0, "dt": dt, "initial": "1 + x"},
            output={"errors": {"exact": "(1 + x)*exp(-t)", "exact_grad": ["exp(-t)", 0, 0]}},
        )

        with Femtet() as femtet:
            errors.append(femtet.run(config, write=False).errors[0])

    rates = observed_rates([0.1, 0.05, 0.025], errors)

    assert rates[-1] == pytest.approx(2.0, abs=0.2)


def test_outputs_are_written(cube_path, tmp_path):
    config = _cube_config(
        cube_path(2),
        boundary={"dirichlet": {"groups": list(SIDES), "value": "x"}},
        transient={"t_end": 0.1, "dt": 0.01, "snapshot_every": 5, "initial": "x"},
        output={
            "vtk": str(tmp_path / "vtk" / "u_{step:03d}.vtk"),
            "probes": [[0.5, 0.5, 0.5], [0.25, 0.5, 0.75]],
            "probe_csv": str(tmp_path / "probes.csv"),
            "dump_dir": str(tmp_path / "dump"),
        },
    )

    with Femtet() as femtet:
        result = femtet.run(config)

    assert sorted(p.name for p in (tmp_path / "vtk").iterdir()) == ["u_000.vtk", "u_005.vtk", "u_010.vtk"]
    assert sorted(p.name for p in (tmp_path / "dump").iterdir()) == [
        "A.coo",
        "C.coo",
        "M.coo",
        "R.coo",
        "S.coo",
        "b.vec",
        "d.vec",
        "t.vec",
    ]
    assert len(result.written) == 3 + 8 + 1

    lines = (tmp_path / "probes.csv").read_text().splitlines()
    assert lines[0] == "x,y,z,element,value"
    assert [float(line.split(",")[-1]) for line in lines[1:]] == pytest.approx([0.5, 0.25])


def test_probe_outside_mesh(cube_path):
    config = _cube_config(
        cube_path(1), boundary={"dirichlet": {"groups": list(SIDES)}}, output={"probes": [[2.0, 0.0, 0.0]]}
    )

    with Femtet() as femtet, pytest.raises(FemtetUnlocatedPointError):
        femtet.run(config, write=False)


def test_run_from_file(cube_path, write_config):
    path = write_config(
        {
            "mesh_path": str(cube_path(1)),
            "degree": 1,
            "boundary": {"dirichlet": {"groups": ["x0", "x1"], "value": "x"}, "robin": {}},
        }
    )

    with Femtet() as femtet:
        result = femtet.run(path, write=False)

    np.testing.assert_allclose(result.solution.u, result.problem.mesh.coord[:, 0], atol=1e-9)


def test_unknown_group_is_a_config_error(cube_path):
    config = _cube_config(cube_path(1), boundary={"dirichlet": {"groups": ["top"]}})

    with Femtet() as femtet, pytest.raises(FemtetConfigError):
        femtet.prepare(config)


def test_convergence_rows(cube_path):
    config = _cube_config(
        cube_path(1),
        boundary={"dirichlet": {"groups": list(SIDES), "value": "x*y"}},
        output={"errors": {"exact": "x*y", "exact_grad": ["y", "x", 0]}},
    )

    with Femtet() as femtet:
        rows = femtet.convergence(config, [cube_path(2), cube_path(4)])

    assert [row[1] for row in rows] == [27, 125]
    assert rows[0][0] == pytest.approx(2 * rows[1][0])
    assert rows[1][2] < rows[0][2]


def test_convergence_needs_exact_solution(cube_path):
    config = _cube_config(cube_path(1), boundary={"dirichlet": {"groups": list(SIDES)}})

    with Femtet() as femtet, pytest.raises(FemtetConfigError):
        femtet.convergence(config, [cube_path(1)])


@pytest.mark.slow
@pytest.mark.parametrize(("m", "levels", "expected"), [(1, (4, 8, 16), (2.0, 1.0)), (2, (3, 6, 12), (3.0, 2.0))])
def test_convergence_rates(cube_path, m, levels, expected):
    u = "exp(x + y + z)"
    config = _cube_config(
        cube_path(levels[0], m),
        m,
        coefficients={"f": f"-3*{u}"},
        boundary={"dirichlet": {"groups": list(SIDES), "value": u}},
        output={"errors": {"exact": u, "exact_grad": [u, u, u]}},
    )

    with Femtet() as femtet:
        rows = femtet.convergence(config, [cube_path(n, m) for n in levels])

    h = [row[0] for row in rows]
    rate_l2 = observed_rates(h, [row[2] for row in rows])[-1]
    rate_h1 = observed_rates(h, [row[3] for row in rows])[-1]

    assert rate_l2 == pytest.approx(expected[0], abs=0.3)
    assert rate_h1 == pytest.approx(expected[1], abs=0.3)


def test_inspect_sample(sample_path):
    with Femtet() as femtet:
        report = femtet.inspect_mesh(sample_path, 1)

    assert report.summary_line == "nodes 7, tets 4, boundary tris 10, volume 0.1666667"
    assert (report.n_faces, report.n_interior_faces, report.n_boundary_faces) == (13, 3, 10)
    assert report.unmatched_boundary_triangles == 0

    groups = {group.name: group for group in report.groups}
    assert groups["DirichletCondition"].elements == 4
    assert groups["NeumannCondition"].entities == 2
    assert groups["Volume1"].elements == 4
    assert report.chunkiness_percentiles["max"] >= report.chunkiness_percentiles["p50"]
