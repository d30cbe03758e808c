import io

import numpy as np
import pytest

from cutbernoulli.analysis import exact_circle_geometry
from cutbernoulli.driver import (LOG_COLUMNS, OptimizerConfig, ProgressLog, lagrangian_value,
                                 objective_value, optimize, residual_indicator)
from cutbernoulli.errors import ConfigError, EmptyDomain
from cutbernoulli.fem import FemField, solve_dual, solve_primal
from cutbernoulli.levelset import LevelSet, classify
from cutbernoulli.mesh import build_background_mesh
from cutbernoulli.problems import ProblemDefinition, model_problem_1, mp1_problem


@pytest.fixture(scope="module")
def mp1_run():
    buf = io.StringIO()
    report = optimize(model_problem_1(), 32, OptimizerConfig(tol=1e-3, max_iter=60),
                      progress=ProgressLog(None, buf))
    return report, buf.getvalue()


def test_residual_examples(annulus64):
    nv = annulus64.mesh.num_vertices
    assert residual_indicator(FemField(np.zeros(nv), annulus64)) == 0.0
    one = FemField(np.ones(nv), annulus64)
    assert residual_indicator(one) == pytest.approx(np.sqrt(2 * np.pi * 0.25), rel=1e-2)
    assert objective_value(one) == pytest.approx(np.pi * 0.25, rel=1e-2)


def test_residual_empty_interface(mesh16):
    g = classify(mesh16, LevelSet(-np.ones(mesh16.num_vertices), mesh16.h))
    with pytest.raises(EmptyDomain):
        residual_indicator(FemField(np.zeros(mesh16.num_vertices), g))


@pytest.mark.parametrize("n", [16, 32, 64])
def test_interpolated_exact_solution_residual(n):
    mesh = build_background_mesh(n)
    g = exact_circle_geometry(mesh)
    prob = mp1_problem()
    uI = FemField(np.where(g.active_vertices, prob.exact(mesh.vertices), 0.0), g)
    assert residual_indicator(uI) <= mesh.h ** 2


def test_lagrangian_zero_data(annulus32):
    z = FemField(np.zeros(annulus32.mesh.num_vertices), annulus32)
    zero = lambda x: np.zeros(len(x))
    prob = ProblemDefinition(f=zero, g_D=zero, g_N=0.0, f_is_zero=True)
    assert lagrangian_value(z, z, prob) == 0.0


def test_lagrangian_close_to_objective():
    prob = mp1_problem()
    gaps = []
    for n in (16, 32, 64):
        mesh = build_background_mesh(n)
        g = exact_circle_geometry(mesh)
        u = solve_primal(g, prob)
        p = solve_dual(g, u)
        gap = abs(lagrangian_value(u, p, prob) - objective_value(u))
        assert gap <= mesh.h
        gaps.append(gap)
    assert gaps[0] > gaps[1] > gaps[2]


def test_config_validation():
    with pytest.raises(ConfigError):
        OptimizerConfig(degenerate="nope")
    with pytest.raises(ConfigError):
        OptimizerConfig(max_iter=-1)


def test_mp1_converges(mp1_run):
    report, _ = mp1_run
    assert report.converged
    assert report.final.residual <= 1e-3
    assert report.residuals[-1] == report.final.residual


def test_descent_every_iteration(mp1_run):
    report, _ = mp1_run
    slopes = [s.slope for s in report.states[:-1]]
    assert slopes and all(s < 0 for s in slopes)
    for s in report.states[:-1]:
        assert s.slope == pytest.approx(-s.velocity_norm, rel=1e-8)
        assert s.horizon > 0


def test_residual_trend(mp1_run):
    r = mp1_run[0].residuals
    ups = np.count_nonzero(np.diff(r) > 0)
    assert ups <= 0.2 * (len(r) - 1)
    assert r[-1] < 0.01 * r[0]


def test_progress_csv(mp1_run):
    report, text = mp1_run
    lines = text.strip().splitlines()
    assert lines[0] == ",".join(LOG_COLUMNS)
    assert len(lines) == len(report.history) + 1


def test_replay_determinism(mp1_run):
    report, _ = mp1_run
    k = 5
    last = report.final.iteration
    replay = optimize(model_problem_1(), 32, OptimizerConfig(tol=1e-3, max_iter=last - k),
                      phi0=report.states[k].phi, start=k)
    np.testing.assert_array_equal(np.array(replay.history), np.array(report.history[k:]))


def test_max_iterations_reason():
    report = optimize(model_problem_1(), 16, OptimizerConfig(tol=0.0, max_iter=2))
    assert report.reason == "max-iterations"
    assert [h[0] for h in report.history] == [0, 1, 2]
