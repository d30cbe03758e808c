import numpy as np
import pytest
import scipy.sparse.linalg as spla

from cutbernoulli.analysis import exact_circle_geometry
from cutbernoulli.fem import (FemField, assemble_bilinear, assemble_dual_rhs, assemble_primal_rhs,
                              face_jump_matrix, ghost_penalty_matrix, interface_rule, nitsche_form,
                              solve_dual, solve_primal)
from cutbernoulli.levelset import LevelSet, classify, sample_to_nodes, signed_distance_circle
from cutbernoulli.mesh import build_background_mesh
from cutbernoulli.problems import ProblemDefinition, mp1_problem, mp2_problem

ZERO = lambda x: np.zeros(len(x))
ONE = lambda x: np.ones(len(x))


def full_square(mesh):
    return classify(mesh, LevelSet(-np.ones(mesh.num_vertices), mesh.h))


def disk(mesh, r=0.3):
    return classify(mesh, sample_to_nodes(signed_distance_circle((0.5, 0.5), r), mesh))


def test_ghost_penalty_linear_consistency(annulus32):
    m = annulus32.mesh
    v = m.vertices[:, 0] + 2 * m.vertices[:, 1]
    S = ghost_penalty_matrix(annulus32, 1.0)
    assert abs(v @ (S @ v)) <= 1e-12
    assert np.abs(S @ v).max() <= 1e-12


def test_ghost_penalty_scaling(annulus32):
    S1 = ghost_penalty_matrix(annulus32, 1.0)
    S2 = ghost_penalty_matrix(annulus32, 2.0)
    assert abs(S2 - 2 * S1).max() <= 1e-12 * abs(S1).max()
    m = annulus32.mesh
    A = face_jump_matrix(m, annulus32.ghost_faces, 0.25)
    B = face_jump_matrix(m, annulus32.ghost_faces, 0.5)
    assert abs(B - 2 * A).max() <= 1e-12 * abs(A).max()


def test_constant_field_penalty_only(mesh16):
    g = full_square(mesh16)
    v = np.ones(mesh16.num_vertices)
    A = nitsche_form(g, 10.0)
    assert v @ (A @ v) == pytest.approx(4 * 10.0 / mesh16.h, rel=1e-10)


def test_matrix_symmetry(mesh16):
    s = assemble_bilinear(exact_circle_geometry(mesh16))
    assert s.symmetry_defect() <= 1e-12


def test_rhs_zero_data(annulus32):
    p = ProblemDefinition(f=ZERO, g_D=ZERO, g_N=0.0, f_is_zero=True)
    assert not np.any(assemble_primal_rhs(annulus32, p))


def test_rhs_partition_of_unity(mesh32):
    g = disk(mesh32)
    p = ProblemDefinition(f=ONE, g_D=ZERO, g_N=0.0)
    b = assemble_primal_rhs(g, p)
    assert b.sum() == pytest.approx(g.element_measure.sum(), abs=1e-12)


def test_neumann_locality(annulus32):
    full = assemble_primal_rhs(annulus32, mp1_problem())
    no_n = assemble_primal_rhs(annulus32, ProblemDefinition(**{**mp1_problem().__dict__, "g_N": 0.0}))
    touched = np.zeros(annulus32.mesh.num_vertices, dtype=bool)
    touched[annulus32.mesh.triangles[annulus32.cut_elements].ravel()] = True
    assert np.array_equal(full[~touched], no_n[~touched])
    assert np.any(full[touched] != no_n[touched])


def test_patch_affine(mesh16):
    g = full_square(mesh16)
    exact = lambda x: 1.0 + x[:, 0]
    p = ProblemDefinition(f=ZERO, g_D=exact, g_N=0.0, f_is_zero=True)
    u = solve_primal(g, p)
    assert np.abs(u.coefficients - exact(mesh16.vertices)).max() <= 1e-9


def test_inactive_entries_zero(annulus32):
    u = solve_primal(annulus32, mp1_problem())
    assert not np.any(u.coefficients[~annulus32.active_vertices])
    assert np.all(np.isfinite(u.coefficients))


def test_dual_zero_data(annulus32):
    u0 = FemField(np.zeros(annulus32.mesh.num_vertices), annulus32)
    p = solve_dual(annulus32, u0)
    assert not np.any(p.coefficients)


def test_dual_rhs_length(annulus64):
    one = FemField(np.ones(annulus64.mesh.num_vertices), annulus64)
    b = assemble_dual_rhs(one)
    assert b.sum() == pytest.approx(2 * np.pi * 0.25, rel=1e-2)


def test_dual_reuses_primal_matrix(annulus32):
    u = solve_primal(annulus32, mp1_problem())
    p = solve_dual(annulus32, u)
    assert p.matrix is u.matrix
    fresh = assemble_bilinear(annulus32).matrix
    assert abs(fresh - u.matrix).max() == 0.0


def test_grad_f_consistency(rng):
    theta = rng.uniform(0, 2 * np.pi, 100)
    r = rng.uniform(0.25, 0.7, 100)
    pts = 0.5 + np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
    assert mp1_problem().check_grad_f(pts) <= 1e-6
    assert mp2_problem().check_grad_f(rng.random((100, 2))) <= 1e-6


def _residual_dual_norm(n):
    mesh = build_background_mesh(n)
    g = exact_circle_geometry(mesh)
    prob = mp1_problem()
    system = assemble_bilinear(g)
    uI = np.where(g.active_vertices, prob.exact(mesh.vertices), 0.0)
    r = assemble_primal_rhs(g, prob) - system.matrix @ uI
    return float(np.sqrt(r @ spla.spsolve(system.matrix.tocsc(), r)))


def test_consistency_residual_decreases():
    assert _residual_dual_norm(32) < _residual_dual_norm(16) / 1.5


def test_mp1_residual_small_on_exact_circle(annulus64):
    u = solve_primal(annulus64, mp1_problem())
    gr = interface_rule(annulus64)
    assert np.sqrt(gr.weights @ gr.values(u.coefficients) ** 2) < 1e-3
