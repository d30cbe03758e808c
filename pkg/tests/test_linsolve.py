import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from cutbernoulli.errors import NoConvergence
from cutbernoulli.fem import assemble_bilinear, assemble_primal_rhs
from cutbernoulli.linsolve import (SparseSystem, assemble, condition_estimate, eliminate, finalize,
                                   read_coordinate, solve_general, solve_spd, write_coordinate)
from cutbernoulli.problems import mp1_problem


def test_identity():
    b = np.arange(5.0)
    assert np.allclose(solve_spd(SparseSystem(sp.identity(5, format="csr")), b), b)


def test_two_by_two():
    A = sp.csr_matrix([[2.0, 1.0], [1.0, 2.0]])
    assert np.allclose(solve_spd(A, np.array([3.0, 3.0])), [1.0, 1.0])


def test_mp1_system_converges(annulus32, mesh16):
    from cutbernoulli.analysis import exact_circle_geometry
    g = exact_circle_geometry(mesh16)
    system = assemble_bilinear(g)
    b = assemble_primal_rhs(g, mp1_problem())
    x, hist = solve_spd(system, b, return_history=True)
    assert np.linalg.norm(system.matrix @ x - b) <= 1e-10 * np.linalg.norm(b)
    assert len(hist) - 1 <= system.dimension


def test_no_convergence_history():
    A = sp.diags([-np.ones(199), 2 * np.ones(200), -np.ones(199)], [-1, 0, 1]).tocsr()
    with pytest.raises(NoConvergence) as info:
        solve_spd(A, np.ones(200), max_iter=3)
    assert len(info.value.history) >= 3


def test_not_spd_rejected():
    with pytest.raises(NoConvergence):
        solve_spd(sp.csr_matrix([[-1.0, 0], [0, 1.0]]), np.ones(2))


def test_assembly_sums_duplicates_and_drops_zeros():
    A = assemble([0, 0, 1, 1], [0, 0, 1, 0], [1.0, 2.0, 5.0, 0.0], 2)
    assert A[0, 0] == 3.0 and A.nnz == 2
    S = finalize(sp.csr_matrix(np.array([[1.0, 0.0], [0.0, 0.0]])), [1, 2])
    assert S.matrix.nnz == 1


def test_elimination_keeps_spd():
    A = sp.csr_matrix(np.array([[4.0, 1, 0], [1, 3, 1], [0, 1, 2]]))
    E, b = eliminate(A, np.array([True, False, True]), np.ones(3))
    assert np.allclose(E.toarray(), [[4, 0, 0], [0, 1, 0], [0, 0, 2]])
    assert b[1] == 0.0


def test_symmetry_and_definiteness(annulus32):
    s = assemble_bilinear(annulus32)
    assert s.symmetry_defect() <= 1e-12
    est = condition_estimate(s, annulus32.active_vertices)
    assert est.lambda_min > 0 and est.converged


def test_condition_identity_and_diag():
    assert condition_estimate(sp.identity(4)).kappa == pytest.approx(1.0)
    assert condition_estimate(sp.diags([1.0, 100.0])).kappa == pytest.approx(100.0, rel=0.1)
    big = sp.diags(np.linspace(1.0, 100.0, 400)).tocsr()
    assert condition_estimate(big).kappa == pytest.approx(100.0, rel=0.1)


@given(st.integers(2, 40), st.integers(0, 2 ** 31 - 1))
@settings(max_examples=30, deadline=None)
def test_matvec_matches_dense(n, seed):
    r = np.random.default_rng(seed)
    M = r.standard_normal((n, n)) * (r.random((n, n)) < 0.3)
    S = finalize(M)
    x = r.standard_normal(n)
    assert np.abs(S.matvec(x) - M @ x).max() <= 1e-12 * max(1.0, np.abs(M).sum())


@given(st.integers(0, 2 ** 31 - 1))
@settings(max_examples=20, deadline=None)
def test_permutation_invariance(seed):
    r = np.random.default_rng(seed)
    n = 30
    B = r.standard_normal((n, n))
    A = B @ B.T + n * np.eye(n)
    b = r.standard_normal(n)
    perm = r.permutation(n)
    x = solve_spd(sp.csr_matrix(A), b)
    xp = solve_spd(sp.csr_matrix(A[perm][:, perm]), b[perm])
    assert np.abs(xp - x[perm]).max() <= 10 * 1e-10 * max(1.0, np.abs(x).max()) * np.linalg.cond(A)


def test_bicgstab():
    A = sp.csr_matrix(np.array([[4.0, 1.0, 0.0], [-1.0, 3.0, 1.0], [0.0, -2.0, 5.0]]))
    b = np.array([1.0, 2.0, 3.0])
    x = solve_general(A, b)
    assert np.allclose(A @ x, b, atol=1e-9)


def test_coordinate_roundtrip(tmp_path, annulus32):
    A = assemble_bilinear(annulus32).matrix
    p = tmp_path / "A.txt"
    write_coordinate(A, p)
    B = read_coordinate(p)
    assert (A != B).nnz == 0
