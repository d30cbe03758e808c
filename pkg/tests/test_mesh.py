import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cutbernoulli.errors import InvalidArgument, OutOfDomain
from cutbernoulli.mesh import BOUNDARY, build_background_mesh, locate_point, locate_points, prolongate


def test_counts_n2():
    m = build_background_mesh(2)
    assert m.num_elements == 16
    assert m.num_vertices == 13
    assert m.areas.sum() == pytest.approx(1.0, abs=1e-14)


def test_face_counts_n4_brute_force():
    m = build_background_mesh(4)
    edges = {}
    for t, tri in enumerate(m.triangles):
        for a, b in ((0, 1), (1, 2), (2, 0)):
            edges.setdefault(tuple(sorted((tri[a], tri[b]))), []).append(t)
    n_boundary = sum(len(v) == 1 for v in edges.values())
    assert n_boundary == 16
    assert len(m.boundary_faces) == 16
    assert len(m.interior_faces) == (3 * 64 - 16) // 2
    assert m.num_faces == len(edges)


def test_interior_faces_have_two_distinct_neighbours():
    m = build_background_mesh(2)
    fe = m.face_elements[m.interior_faces]
    assert np.all(fe[:, 0] != fe[:, 1])
    assert np.all(fe >= 0)
    assert np.all(m.face_elements[m.boundary_faces, 1] == BOUNDARY)


@pytest.mark.parametrize("n", [2, 3, 8, 33])
def test_invariants(n):
    m = build_background_mesh(n)
    p = m.element_coords
    signed = 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                    - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    assert np.all(signed > 0)
    assert m.areas.sum() == pytest.approx(1.0, abs=1e-12)
    assert m.face_lengths.max() / m.face_lengths.min() <= 4
    assert m.num_elements == 4 * n * n


def test_face_stored_once_and_shared():
    m = build_background_mesh(5)
    keys = np.sort(m.face_vertices, axis=1)
    assert len(np.unique(keys, axis=0)) == m.num_faces
    # both neighbours of an interior face list the same face id
    for f in m.interior_faces[:50]:
        l, r = m.face_elements[f]
        assert f in m.element_faces[l] and f in m.element_faces[r]


def test_h_halves():
    assert build_background_mesh(8).h == 2 * build_background_mesh(16).h


def test_small_n_rejected():
    with pytest.raises(InvalidArgument):
        build_background_mesh(1)


def test_vertex_order_row_major_then_centers():
    m = build_background_mesh(3)
    assert np.allclose(m.vertices[1], [1 / 3, 0])
    assert np.allclose(m.vertices[4], [0, 1 / 3])
    assert np.allclose(m.vertices[16], [1 / 6, 1 / 6])


def test_locate_corner():
    m = build_background_mesh(2)
    t, lam = locate_point(m, (0.0, 0.0))
    assert np.isclose(lam.max(), 1.0)
    assert np.isclose(lam.sum(), 1.0)


def test_locate_cell_center():
    m = build_background_mesh(2)
    t, lam = locate_point(m, (0.25, 0.25))
    assert np.isclose(lam.sum(), 1.0)
    assert np.isclose(lam.max(), 1.0)


def test_locate_random_reconstruction(rng):
    m = build_background_mesh(7)
    x = rng.random((1000, 2))
    t, lam = locate_points(m, x)
    assert np.all(lam >= -1e-12) and np.all(lam <= 1 + 1e-12)
    assert np.allclose(lam.sum(axis=1), 1.0)
    rec = np.einsum("qk,qkd->qd", lam, m.element_coords[t])
    assert np.abs(rec - x).max() < 1e-12


@given(st.floats(0, 1), st.floats(0, 1))
@settings(max_examples=200, deadline=None)
def test_locate_property(x, y):
    m = build_background_mesh(5)
    t, lam = locate_point(m, (x, y))
    assert abs(lam @ m.element_coords[t] - np.array([x, y])).max() < 1e-12


def test_out_of_domain():
    m = build_background_mesh(2)
    with pytest.raises(OutOfDomain):
        locate_point(m, (1.5, 0.2))


def test_prolongation_exact_for_p1():
    coarse, fine = build_background_mesh(4), build_background_mesh(8)
    vals = np.sin(3 * coarse.vertices[:, 0]) + coarse.vertices[:, 1] ** 2
    pf = prolongate(coarse, fine, vals)
    t, lam = locate_points(coarse, fine.vertices)
    assert np.allclose(pf, np.einsum("qk,qk->q", lam, vals[coarse.triangles[t]]), atol=1e-13)
    with pytest.raises(InvalidArgument):
        prolongate(build_background_mesh(3), fine, np.zeros(build_background_mesh(3).num_vertices))
