"""Structured background triangulation of the unit square.

Each of the n x n grid cells is split into four triangles through its
center ("criss-cross" pattern). Vertex numbering is row-major over the grid
nodes followed by row-major cell centers, so indices are reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .errors import InvalidArgument, OutOfDomain

BOUNDARY = -1


class Face(NamedTuple):
    index: int
    vertices: tuple[int, int]
    left: int
    right: int  # BOUNDARY for faces on the outer square


@dataclass(frozen=True, eq=False)
class BackgroundMesh:
    """Immutable background triangulation of [0, 1]^2.

    ``face_elements[f] = (left, right)`` with ``left < right`` for interior
    faces and ``right == BOUNDARY`` on the boundary. ``element_faces[t, k]`` is
    the face joining local vertices ``k`` and ``(k + 1) % 3`` of triangle ``t``.
    """

    n: int
    vertices: np.ndarray
    triangles: np.ndarray
    face_vertices: np.ndarray
    face_elements: np.ndarray
    element_faces: np.ndarray
    h: float

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_elements(self) -> int:
        return len(self.triangles)

    @property
    def num_faces(self) -> int:
        return len(self.face_vertices)

    def face(self, f: int) -> Face:
        a, b = self.face_vertices[f]
        left, right = self.face_elements[f]
        return Face(int(f), (int(a), int(b)), int(left), int(right))

    @cached_property
    def interior_faces(self) -> np.ndarray:
        return np.flatnonzero(self.face_elements[:, 1] != BOUNDARY)

    @cached_property
    def boundary_faces(self) -> np.ndarray:
        return np.flatnonzero(self.face_elements[:, 1] == BOUNDARY)

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.face_vertices[self.boundary_faces])

    @cached_property
    def element_coords(self) -> np.ndarray:
        """Vertex coordinates per element, shape (nt, 3, 2)."""
        return self.vertices[self.triangles]

    @cached_property
    def areas(self) -> np.ndarray:
        p = self.element_coords
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @cached_property
    def basis_gradients(self) -> np.ndarray:
        """Gradients of the three P1 hat functions per element, shape (nt, 3, 2)."""
        p = self.element_coords
        jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
        jinv = np.linalg.inv(jac)  # rows are grad(lambda_1), grad(lambda_2)
        grads = np.empty((len(p), 3, 2))
        grads[:, 1:] = jinv
        grads[:, 0] = -jinv[:, 0] - jinv[:, 1]
        return grads

    @cached_property
    def face_lengths(self) -> np.ndarray:
        d = self.vertices[self.face_vertices[:, 1]] - self.vertices[self.face_vertices[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    @cached_property
    def face_normals(self) -> np.ndarray:
        """Unit normals of all faces; on boundary faces they point out of [0,1]^2."""
        d = self.vertices[self.face_vertices[:, 1]] - self.vertices[self.face_vertices[:, 0]]
        nrm = np.stack([d[:, 1], -d[:, 0]], axis=1) / self.face_lengths[:, None]
        bf = self.boundary_faces
        mid = self.vertices[self.face_vertices[bf]].mean(axis=1)
        centroid = self.element_coords[self.face_elements[bf, 0]].mean(axis=1)
        flip = np.einsum("ij,ij->i", nrm[bf], mid - centroid) < 0
        nrm[bf[flip]] *= -1
        return nrm

    def barycentric(self, elements: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Barycentric coordinates of points ``x`` (m, 2) in ``elements`` (m,)."""
        elements = np.asarray(elements)
        x = np.asarray(x, dtype=float)
        p0 = self.element_coords[elements, 0]
        g = self.basis_gradients[elements]
        lam = np.empty((len(elements), 3))
        lam[:, 1:] = np.einsum("mkd,md->mk", g[:, 1:], x - p0)
        lam[:, 0] = 1.0 - lam[:, 1] - lam[:, 2]
        return lam


def build_background_mesh(n: int) -> BackgroundMesh:
    """Criss-cross triangulation of the unit square with ``n`` cells per side."""
    if int(n) != n or n < 2:
        raise InvalidArgument(f"cells per side must be an integer >= 2, got {n!r}")
    n = int(n)
    g = np.arange(n + 1) / n
    gx, gy = np.meshgrid(g, g)
    c = (np.arange(n) + 0.5) / n
    cx, cy = np.meshgrid(c, c)
    vertices = np.concatenate(
        [np.stack([gx.ravel(), gy.ravel()], 1), np.stack([cx.ravel(), cy.ravel()], 1)]
    )

    jj, ii = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    a = jj * (n + 1) + ii
    b = a + 1
    e = a + n + 1
    d = e + 1
    ctr = (n + 1) ** 2 + jj * n + ii
    triangles = np.stack(
        [np.stack([a, b, ctr], 1), np.stack([b, d, ctr], 1),
         np.stack([d, e, ctr], 1), np.stack([e, a, ctr], 1)], axis=1
    ).reshape(-1, 3)

    face_vertices, face_elements, element_faces = _build_faces(triangles, len(vertices))
    return BackgroundMesh(
        n=n,
        vertices=vertices,
        triangles=triangles,
        face_vertices=face_vertices,
        face_elements=face_elements,
        element_faces=element_faces,
        h=1.0 / n,
    )


def _build_faces(triangles: np.ndarray, nv: int):
    nt = len(triangles)
    half = np.stack([triangles, np.roll(triangles, -1, axis=1)], axis=2).reshape(-1, 2)
    lo = half.min(axis=1).astype(np.int64)
    hi = half.max(axis=1).astype(np.int64)
    keys, inverse, counts = np.unique(lo * nv + hi, return_inverse=True, return_counts=True)
    if counts.max() > 2:
        raise InvalidArgument("non-manifold triangulation")
    face_vertices = np.stack([keys // nv, keys % nv], axis=1)
    owner = np.repeat(np.arange(nt), 3)
    face_elements = np.full((len(keys), 2), BOUNDARY, dtype=np.int64)
    # half-edges are ordered by element, so the first write per face is the lower element
    order = np.argsort(inverse, kind="stable")
    first = np.ones(len(order), dtype=bool)
    first[1:] = inverse[order][1:] != inverse[order][:-1]
    face_elements[inverse[order][first], 0] = owner[order][first]
    face_elements[inverse[order][~first], 1] = owner[order][~first]
    return face_vertices, face_elements, inverse.reshape(nt, 3)


def locate_points(mesh: BackgroundMesh, x: np.ndarray, tol: float = 1e-12):
    """Vectorized point location. Returns (elements, barycentric coordinates)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if np.any(x < -tol) or np.any(x > 1.0 + tol):
        raise OutOfDomain("point outside the unit square")
    n = mesh.n
    cell = np.clip(np.floor(x * n).astype(np.int64), 0, n - 1)
    base = 4 * (cell[:, 1] * n + cell[:, 0])
    cand = base[:, None] + np.arange(4)[None, :]
    lam = mesh.barycentric(cand.ravel(), np.repeat(x, 4, axis=0)).reshape(-1, 4, 3)
    k = np.argmax(lam.min(axis=2), axis=1)
    rows = np.arange(len(x))
    elements = cand[rows, k]
    lam = np.clip(lam[rows, k], 0.0, 1.0)
    lam /= lam.sum(axis=1, keepdims=True)
    return elements, lam


def locate_point(mesh: BackgroundMesh, x) -> tuple[int, np.ndarray]:
    """Element containing ``x`` and the barycentric coordinates of ``x`` in it."""
    elements, lam = locate_points(mesh, np.asarray(x, dtype=float).reshape(1, 2))
    return int(elements[0]), lam[0]


def prolongate(coarse: BackgroundMesh, fine: BackgroundMesh, values: np.ndarray) -> np.ndarray:
    """Interpolate a P1 field (nv,) or (nv, k) from ``coarse`` onto ``fine`` vertices.

    The criss-cross family is nested when ``fine.n`` is a multiple of
    ``coarse.n``; the interpolation is then exact.
    """
    if fine.n % coarse.n:
        raise InvalidArgument(f"meshes n={coarse.n} and n={fine.n} are not nested")
    elements, lam = locate_points(coarse, fine.vertices)
    v = np.asarray(values)[coarse.triangles[elements]]
    if v.ndim == 2:
        return np.einsum("mk,mk->m", lam, v)
    return np.einsum("mk,mk...->m...", lam, v)
