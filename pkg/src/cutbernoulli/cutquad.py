"""Quadrature on cut cells, interface chords and fitted boundary facets.

Volume rules use the three edge midpoints of each (sub-)triangle, which is
exact for quadratics. Line rules are two-point Gauss, exact for cubics.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .levelset import BoundaryPieces, CutGeometry, ElementClass, Segments

GAUSS2 = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Points and positive weights; ``elements`` names the owning background
    element of every point when the rule spans several elements, ``normals``
    carries the unit normal at each point of a line rule."""

    points: np.ndarray
    weights: np.ndarray
    elements: np.ndarray | None = None
    normals: np.ndarray | None = None

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))

    def __len__(self) -> int:
        return len(self.weights)


def triangle_rule(p: np.ndarray) -> QuadratureRule:
    """Edge-midpoint rule on a triangle given by its 3 vertices."""
    p = np.asarray(p, dtype=float)
    e1, e2 = p[1] - p[0], p[2] - p[0]
    area = 0.5 * abs(e1[0] * e2[1] - e1[1] * e2[0])
    mids = 0.5 * (p + np.roll(p, -1, axis=0))
    return QuadratureRule(mids, np.full(3, area / 3.0))


def fan_triangles(poly: np.ndarray, apex: int = 0) -> list[np.ndarray]:
    """Split a convex polygon into triangles sharing vertex ``apex``."""
    k = len(poly)
    order = np.roll(np.arange(k), -apex)
    return [poly[[order[0], order[i], order[i + 1]]] for i in range(1, k - 1)]


def polygon_rule(poly: np.ndarray, apex: int = 0) -> QuadratureRule:
    pts, wts = [], []
    for tri in fan_triangles(poly, apex):
        r = triangle_rule(tri)
        if r.weights[0] > 0:
            pts.append(r.points)
            wts.append(r.weights)
    if not pts:
        return QuadratureRule(np.zeros((0, 2)), np.zeros(0))
    return QuadratureRule(np.concatenate(pts), np.concatenate(wts))


def cut_volume_rule(geometry: CutGeometry, element: int, apex: int = 0) -> QuadratureRule:
    """Rule on T cap Omega_h for one INSIDE or CUT element."""
    cls = geometry.classification[element]
    xy = geometry.mesh.element_coords[element]
    if cls == ElementClass.INSIDE:
        rule = triangle_rule(xy)
    elif cls == ElementClass.CUT:
        rule = polygon_rule(geometry.cut_polygons[element] @ xy, apex)
    else:
        raise InvalidArgument(f"element {element} is outside the domain")
    return QuadratureRule(rule.points, rule.weights, np.full(len(rule), element))


def volume_rule(geometry: CutGeometry) -> QuadratureRule:
    """Concatenated rule over Omega_h: vectorized on INSIDE elements, fan
    split on CUT elements."""
    mesh = geometry.mesh
    ins = geometry.inside_elements
    p = mesh.element_coords[ins]
    mids = 0.5 * (p + np.roll(p, -1, axis=1))
    pts = [mids.reshape(-1, 2)]
    wts = [np.repeat(mesh.areas[ins] / 3.0, 3)]
    els = [np.repeat(ins, 3)]
    for t in geometry.cut_elements:
        r = cut_volume_rule(geometry, t)
        pts.append(r.points)
        wts.append(r.weights)
        els.append(r.elements)
    return QuadratureRule(np.concatenate(pts), np.concatenate(wts), np.concatenate(els))


def full_mesh_rule(mesh) -> QuadratureRule:
    """Edge-midpoint rule on every background element (the box Omega_0)."""
    p = mesh.element_coords
    mids = 0.5 * (p + np.roll(p, -1, axis=1))
    return QuadratureRule(mids.reshape(-1, 2), np.repeat(mesh.areas / 3.0, 3),
                          np.repeat(np.arange(mesh.num_elements), 3))


def _gauss_on(p0: np.ndarray, p1: np.ndarray):
    d = p1 - p0
    length = np.hypot(d[:, 0], d[:, 1])
    pts = p0[:, None, :] + GAUSS2[None, :, None] * d[:, None, :]
    return pts.reshape(-1, 2), np.repeat(0.5 * length, 2)


def interface_rule(p0, p1) -> QuadratureRule:
    """Two-point Gauss rule on the chord p0-p1."""
    p0 = np.asarray(p0, dtype=float).reshape(1, 2)
    p1 = np.asarray(p1, dtype=float).reshape(1, 2)
    if not np.hypot(*(p1 - p0)[0]) > 0:
        raise InvalidArgument("zero-length segment")
    pts, wts = _gauss_on(p0, p1)
    return QuadratureRule(pts, wts)


def segments_rule(segments: Segments | BoundaryPieces) -> QuadratureRule:
    """Gauss-2 on every segment; carries owner elements and normals."""
    if len(segments) == 0:
        z = np.zeros((0, 2))
        return QuadratureRule(z, np.zeros(0), np.zeros(0, dtype=np.int64), z.copy())
    pts, wts = _gauss_on(segments.p0, segments.p1)
    if np.any(wts <= 0):
        raise InvalidArgument("zero-length segment")
    return QuadratureRule(pts, wts, np.repeat(segments.element, 2), np.repeat(segments.normal, 2, axis=0))


def fitted_facet_rule(mesh, face: int) -> QuadratureRule:
    """Two-point Gauss rule on an outer-square facet."""
    if mesh.face_elements[face, 1] != -1:
        raise InvalidArgument(f"face {face} is not on the outer boundary")
    a, b = mesh.face_vertices[face]
    pts, wts = _gauss_on(mesh.vertices[a][None], mesh.vertices[b][None])
    return QuadratureRule(pts, wts, np.full(2, mesh.face_elements[face, 0]),
                          np.repeat(mesh.face_normals[face][None], 2, axis=0))
