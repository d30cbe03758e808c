"""P1 level sets on the background mesh: analytic fields, element
classification, interface extraction and signed-distance reinitialization.

Sign convention: the physical domain is where the level set is negative.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .errors import EmptyDomain, InvalidArgument, NumericError
from .mesh import BackgroundMesh, locate_points

Evaluator = Callable[[np.ndarray], np.ndarray]

SNAP = 1e-10  # relative to h


class Orientation(enum.Enum):
    INTERIOR_NEGATIVE = "interior"   # domain is the disk
    EXTERIOR_NEGATIVE = "exterior"   # domain is the complement of the disk


class ElementClass(enum.IntEnum):
    INSIDE = 0
    CUT = 1
    OUTSIDE = 2


def signed_distance_circle(center, radius: float,
                           orientation: Orientation = Orientation.INTERIOR_NEGATIVE) -> Evaluator:
    if not radius > 0:
        raise InvalidArgument(f"radius must be positive, got {radius}")
    c = np.asarray(center, dtype=float)
    sign = 1.0 if orientation is Orientation.INTERIOR_NEGATIVE else -1.0

    def phi(x):
        x = np.asarray(x, dtype=float)
        return sign * (np.linalg.norm(x - c, axis=-1) - radius)

    return phi


def csg_union_intersect(fields: Sequence[Evaluator], op: str) -> Evaluator:
    """Pointwise ``min`` (union of negative regions) or ``max`` (intersection)."""
    fields = list(fields)
    if not fields:
        raise InvalidArgument("at least one field is required")
    reducer = {"min": np.minimum, "max": np.maximum}.get(str(op).lower())
    if reducer is None:
        raise InvalidArgument(f"op must be 'min' or 'max', got {op!r}")

    def phi(x):
        out = np.asarray(fields[0](x), dtype=float)
        for f in fields[1:]:
            out = reducer(out, f(x))
        return out

    return phi


def negate(f: Evaluator) -> Evaluator:
    return lambda x: -np.asarray(f(x), dtype=float)


@dataclass(frozen=True, eq=False)
class LevelSet:
    values: np.ndarray
    h: float

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise NumericError("level set has non-finite values")

    def element_gradients(self, mesh: BackgroundMesh) -> np.ndarray:
        return np.einsum("tk,tkd->td", self.values[mesh.triangles], mesh.basis_gradients)


def sample_to_nodes(evaluator: Evaluator, mesh: BackgroundMesh) -> LevelSet:
    values = np.asarray(evaluator(mesh.vertices), dtype=float).reshape(mesh.num_vertices)
    if not np.all(np.isfinite(values)):
        raise NumericError("evaluator returned non-finite values at mesh vertices")
    return LevelSet(values.copy(), mesh.h)


def snapped(values: np.ndarray, h: float) -> np.ndarray:
    """Move near-zero vertex values to a tiny negative value (inside)."""
    out = np.array(values, dtype=float)
    out[np.abs(out) < SNAP * h] = -SNAP * h
    return out


@dataclass(frozen=True, eq=False)
class Segments:
    """Straight interface pieces, one row per segment.

    ``normal`` points from the domain ({phi < 0}) out of it.
    """

    p0: np.ndarray
    p1: np.ndarray
    element: np.ndarray
    normal: np.ndarray

    @classmethod
    def empty(cls) -> "Segments":
        z = np.zeros((0, 2))
        return cls(z, z.copy(), np.zeros(0, dtype=np.int64), z.copy())

    @property
    def length(self) -> np.ndarray:
        d = self.p1 - self.p0
        return np.hypot(d[:, 0], d[:, 1])

    def __len__(self) -> int:
        return len(self.element)


@dataclass(frozen=True, eq=False)
class BoundaryPieces:
    """Parts of outer-square faces lying in the closure of the domain."""

    face: np.ndarray
    p0: np.ndarray
    p1: np.ndarray
    element: np.ndarray
    normal: np.ndarray

    @property
    def length(self) -> np.ndarray:
        d = self.p1 - self.p0
        return np.hypot(d[:, 0], d[:, 1])

    def __len__(self) -> int:
        return len(self.face)


@dataclass(frozen=True, eq=False)
class CutGeometry:
    """Classification of the background mesh against the domain {phi<0, fixed<0}.

    ``interface`` holds the free boundary, ``fixed_interface`` the unfitted
    fixed boundary (empty when no fixed level set is given) and
    ``outer_boundary`` the fitted pieces of the outer square.
    ``cut_polygons`` maps every CUT element to the barycentric coordinates of
    the convex polygon T cap Omega_h.
    """

    mesh: BackgroundMesh
    phi: np.ndarray
    fixed: np.ndarray | None
    classification: np.ndarray
    ghost_faces: np.ndarray
    interface: Segments
    fixed_interface: Segments
    outer_boundary: BoundaryPieces
    cut_polygons: dict = field(repr=False)
    cache: dict = field(default_factory=dict, repr=False)  # derived quadrature, filled lazily

    @property
    def h(self) -> float:
        return self.mesh.h

    @cached_property
    def active_elements(self) -> np.ndarray:
        return np.flatnonzero(self.classification != ElementClass.OUTSIDE)

    @cached_property
    def inside_elements(self) -> np.ndarray:
        return np.flatnonzero(self.classification == ElementClass.INSIDE)

    @cached_property
    def cut_elements(self) -> np.ndarray:
        return np.flatnonzero(self.classification == ElementClass.CUT)

    @cached_property
    def active_vertices(self) -> np.ndarray:
        mask = np.zeros(self.mesh.num_vertices, dtype=bool)
        mask[self.mesh.triangles[self.active_elements].ravel()] = True
        return mask

    @cached_property
    def element_measure(self) -> np.ndarray:
        """|T cap Omega_h| for every background element."""
        m = np.where(self.classification == ElementClass.INSIDE, self.mesh.areas, 0.0)
        for t, poly in self.cut_polygons.items():
            m[t] = polygon_area(poly @ self.mesh.element_coords[t])
        return m


def polygon_area(p: np.ndarray) -> float:
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def clip_polygon(bary: np.ndarray, vals: np.ndarray) -> np.ndarray:
    """Part of a convex polygon where a linear function is negative.

    ``bary`` holds polygon vertices as rows (any coordinates in which the
    function is affine), ``vals`` the function at those vertices.
    """
    out = []
    k = len(bary)
    for i in range(k):
        j = (i + 1) % k
        a, b = vals[i], vals[j]
        if a < 0:
            out.append(bary[i])
        if (a < 0) != (b < 0):
            s = a / (a - b)
            out.append(bary[i] + s * (bary[j] - bary[i]))
    return np.array(out).reshape(-1, bary.shape[1])


def _clip_segment(q0, q1, f0, f1):
    """Part of segment q0-q1 where the affine function (f0 at q0, f1 at q1) is negative."""
    if f0 < 0 and f1 < 0:
        return q0, q1
    if f0 >= 0 and f1 >= 0:
        return None
    s = f0 / (f0 - f1)
    q = q0 + s * (q1 - q0)
    return (q0, q) if f0 < 0 else (q, q1)


def _zero_chord(lam_vals: np.ndarray):
    """Barycentric endpoints of the zero line of an affine function on a triangle."""
    pts = []
    for i in range(3):
        j = (i + 1) % 3
        a, b = lam_vals[i], lam_vals[j]
        if (a < 0) != (b < 0):
            s = a / (a - b)
            q = np.zeros(3)
            q[i] = 1 - s
            q[j] = s
            pts.append(q)
    return pts


def classify(mesh: BackgroundMesh, phi: LevelSet, fixed: LevelSet | None = None) -> CutGeometry:
    """Classify elements against Omega_h = {phi_h < 0} (cap {fixed_h < 0})."""
    h = mesh.h
    pv = snapped(phi.values, h)
    fv = None if fixed is None else snapped(fixed.values, h)
    tri = mesh.triangles
    neg = pv[tri] < 0
    if fv is not None:
        fneg = fv[tri] < 0
        inside = neg.all(1) & fneg.all(1)
        outside = (~neg).all(1) | (~fneg).all(1)
    else:
        inside = neg.all(1)
        outside = (~neg).all(1)
    cls = np.full(mesh.num_elements, ElementClass.CUT, dtype=np.int8)
    cls[inside] = ElementClass.INSIDE
    cls[outside] = ElementClass.OUTSIDE

    grad_phi = np.einsum("tk,tkd->td", pv[tri], mesh.basis_gradients)
    grad_fix = None if fv is None else np.einsum("tk,tkd->td", fv[tri], mesh.basis_gradients)
    eye = np.eye(3)
    polygons = {}
    free, fixd = [], []
    for t in np.flatnonzero(cls == ElementClass.CUT):
        xy = mesh.element_coords[t]
        poly = clip_polygon(eye, pv[tri[t]])
        if fv is not None:
            poly = clip_polygon(poly, poly @ fv[tri[t]])
        if len(poly) < 3 or polygon_area(poly @ xy) <= 0.0:
            cls[t] = ElementClass.OUTSIDE
            continue
        polygons[t] = poly
        if not neg[t].all():
            free_seg = _chord_in(pv[tri[t]], None if fv is None else fv[tri[t]])
            if free_seg is not None:
                free.append((t, free_seg[0] @ xy, free_seg[1] @ xy))
        if fv is not None and not fneg[t].all():
            fix_seg = _chord_in(fv[tri[t]], pv[tri[t]])
            if fix_seg is not None:
                fixd.append((t, fix_seg[0] @ xy, fix_seg[1] @ xy))

    if not np.any(cls != ElementClass.OUTSIDE):
        raise EmptyDomain("level set describes an empty domain")

    active = cls != ElementClass.OUTSIDE
    iface = mesh.interior_faces
    left, right = mesh.face_elements[iface, 0], mesh.face_elements[iface, 1]
    both = active[left] & active[right]
    anycut = (cls[left] == ElementClass.CUT) | (cls[right] == ElementClass.CUT)
    ghost = iface[both & anycut]

    return CutGeometry(
        mesh=mesh,
        phi=pv,
        fixed=fv,
        classification=cls,
        ghost_faces=ghost,
        interface=_segments(free, grad_phi),
        fixed_interface=_segments(fixd, grad_fix),
        outer_boundary=_outer_pieces(mesh, pv, fv, active),
        cut_polygons=polygons,
    )


def _chord_in(vals, other):
    pts = _zero_chord(vals)
    if len(pts) != 2:
        return None
    q0, q1 = pts
    if other is not None:
        clipped = _clip_segment(q0, q1, q0 @ other, q1 @ other)
        if clipped is None:
            return None
        q0, q1 = clipped
    return q0, q1


def _segments(items, grads) -> Segments:
    items = [it for it in items if np.hypot(*(it[2] - it[1])) > 0.0]
    if not items:
        return Segments.empty()
    el = np.array([it[0] for it in items], dtype=np.int64)
    p0 = np.array([it[1] for it in items])
    p1 = np.array([it[2] for it in items])
    g = grads[el]
    return Segments(p0, p1, el, g / np.linalg.norm(g, axis=1, keepdims=True))


def _outer_pieces(mesh, pv, fv, active) -> BoundaryPieces:
    bf = mesh.boundary_faces
    el = mesh.face_elements[bf, 0]
    keep_f, keep_p0, keep_p1 = [], [], []
    for f, t in zip(bf, el):
        if not active[t]:
            continue
        a, b = mesh.face_vertices[f]
        q0, q1 = mesh.vertices[a], mesh.vertices[b]
        seg = _clip_segment(q0, q1, pv[a], pv[b])
        if seg is not None and fv is not None:
            s0, s1 = seg
            # fixed field is affine along the face; evaluate at the clipped ends
            L = np.hypot(*(q1 - q0))
            w0 = np.hypot(*(s0 - q0)) / L
            w1 = np.hypot(*(s1 - q0)) / L
            seg = _clip_segment(s0, s1, (1 - w0) * fv[a] + w0 * fv[b], (1 - w1) * fv[a] + w1 * fv[b])
        if seg is None or np.hypot(*(seg[1] - seg[0])) <= 0.0:
            continue
        keep_f.append(f)
        keep_p0.append(seg[0])
        keep_p1.append(seg[1])
    face = np.array(keep_f, dtype=np.int64)
    shape = (len(face), 2)
    return BoundaryPieces(
        face=face,
        p0=np.array(keep_p0).reshape(shape),
        p1=np.array(keep_p1).reshape(shape),
        element=mesh.face_elements[face, 0],
        normal=mesh.face_normals[face],
    )


# ---------------------------------------------------------------------------
# reinitialization


def interface_of(mesh: BackgroundMesh, phi: LevelSet) -> Segments:
    """Zero-contour polyline of a single level set (ignores fixed boundaries)."""
    return classify(mesh, phi).interface


def point_segment_distance(points: np.ndarray, p0: np.ndarray, p1: np.ndarray,
                           chunk: int = 2048, return_index: bool = False):
    """Distance from every point to the nearest of the segments p0-p1."""
    points = np.atleast_2d(points)
    out = np.empty(len(points))
    idx = np.empty(len(points), dtype=np.int64)
    d = p1 - p0
    dd = np.maximum(np.einsum("sd,sd->s", d, d), 1e-300)
    for s in range(0, len(points), chunk):
        x = points[s:s + chunk, None, :]
        t = np.clip(np.einsum("msd,sd->ms", x - p0[None], d) / dd, 0.0, 1.0)
        proj = p0[None] + t[..., None] * d[None]
        d2 = ((x - proj) ** 2).sum(-1)
        k = d2.argmin(axis=1)
        idx[s:s + chunk] = k
        out[s:s + chunk] = np.sqrt(d2[np.arange(len(k)), k])
    return (out, idx) if return_index else out


def _paired_distance(x: np.ndarray, p0: np.ndarray, p1: np.ndarray) -> np.ndarray:
    d = p1 - p0
    t = np.clip(np.einsum("md,md->m", x - p0, d) / np.maximum(np.einsum("md,md->m", d, d), 1e-300),
                0.0, 1.0)
    return np.hypot(*(x - p0 - t[:, None] * d).T)


def _sweep_fronts(m: int, frozen: np.ndarray):
    """Yield, for each of the four orderings, the free points of each anti-diagonal.

    Points on one anti-diagonal do not depend on each other, so updating them
    together reproduces the lexicographic Gauss-Seidel sweep exactly.
    """
    ii, jj = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    s = (ii + jj).ravel()
    order = np.argsort(s, kind="stable")
    bounds = np.append(np.searchsorted(s[order], np.arange(2 * m - 1)), m * m)
    flat_i, flat_j = ii.ravel()[order], jj.ravel()[order]
    fronts = []
    for fi, fj in _ORDERINGS:
        I = (m - 1 - flat_i) if fi else flat_i
        J = (m - 1 - flat_j) if fj else flat_j
        sweep = []
        for k in range(2 * m - 1):
            pi, pj = I[bounds[k]:bounds[k + 1]], J[bounds[k]:bounds[k + 1]]
            keep = ~frozen[pi, pj]
            if keep.any():
                sweep.append((pi[keep] + 1, pj[keep] + 1))
        fronts.append(sweep)
    return fronts


_ORDERINGS = ((False, False), (True, False), (True, True), (False, True))


def _godunov_sweeps(u, frozen, dx, iterations):
    m = u.shape[0]
    pad = np.full((m + 2, m + 2), 1e6)
    pad[1:-1, 1:-1] = u
    fronts = _sweep_fronts(m, frozen)
    for _ in range(iterations):
        for sweep in fronts:
            for pi, pj in sweep:
                a = np.minimum(pad[pi - 1, pj], pad[pi + 1, pj])
                b = np.minimum(pad[pi, pj - 1], pad[pi, pj + 1])
                diff = np.abs(a - b)
                x = np.where(diff >= dx, np.minimum(a, b) + dx,
                             0.5 * (a + b + np.sqrt(np.maximum(2 * dx * dx - diff ** 2, 0.0))))
                pad[pi, pj] = np.minimum(pad[pi, pj], x)
    return pad[1:-1, 1:-1]


def _closest_segment_sweeps(u, nearest, frozen, xy, p0, p1, iterations):
    """Sweeps that propagate the index of the nearest interface segment.

    A point tries the nearest segments recorded at its three upwind
    neighbors (already visited in the current ordering) and keeps the closest, so the result is the exact distance to the
    polyline wherever the propagation found the true nearest segment.
    """
    m = u.shape[0]
    pad = np.full((m + 2, m + 2), np.inf)
    pad[1:-1, 1:-1] = u
    near = np.full((m + 2, m + 2), -1, dtype=np.int64)
    near[1:-1, 1:-1] = nearest
    pxy = np.zeros((m + 2, m + 2, 2))
    pxy[1:-1, 1:-1] = xy
    fronts = _sweep_fronts(m, frozen)
    for _ in range(iterations):
        changed = False
        for (fi, fj), sweep in zip(_ORDERINGS, fronts):
            si, sj = (1 if fi else -1), (1 if fj else -1)
            upwind = ((si, 0), (0, sj), (si, sj))
            for pi, pj in sweep:
                cand = np.stack([near[pi + di, pj + dj] for di, dj in upwind])
                ok = cand >= 0
                if not ok.any():
                    continue
                x = np.broadcast_to(pxy[pi, pj], (3,) + pxy[pi, pj].shape)[ok]
                c = cand[ok]
                dist = np.full(cand.shape, np.inf)
                dist[ok] = _paired_distance(x, p0[c], p1[c])
                k = dist.argmin(axis=0)
                cols = np.arange(len(pi))
                better = dist[k, cols] < pad[pi, pj]
                if better.any():
                    changed = True
                    pad[pi[better], pj[better]] = dist[k, cols][better]
                    near[pi[better], pj[better]] = cand[k, cols][better]
        if not changed:
            break
    return pad[1:-1, 1:-1]


def fast_sweep_reinit(phi: LevelSet, mesh: BackgroundMesh, sweeps: int = 4,
                      update: str = "closest") -> LevelSet:
    """Restore the signed-distance property of ``phi`` keeping its zero set.

    Grid points in and around cut elements are frozen at their distance to
    the extracted polyline. The rest is filled by Gauss-Seidel sweeps in four
    orderings on the Cartesian grid of spacing h/2 (it contains every mesh
    vertex). ``update="closest"`` propagates nearest-segment indices and is
    near exact; ``update="godunov"`` is the classical first-order upwind
    update for the Eikonal equation.
    """
    if sweeps < 1:
        raise InvalidArgument("sweeps must be >= 1")
    if update not in ("closest", "godunov"):
        raise InvalidArgument(f"unknown sweep update {update!r}")
    pv = snapped(phi.values, mesh.h)
    if np.all(pv < 0) or np.all(pv > 0):
        raise EmptyDomain("level set has no sign change")
    geom = classify(mesh, LevelSet(pv, mesh.h))
    seg = geom.interface
    band_vertices = np.zeros(mesh.num_vertices, dtype=bool)
    band_vertices[mesh.triangles[geom.cut_elements].ravel()] = True
    # grid points inside any element touching a cut element are frozen too
    band_elements = band_vertices[mesh.triangles].any(axis=1)

    n = mesh.n
    m = 2 * n + 1
    rows, cols = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    grid_xy = np.stack([cols.ravel(), rows.ravel()], axis=1) / (2 * n)
    owner, _ = locate_points(mesh, grid_xy)
    in_band = np.flatnonzero(band_elements[owner])
    u = np.full(m * m, 1e6)
    nearest = np.full(m * m, -1, dtype=np.int64)
    u[in_band], nearest[in_band] = point_segment_distance(
        grid_xy[in_band], seg.p0, seg.p1, return_index=True)
    frozen = np.zeros((m, m), dtype=bool)
    frozen.ravel()[in_band] = True

    if update == "godunov":
        u = _godunov_sweeps(u.reshape(m, m), frozen, 1.0 / (2 * n), sweeps)
    else:
        u = _closest_segment_sweeps(u.reshape(m, m), nearest.reshape(m, m), frozen,
                                    grid_xy.reshape(m, m, 2), seg.p0, seg.p1, sweeps)
    gi = np.rint(mesh.vertices * 2 * n).astype(np.int64)  # (col, row) on the grid
    out = np.sign(pv) * u[gi[:, 1], gi[:, 0]]
    return LevelSet(out, mesh.h)
