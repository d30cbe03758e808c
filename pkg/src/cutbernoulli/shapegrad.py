"""Discrete shape derivative of the Lagrangian and its H^1 Riesz representative.

The shape derivative is assembled in volume form as a covector over the
vector hat basis theta_{i,k} = phi_i e_k on the whole background mesh.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, InvalidArgument, StationaryPoint
from .fem import FemField, interface_rule, volume_rule
from .linsolve import assemble, eliminate, solve_spd
from .levelset import snapped
from .mesh import BackgroundMesh
from .problems import ProblemDefinition


@dataclass(frozen=True, eq=False)
class ShapeGradient:
    """``values[i, k]`` is the derivative of the Lagrangian along phi_i e_k."""

    values: np.ndarray

    def dot(self, theta: np.ndarray) -> float:
        return float(np.sum(self.values * theta))

    def __mul__(self, c: float) -> "ShapeGradient":
        return ShapeGradient(self.values * c)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class VelocityField:
    values: np.ndarray  # (nv, 2)
    norm: float         # sqrt(b(v, v))


def assemble_shape_gradient(u_h: FemField, p_h: FemField, problem: ProblemDefinition,
                            printed_signs: bool = False) -> ShapeGradient:
    """Volume-form shape derivative with the discrete primal and dual fields.

    For every basis field theta this evaluates

        int_Omega grad u (D theta + D theta^T) grad p
      + int_Omega (theta . grad f) p
      + int_Omega div(theta) (f p - grad u . grad p)
      + int_Gamma div_Gamma(theta) (u^2 / 2 + g_N p)

    where div_Gamma(theta) = div(theta) - n . D theta n. The first line comes
    from the material derivative of grad u . grad p, whose commutator with the
    gradient is -(D theta)^T grad u. ``printed_signs=True`` instead uses
    -int grad u (D theta + D theta^T) grad p and div(theta) (f - grad u . grad p);
    it exists only for comparison against finite differences.
    """
    geometry = u_h.geometry
    if p_h.geometry is not geometry:
        raise InvalidArgument("u_h and p_h live on different geometries")
    mesh = geometry.mesh
    nv = mesh.num_vertices
    if problem.grad_f is None and not problem.f_is_zero:
        raise ConfigError("the shape gradient needs grad_f when f is not identically zero")
    u, p = u_h.coefficients, p_h.coefficients
    out = np.zeros((nv, 2))

    act = geometry.active_elements
    G = mesh.basis_gradients[act]                       # (t, 3, 2)
    mu = geometry.element_measure[act]
    gu = u_h.element_gradients()[act]
    gp = p_h.element_gradients()[act]
    Gp = np.einsum("tid,td->ti", G, gp)
    Gu = np.einsum("tid,td->ti", G, gu)
    sym = np.einsum("td,ti->tid", gu, Gp) + np.einsum("td,ti->tid", gp, Gu)
    dot_up = np.einsum("td,td->t", gu, gp)
    first_sign = -1.0 if printed_signs else 1.0
    local = mu[:, None, None] * (first_sign * sym - dot_up[:, None, None] * G)

    vr = volume_rule(geometry)
    if not problem.f_is_zero:
        fq = problem.f(vr.points)
        pq = vr.values(p)
        # int_T f p (or int_T f) per element, times the constant div of each basis field
        weight = fq if printed_signs else fq * pq
        per_el = np.bincount(vr.elements, vr.weights * weight, minlength=mesh.num_elements)[act]
        local += per_el[:, None, None] * G
        gf = problem.grad_f(vr.points)                  # (q, 2)
        contrib = (vr.weights * pq)[:, None, None] * vr.lam[:, :, None] * gf[:, None, :]
        for k in range(2):
            out[:, k] += np.bincount(vr.dofs.ravel(), contrib[:, :, k].ravel(), minlength=nv)
    tri = mesh.triangles[act]
    for k in range(2):
        out[:, k] += np.bincount(tri.ravel(), local[:, :, k].ravel(), minlength=nv)

    gr = interface_rule(geometry)
    if len(gr.weights):
        nrm = gr.normals
        Gq = gr.grads                                    # (q, 3, 2)
        Gn = np.einsum("qid,qd->qi", Gq, nrm)
        surf_div = Gq - Gn[:, :, None] * nrm[:, None, :]   # d_k phi_i - n_k (grad phi_i . n)
        data = 0.5 * gr.values(u) ** 2 + problem.g_N * gr.values(p)
        contrib = (gr.weights * data)[:, None, None] * surf_div
        for k in range(2):
            out[:, k] += np.bincount(gr.dofs.ravel(), contrib[:, :, k].ravel(), minlength=nv)
    return ShapeGradient(out)


# ---------------------------------------------------------------------------
# H^1_0 Riesz map


@dataclass(frozen=True, eq=False)
class H1Product:
    """b(v, w) = int (Dv : Dw + v . w) over the box, per component.

    ``scalar`` is the stiffness-plus-mass matrix of one component; ``matrix``
    the same with boundary vertices identity-eliminated (H^1_0).
    """

    mesh: BackgroundMesh
    scalar: sp.csr_matrix
    matrix: sp.csr_matrix
    interior: np.ndarray

    def inner(self, v: np.ndarray, w: np.ndarray) -> float:
        return float(sum(v[:, k] @ (self.scalar @ w[:, k]) for k in range(v.shape[1])))

    def block(self) -> sp.csr_matrix:
        """The full vector-valued operator (two decoupled diagonal blocks)."""
        return sp.block_diag([self.scalar, self.scalar], format="csr")


def stiffness_and_mass(mesh: BackgroundMesh):
    G = mesh.basis_gradients
    A = mesh.areas
    tri = mesh.triangles
    rows, cols = np.repeat(tri, 3, axis=1), np.tile(tri, (1, 3))
    K = assemble(rows, cols, A[:, None, None] * np.einsum("tid,tjd->tij", G, G), mesh.num_vertices)
    local_m = (A / 12.0)[:, None, None] * (np.ones((3, 3)) + np.eye(3))
    M = assemble(rows, cols, np.broadcast_to(local_m, (len(tri), 3, 3)), mesh.num_vertices)
    return K, M


def assemble_h1_product(mesh: BackgroundMesh, clamped: np.ndarray | None = None) -> H1Product:
    """b-form with homogeneous Dirichlet rows on the box boundary.

    ``clamped`` marks additional vertices where velocities must vanish, such as
    the neighbourhood of fixed unfitted boundaries that the flow may not move.
    """
    K, M = stiffness_and_mass(mesh)
    B = (K + M).tocsr()
    interior = np.ones(mesh.num_vertices, dtype=bool)
    interior[mesh.boundary_vertices] = False
    if clamped is not None:
        interior &= ~np.asarray(clamped, dtype=bool)
    return H1Product(mesh, B, eliminate(B, interior), interior)


def fixed_boundary_vertices(mesh: BackgroundMesh, fixed) -> np.ndarray:
    """Vertices of elements that meet the region {fixed >= 0}."""
    vals = snapped(fixed.values, mesh.h)
    touch = (vals[mesh.triangles] > 0).any(axis=1)
    mask = np.zeros(mesh.num_vertices, dtype=bool)
    mask[mesh.triangles[touch].ravel()] = True
    return mask


def solve_velocity(bform: H1Product, g: ShapeGradient, tol: float = 1e-10) -> VelocityField:
    """Unnormalized velocity: b(beta', theta) = -g(theta) for all theta in V_h cap H^1_0."""
    beta = np.zeros_like(g.values)
    for k in range(g.values.shape[1]):
        rhs = np.where(bform.interior, -g.values[:, k], 0.0)
        beta[:, k] = solve_spd(bform.matrix, rhs, tol=tol)
    beta[~bform.interior] = 0.0
    return VelocityField(beta, float(np.sqrt(max(bform.inner(beta, beta), 0.0))))


def normalize_velocity(beta: VelocityField, bform: H1Product, eps: float = 1e-14) -> VelocityField:
    norm = float(np.sqrt(max(bform.inner(beta.values, beta.values), 0.0)))
    if norm <= eps:
        raise StationaryPoint(f"velocity norm {norm:.3e} below {eps:.1e}")
    return VelocityField(beta.values / norm, 1.0)


def interpolate_vector(mesh: BackgroundMesh, func) -> np.ndarray:
    """Nodal interpolant of a vector field ``func(x) -> (m, 2)``."""
    return np.asarray(func(mesh.vertices), dtype=float).reshape(mesh.num_vertices, 2)
