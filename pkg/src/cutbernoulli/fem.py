"""CutFEM for the Poisson problem on Omega_h = {phi_h < 0}.

Dirichlet data on the fixed boundary is imposed with Nitsche's method. The
fixed boundary is the fitted part of the outer square plus, optionally, the
unfitted zero set of a static level set. Gradient jumps are penalized on
faces next to cut elements. P1 elements throughout.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import cutquad
from .errors import EmptyDomain
from .levelset import CutGeometry
from .linsolve import SparseSystem, assemble, eliminate, solve_spd
from .problems import ProblemDefinition


@dataclass(frozen=True)
class FemParams:
    gamma_D: float = 10.0
    gamma_1: float = 1.0
    tol: float = 1e-10
    max_iter: int | None = None


@dataclass(frozen=True, eq=False)
class FemField:
    """Nodal P1 coefficients on the background vertices (zero where inactive)."""

    coefficients: np.ndarray
    geometry: CutGeometry
    matrix: sp.csr_matrix | None = field(default=None, repr=False)

    def element_gradients(self) -> np.ndarray:
        mesh = self.geometry.mesh
        return np.einsum("tk,tkd->td", self.coefficients[mesh.triangles], mesh.basis_gradients)

    def at(self, rule: cutquad.QuadratureRule, lam: np.ndarray | None = None) -> np.ndarray:
        mesh = self.geometry.mesh
        if lam is None:
            lam = mesh.barycentric(rule.elements, rule.points)
        return np.einsum("qk,qk->q", lam, self.coefficients[mesh.triangles[rule.elements]])


@dataclass(frozen=True, eq=False)
class TabulatedRule:
    """A quadrature rule with barycentric values and basis gradients cached."""

    rule: cutquad.QuadratureRule
    lam: np.ndarray      # (q, 3)
    dofs: np.ndarray     # (q, 3)
    grads: np.ndarray    # (q, 3, 2)

    @property
    def weights(self):
        return self.rule.weights

    @property
    def points(self):
        return self.rule.points

    @property
    def elements(self):
        return self.rule.elements

    @property
    def normals(self):
        return self.rule.normals

    def values(self, coefficients: np.ndarray) -> np.ndarray:
        return np.einsum("qk,qk->q", self.lam, coefficients[self.dofs])

    def normal_grads(self) -> np.ndarray:
        """d(phi_i)/dn at each point, shape (q, 3)."""
        return np.einsum("qkd,qd->qk", self.grads, self.rule.normals)

    def load(self, values: np.ndarray, n: int) -> np.ndarray:
        """Vector with entries sum_q w_q values_q phi_i(x_q)."""
        return np.bincount(self.dofs.ravel(), (self.lam * (self.weights * values)[:, None]).ravel(),
                           minlength=n)


def tabulate(geometry: CutGeometry, rule: cutquad.QuadratureRule) -> TabulatedRule:
    mesh = geometry.mesh
    lam = mesh.barycentric(rule.elements, rule.points) if len(rule) else np.zeros((0, 3))
    return TabulatedRule(rule, lam, mesh.triangles[rule.elements], mesh.basis_gradients[rule.elements])


def _cached(geometry: CutGeometry, key: str, build):
    if key not in geometry.cache:
        geometry.cache[key] = build()
    return geometry.cache[key]


def volume_rule(geometry: CutGeometry) -> TabulatedRule:
    return _cached(geometry, "volume", lambda: tabulate(geometry, cutquad.volume_rule(geometry)))


def interface_rule(geometry: CutGeometry) -> TabulatedRule:
    """Quadrature on the free boundary Gamma."""
    return _cached(geometry, "gamma", lambda: tabulate(geometry, cutquad.segments_rule(geometry.interface)))


def dirichlet_rule(geometry: CutGeometry) -> TabulatedRule:
    """Quadrature on the fixed boundary: fitted outer facets plus unfitted fixed chords."""

    def build():
        a = cutquad.segments_rule(geometry.outer_boundary)
        b = cutquad.segments_rule(geometry.fixed_interface)
        rule = cutquad.QuadratureRule(
            np.concatenate([a.points, b.points]),
            np.concatenate([a.weights, b.weights]),
            np.concatenate([a.elements, b.elements]).astype(np.int64),
            np.concatenate([a.normals, b.normals]),
        )
        return tabulate(geometry, rule)

    return _cached(geometry, "dirichlet", build)


# ---------------------------------------------------------------------------
# bilinear forms


def stiffness_matrix(geometry: CutGeometry) -> sp.csr_matrix:
    """(grad v, grad w) over Omega_h."""
    mesh = geometry.mesh
    act = geometry.active_elements
    G = mesh.basis_gradients[act]
    local = geometry.element_measure[act, None, None] * np.einsum("tid,tjd->tij", G, G)
    tri = mesh.triangles[act]
    return assemble(np.repeat(tri, 3, axis=1), np.tile(tri, (1, 3)), local, mesh.num_vertices)


def _local_to_global(dofs, local, n):
    k = dofs.shape[1]
    return assemble(np.repeat(dofs, k, axis=1), np.tile(dofs, (1, k)), local, n)


def nitsche_matrix(geometry: CutGeometry, gamma_D: float) -> sp.csr_matrix:
    """-(dv/dn, w) - (dw/dn, v) + (gamma_D/h v, w) on the fixed boundary."""
    r = dirichlet_rule(geometry)
    n = geometry.mesh.num_vertices
    if len(r.weights) == 0:
        return sp.csr_matrix((n, n))
    gn = r.normal_grads()
    lam = r.lam
    local = r.weights[:, None, None] * (
        -np.einsum("qj,qi->qij", gn, lam) - np.einsum("qi,qj->qij", gn, lam)
        + (gamma_D / geometry.h) * np.einsum("qi,qj->qij", lam, lam)
    )
    return _local_to_global(r.dofs, local, n)


def face_jump_matrix(mesh, faces: np.ndarray, weight: float) -> sp.csr_matrix:
    """sum_F weight * |F| [dv/dn] [dw/dn] for P1 fields (jumps are constant on F)."""
    n = mesh.num_vertices
    if len(faces) == 0:
        return sp.csr_matrix((n, n))
    left, right = mesh.face_elements[faces, 0], mesh.face_elements[faces, 1]
    nf = mesh.face_normals[faces]
    c = np.concatenate([
        np.einsum("fkd,fd->fk", mesh.basis_gradients[left], nf),
        -np.einsum("fkd,fd->fk", mesh.basis_gradients[right], nf),
    ], axis=1)
    dofs = np.concatenate([mesh.triangles[left], mesh.triangles[right]], axis=1)
    local = (weight * mesh.face_lengths[faces])[:, None, None] * np.einsum("fi,fj->fij", c, c)
    return _local_to_global(dofs, local, n)


def ghost_penalty_matrix(geometry: CutGeometry, gamma_1: float) -> sp.csr_matrix:
    """s_h: gamma_1 h [dv/dn][dw/dn] over the ghost faces."""
    return face_jump_matrix(geometry.mesh, geometry.ghost_faces, gamma_1 * geometry.h)


def nitsche_form(geometry: CutGeometry, gamma_D: float) -> sp.csr_matrix:
    """a_h without stabilization, on the full background index set."""
    return (stiffness_matrix(geometry) + nitsche_matrix(geometry, gamma_D)).tocsr()


def assemble_bilinear(geometry: CutGeometry, gamma_D: float = 10.0, gamma_1: float = 1.0) -> SparseSystem:
    """A_h = a_h + s_h with inactive vertices identity-eliminated."""
    if len(geometry.active_elements) == 0:
        raise EmptyDomain("no active elements")
    A = nitsche_form(geometry, gamma_D) + ghost_penalty_matrix(geometry, gamma_1)
    return SparseSystem(eliminate(A, geometry.active_vertices))


# ---------------------------------------------------------------------------
# linear forms


def assemble_primal_rhs(geometry: CutGeometry, problem: ProblemDefinition, gamma_D: float = 10.0) -> np.ndarray:
    """(f, w) + (g_D, gamma_D/h w - dw/dn)_fixed + (g_N, w)_Gamma."""
    n = geometry.mesh.num_vertices
    b = np.zeros(n)
    vr = volume_rule(geometry)
    if not problem.f_is_zero:
        b += vr.load(problem.f(vr.points), n)
    dr = dirichlet_rule(geometry)
    if len(dr.weights):
        gd = problem.g_D(dr.points)
        contrib = dr.weights[:, None] * gd[:, None] * ((gamma_D / geometry.h) * dr.lam - dr.normal_grads())
        b += np.bincount(dr.dofs.ravel(), contrib.ravel(), minlength=n)
    if problem.g_N != 0.0:
        gr = interface_rule(geometry)
        b += gr.load(np.full(len(gr.weights), problem.g_N), n)
    return np.where(geometry.active_vertices, b, 0.0)


def assemble_dual_rhs(u_h: FemField) -> np.ndarray:
    """m_h(w) = (u_h, w)_Gamma."""
    geometry = u_h.geometry
    gr = interface_rule(geometry)
    b = gr.load(gr.values(u_h.coefficients), geometry.mesh.num_vertices)
    return np.where(geometry.active_vertices, b, 0.0)


# ---------------------------------------------------------------------------
# solves


def solve_primal(geometry: CutGeometry, problem: ProblemDefinition, params: FemParams = FemParams()) -> FemField:
    system = assemble_bilinear(geometry, params.gamma_D, params.gamma_1)
    b = assemble_primal_rhs(geometry, problem, params.gamma_D)
    x = solve_spd(system, b, tol=params.tol, max_iter=params.max_iter)
    x[~geometry.active_vertices] = 0.0
    return FemField(x, geometry, system.matrix)


def solve_dual(geometry: CutGeometry, u_h: FemField, params: FemParams = FemParams()) -> FemField:
    """Dual problem A_h(p_h, w) = (u_h, w)_Gamma, reusing the primal matrix."""
    if u_h.geometry is not geometry:
        raise ValueError("u_h was solved on a different geometry")
    A = u_h.matrix
    if A is None:
        A = assemble_bilinear(geometry, params.gamma_D, params.gamma_1).matrix
    b = assemble_dual_rhs(u_h)
    x = solve_spd(A, b, tol=params.tol, max_iter=params.max_iter)
    x[~geometry.active_vertices] = 0.0
    return FemField(x, geometry, A)
