"""Level-set transport along a frozen velocity field.

Crank-Nicolson in time, P1 in space, with a gradient-jump penalty
gamma_2 h^2 [dv/dn][dw/dn] on every interior face of the background mesh.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgument, NonDescent
from .fem import face_jump_matrix
from .levelset import LevelSet
from .linsolve import assemble, solve_general
from .mesh import BackgroundMesh
from .shapegrad import VelocityField, stiffness_and_mass


class DegenerateObjective(NonDescent):
    """The Lagrangian is not positive, so the decrease model gives no step."""


@dataclass(frozen=True)
class TransportParams:
    alpha: float = 0.5
    N: int = 3
    gamma_2: float = 1.0
    cfl: float = 2.0          # T_cap = cfl * h / max|beta|
    tol: float = 1e-10

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise InvalidArgument(f"alpha must lie in [0, 1), got {self.alpha}")
        if self.N < 1:
            raise InvalidArgument(f"N must be >= 1, got {self.N}")
        if not self.gamma_2 > 0:
            raise InvalidArgument(f"gamma_2 must be positive, got {self.gamma_2}")
        if not self.cfl > 0:
            raise InvalidArgument(f"cfl must be positive, got {self.cfl}")


def horizon_cap(beta: VelocityField, h: float, cfl: float = 2.0) -> float:
    vmax = float(np.abs(beta.values).max()) if beta.values.size else 0.0
    return np.inf if vmax == 0.0 else cfl * h / vmax


def estimate_horizon(L_val: float, dL: float, alpha: float = 0.5, T_cap: float = np.inf) -> float:
    """T = (alpha - 1) L / dL from the linear decrease model, capped at ``T_cap``."""
    if not dL < 0:
        raise NonDescent(f"directional derivative {dL:.3e} is not negative")
    if not L_val > 0:
        raise DegenerateObjective(f"Lagrangian value {L_val:.3e} is not positive")
    return float(min((alpha - 1.0) * L_val / dL, T_cap))


def convection_matrix(mesh: BackgroundMesh, beta: np.ndarray) -> sp.csr_matrix:
    """C_ij = int (beta . grad phi_j) phi_i with P1 beta."""
    tri = mesh.triangles
    bt = beta[tri]                                            # (t, 3, 2)
    # int_T beta phi_i = |T|/12 (beta_i + sum_k beta_k)
    mom = (mesh.areas / 12.0)[:, None, None] * (bt + bt.sum(axis=1, keepdims=True))
    local = np.einsum("tid,tjd->tij", mom, mesh.basis_gradients)
    return assemble(np.repeat(tri, 3, axis=1), np.tile(tri, (1, 3)), local, mesh.num_vertices)


def stabilization_matrix(mesh: BackgroundMesh, gamma_2: float) -> sp.csr_matrix:
    return face_jump_matrix(mesh, mesh.interior_faces, gamma_2 * mesh.h ** 2)


def step_matrices(mesh: BackgroundMesh, beta: np.ndarray, k: float, gamma_2: float):
    """Left and right operators M +- k/2 (C + R) of one Crank-Nicolson step."""
    _, M = stiffness_and_mass(mesh)
    S = convection_matrix(mesh, beta) + stabilization_matrix(mesh, gamma_2)
    return (M + 0.5 * k * S).tocsr(), (M - 0.5 * k * S).tocsr()


def advect(phi: LevelSet, beta: VelocityField, T: float, mesh: BackgroundMesh,
           params: TransportParams = TransportParams()) -> LevelSet:
    """N Crank-Nicolson steps of size T/N with the velocity frozen."""
    if not T > 0:
        raise InvalidArgument(f"horizon must be positive, got {T}")
    if not np.any(beta.values):
        return LevelSet(phi.values.copy(), phi.h)
    k = T / params.N
    lhs, rhs = step_matrices(mesh, beta.values, k, params.gamma_2)
    x = phi.values.copy()
    for _ in range(params.N):
        x = solve_general(lhs, rhs @ x, tol=params.tol, x0=x)
    return LevelSet(x, phi.h)
