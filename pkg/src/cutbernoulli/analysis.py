"""Error norms, convergence studies and the conditioning sweep."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidArgument
from .fem import (FemField, FemParams, assemble_bilinear, dirichlet_rule, interface_rule, solve_dual,
                  solve_primal, volume_rule)
from .levelset import CutGeometry, Orientation, classify, sample_to_nodes, signed_distance_circle
from .linsolve import ConditionEstimate, condition_estimate
from .mesh import BackgroundMesh, build_background_mesh, prolongate
from .problems import CENTER, RADIUS, Scenario, model_problem_1, velocity_study_scenario
from .shapegrad import (assemble_h1_product, assemble_shape_gradient, fixed_boundary_vertices, solve_velocity,
                        stiffness_and_mass)

SUPPORTED_P = (2, 4)


# ---------------------------------------------------------------------------
# convergence tables


@dataclass
class ConvergenceTable:
    """Rows of errors per mesh; rates are log2(e_{i-1} / e_i) between successive rows."""

    norms: tuple[str, ...]
    rows: list[dict] = field(default_factory=list)

    def add(self, n: int, h: float, **errors: float) -> None:
        if self.rows and not h < self.rows[-1]["h"]:
            raise InvalidArgument("mesh sizes must strictly decrease")
        row = {"n": int(n), "h": float(h)}
        row.update({k: float(errors[k]) for k in self.norms})
        self.rows.append(row)

    def rates(self, norm: str) -> list[float]:
        out = [math.nan]
        for a, b in zip(self.rows, self.rows[1:]):
            out.append(math.log(a[norm] / b[norm]) / math.log(a["h"] / b["h"]))
        return out

    def last_rate(self, norm: str, span: int = 1) -> float:
        """Average rate over the last ``span`` refinements."""
        a, b = self.rows[-1 - span], self.rows[-1]
        return math.log(a[norm] / b[norm]) / math.log(a["h"] / b["h"])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = ["n", "h"]
        for k in self.norms:
            header += [k, f"rate_{k}"]
        w.writerow(header)
        rates = {k: self.rates(k) for k in self.norms}
        for i, row in enumerate(self.rows):
            line = [row["n"], repr(row["h"])]
            for k in self.norms:
                line += [repr(row[k]), "" if i == 0 else repr(rates[k][i])]
            w.writerow(line)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ConvergenceTable":
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        norms = tuple(header[2::2])
        table = cls(norms)
        for line in reader:
            table.add(int(line[0]), float(line[1]), **{k: float(line[2 + 2 * i]) for i, k in enumerate(norms)})
        return table

    def format(self) -> str:
        head = f"{'n':>5} {'h':>10}" + "".join(f" {k:>12} {'rate':>6}" for k in self.norms)
        lines = [head]
        rates = {k: self.rates(k) for k in self.norms}
        for i, row in enumerate(self.rows):
            s = f"{row['n']:>5} {row['h']:>10.4e}"
            for k in self.norms:
                r = rates[k][i]
                s += f" {row[k]:>12.4e} {'' if math.isnan(r) else f'{r:6.2f}':>6}"
            lines.append(s)
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# field errors


def _check_p(p):
    if p not in SUPPORTED_P:
        raise InvalidArgument(f"norm exponent p={p} not supported; use one of {SUPPORTED_P}")


def jump_seminorm(v_h: FemField, p: int = 2, faces: np.ndarray | None = None) -> float:
    """(sum_F ||[d_n v_h]||^p_{L^p(F)})^(1/p) over the ghost faces (P1 jumps are constant per face)."""
    geometry = v_h.geometry
    mesh = geometry.mesh
    faces = geometry.ghost_faces if faces is None else faces
    if len(faces) == 0:
        return 0.0
    g = v_h.element_gradients()
    left, right = mesh.face_elements[faces, 0], mesh.face_elements[faces, 1]
    jump = np.einsum("fd,fd->f", g[left] - g[right], mesh.face_normals[faces])
    return float(np.sum(mesh.face_lengths[faces] * np.abs(jump) ** p) ** (1.0 / p))


def field_errors(u_h: FemField, exact: Callable, exact_grad: Callable, p: int = 2) -> dict:
    """L^p and W^1_p errors over Omega_h and the mesh-dependent energy norm

        |||e|||^p = ||grad e||^p_Omega + h ||d_n e||^p_fix + h^(1-p) ||e||^p_fix + h sum_F ||[d_n e]||^p_F

    with e = u_h - exact; the exact field has no gradient jumps.
    """
    _check_p(p)
    geometry = u_h.geometry
    h = geometry.h
    u = u_h.coefficients
    ge = u_h.element_gradients()

    vr = volume_rule(geometry)
    e = vr.values(u) - exact(vr.points)
    de = ge[vr.elements] - exact_grad(vr.points)
    lp = float(vr.weights @ np.abs(e) ** p)
    grad_p = float(vr.weights @ np.linalg.norm(de, axis=1) ** p)

    dr = dirichlet_rule(geometry)
    if len(dr.weights):
        eb = dr.values(u) - exact(dr.points)
        dnb = np.einsum("qd,qd->q", ge[dr.elements] - exact_grad(dr.points), dr.normals)
        trace = float(dr.weights @ np.abs(eb) ** p)
        flux = float(dr.weights @ np.abs(dnb) ** p)
    else:
        trace = flux = 0.0
    jumps = jump_seminorm(u_h, p) ** p
    energy = grad_p + h * flux + h ** (1 - p) * trace + h * jumps
    return {
        "Lp": lp ** (1.0 / p),
        "W1p": grad_p ** (1.0 / p),
        "energy": energy ** (1.0 / p),
        "terms": {"grad": grad_p, "flux": h * flux, "trace": h ** (1 - p) * trace, "jump": h * jumps},
    }


def difference_errors(v_coarse: FemField, v_fine: FemField, p: int = 2) -> dict:
    """Errors of a coarse field against a fine reference on the nested fine mesh.

    Volume and fixed-boundary terms are integrated on the fine geometry using
    the exact prolongation of the coarse field; the jump term uses the coarse
    field on its own ghost faces (the reference is treated as smooth).
    """
    _check_p(p)
    gc, gf = v_coarse.geometry, v_fine.geometry
    pc = prolongate(gc.mesh, gf.mesh, v_coarse.coefficients)
    diff = FemField(pc - v_fine.coefficients, gf)
    vr = volume_rule(gf)
    e = vr.values(diff.coefficients)
    de = diff.element_gradients()[vr.elements]
    lp = float(vr.weights @ np.abs(e) ** p)
    grad_p = float(vr.weights @ np.linalg.norm(de, axis=1) ** p)
    dr = dirichlet_rule(gf)
    h = gc.h
    if len(dr.weights):
        trace = float(dr.weights @ np.abs(dr.values(diff.coefficients)) ** p)
        dn = np.einsum("qd,qd->q", diff.element_gradients()[dr.elements], dr.normals)
        flux = float(dr.weights @ np.abs(dn) ** p)
    else:
        trace = flux = 0.0
    jumps = jump_seminorm(v_coarse, p) ** p
    energy = grad_p + h * flux + h ** (1 - p) * trace + h * jumps
    return {"Lp": lp ** (1.0 / p), "W1p": grad_p ** (1.0 / p), "energy": energy ** (1.0 / p)}


# ---------------------------------------------------------------------------
# velocity errors


def velocity_errors(beta_h: np.ndarray, coarse: BackgroundMesh, beta_ref: np.ndarray,
                    fine: BackgroundMesh) -> dict:
    """Full H^1 and L^2 errors over the box after exact prolongation to the fine mesh."""
    if fine.n % coarse.n != 0:
        raise InvalidArgument(f"meshes n={coarse.n} and n={fine.n} are not nested")
    if beta_h.shape != (coarse.num_vertices, 2) or beta_ref.shape != (fine.num_vertices, 2):
        raise InvalidArgument("velocity arrays do not match their meshes")
    e = prolongate(coarse, fine, beta_h) - beta_ref
    K, M = stiffness_and_mass(fine)
    l2 = sum(float(e[:, k] @ (M @ e[:, k])) for k in range(2))
    semi = sum(float(e[:, k] @ (K @ e[:, k])) for k in range(2))
    return {"H1": math.sqrt(max(l2 + semi, 0.0)), "L2": math.sqrt(max(l2, 0.0))}


def unnormalized_velocity(scenario: Scenario, mesh: BackgroundMesh, params: FemParams = FemParams()) -> np.ndarray:
    """beta'_h for the scenario's initial geometry."""
    phi = sample_to_nodes(scenario.initial, mesh)
    fixed = sample_to_nodes(scenario.fixed, mesh) if scenario.fixed is not None else None
    geometry = classify(mesh, phi, fixed)
    u_h = solve_primal(geometry, scenario.problem, params)
    p_h = solve_dual(geometry, u_h, params)
    g = assemble_shape_gradient(u_h, p_h, scenario.problem)
    clamped = fixed_boundary_vertices(mesh, fixed) if fixed is not None else None
    return solve_velocity(assemble_h1_product(mesh, clamped), g).values


# ---------------------------------------------------------------------------
# studies


def exact_circle_geometry(mesh: BackgroundMesh, center=CENTER, radius: float = RADIUS) -> CutGeometry:
    phi = sample_to_nodes(signed_distance_circle(center, radius, Orientation.EXTERIOR_NEGATIVE), mesh)
    return classify(mesh, phi)


def primal_convergence(ns: Sequence[int] = (16, 32, 64, 128), params: FemParams = FemParams(),
                       p: int = 2) -> ConvergenceTable:
    """MP1 on the exact circular free boundary against the closed-form solution."""
    problem = model_problem_1().problem
    table = ConvergenceTable(("L2", "H1", "energy"))
    for n in ns:
        mesh = build_background_mesh(n)
        u_h = solve_primal(exact_circle_geometry(mesh), problem, params)
        err = field_errors(u_h, problem.exact, problem.exact_grad, p)
        table.add(n, mesh.h, L2=err["Lp"], H1=err["W1p"], energy=err["energy"])
    return table


def dual_convergence(ns: Sequence[int] = (16, 32, 64, 128), n_ref: int = 256,
                     params: FemParams = FemParams()) -> ConvergenceTable:
    """MP1 dual fields on the exact circle against a fine-mesh dual reference."""
    problem = model_problem_1().problem
    fine = build_background_mesh(n_ref)
    gf = exact_circle_geometry(fine)
    p_ref = solve_dual(gf, solve_primal(gf, problem, params), params)
    table = ConvergenceTable(("L2", "H1", "energy"))
    for n in ns:
        if n_ref % n:
            raise InvalidArgument(f"n={n} does not divide the reference n={n_ref}")
        mesh = build_background_mesh(n)
        g = exact_circle_geometry(mesh)
        p_h = solve_dual(g, solve_primal(g, problem, params), params)
        err = difference_errors(p_h, p_ref)
        table.add(n, mesh.h, L2=err["Lp"], H1=err["W1p"], energy=err["energy"])
    return table


def velocity_convergence(ns: Sequence[int] = (16, 32, 64, 128), n_ref: int = 256,
                         scenario: Scenario | None = None, params: FemParams = FemParams()) -> ConvergenceTable:
    """Unnormalized velocities for the initial geometry of ``scenario``.

    The default is MP1 data on a three-petal perturbation of the optimal circle.
    """
    scenario = velocity_study_scenario() if scenario is None else scenario
    fine = build_background_mesh(n_ref)
    ref = unnormalized_velocity(scenario, fine, params)
    table = ConvergenceTable(("H1", "L2"))
    for n in ns:
        mesh = build_background_mesh(n)
        err = velocity_errors(unnormalized_velocity(scenario, mesh, params), mesh, ref, fine)
        table.add(n, mesh.h, **err)
    return table


@dataclass(frozen=True)
class ConditionRow:
    offset: float
    estimate: ConditionEstimate
    min_cut_fraction: float   # smallest |T cap Omega| / |T| over cut elements


def conditioning_sweep(n: int = 32, offsets: Sequence[float] | None = None, gamma_1: float = 1.0,
                       gamma_D: float = 10.0, radius: float = RADIUS) -> list[ConditionRow]:
    """Condition numbers of the MP1 system with the circle center shifted by ``offset`` in x.

    Offsets default to {0, h/7, h/3, h/2}. Only active unknowns enter the estimate.
    """
    mesh = build_background_mesh(n)
    if offsets is None:
        offsets = [0.0, mesh.h / 7, mesh.h / 3, mesh.h / 2]
    rows = []
    for s in offsets:
        if abs(s) > mesh.h:
            raise InvalidArgument(f"shift {s} exceeds one cell")
        g = exact_circle_geometry(mesh, CENTER + np.array([s, 0.0]), radius)
        system = assemble_bilinear(g, gamma_D, gamma_1)
        est = condition_estimate(system, g.active_vertices)
        cut = g.cut_elements
        frac = float((g.element_measure[cut] / mesh.areas[cut]).min()) if len(cut) else 1.0
        rows.append(ConditionRow(float(s), est, frac))
    return rows


def condition_variation(rows: Sequence[ConditionRow]) -> float:
    k = [r.estimate.kappa for r in rows]
    return max(k) / min(k)


# ---------------------------------------------------------------------------
# finite-difference oracle for the shape derivative


def _bump(x):
    return (np.sin(np.pi * x[..., 0]) * np.sin(np.pi * x[..., 1])) ** 2


#: smooth fields vanishing on the box boundary, used to probe the shape gradient
TEST_FIELDS: dict[str, Callable] = {
    "shift_x": lambda x: np.stack([_bump(x), np.zeros_like(_bump(x))], -1),
    "radial": lambda x: _bump(x)[..., None] * (x - 0.5),
    "shear": lambda x: _bump(x)[..., None] * np.stack(
        [np.sin(2 * np.pi * x[..., 1]), np.cos(np.pi * x[..., 0]) + x[..., 1]], -1),
}


def flow_lagrangian(t: float, theta_h: np.ndarray, u_h: FemField, p_h: FemField, problem) -> float:
    """Lagrangian of the domain moved by x + t*theta_h with u_h, p_h transported along.

    Every integral is pulled back to the reference geometry, so the value is smooth in t.
    Only the terms that see the moving boundary enter; theta_h must vanish on the fixed boundary.
    """
    geo = u_h.geometry
    mesh = geo.mesh
    dth = np.einsum("tkc,tkd->tcd", theta_h[mesh.triangles], mesh.basis_gradients)
    DT = np.eye(2) + t * dth
    det = np.linalg.det(DT)
    inv = np.linalg.inv(DT)
    act = geo.active_elements
    gu, gp = u_h.element_gradients(), p_h.element_gradients()
    a = np.einsum("tdc,td,tec,te,t->t", inv, gu, inv, gp, det)
    total = -float(np.sum(geo.element_measure[act] * a[act]))
    if not problem.f_is_zero:
        vr = volume_rule(geo)
        moved = vr.points + t * np.einsum("qk,qkc->qc", vr.lam, theta_h[vr.dofs])
        total += float(np.sum(vr.weights * problem.f(moved) * vr.values(p_h.coefficients) * det[vr.elements]))
    gr = interface_rule(geo)
    el = gr.elements
    stretch = det[el] * np.linalg.norm(np.einsum("qdc,qd->qc", inv[el], gr.normals), axis=1)
    uq, pq = gr.values(u_h.coefficients), gr.values(p_h.coefficients)
    total += float(np.sum(gr.weights * stretch * (0.5 * uq ** 2 + problem.g_N * pq)))
    return total


def fd_shape_derivative(theta_h: np.ndarray, u_h: FemField, p_h: FemField, problem, step: float = 1e-3) -> float:
    """Central difference of :func:`flow_lagrangian` at t = 0."""
    plus = flow_lagrangian(step, theta_h, u_h, p_h, problem)
    minus = flow_lagrangian(-step, theta_h, u_h, p_h, problem)
    return (plus - minus) / (2 * step)
