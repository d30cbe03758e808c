"""Shape-optimization loop for the Bernoulli free-boundary problem."""
from __future__ import annotations

import csv
import logging
import sys
from dataclasses import dataclass, field, replace
from typing import Callable, TextIO

import numpy as np

from .errors import ConfigError, CutFemError, EmptyDomain, NonDescent, StationaryPoint
from .fem import FemField, FemParams, assemble_primal_rhs, interface_rule, nitsche_form, solve_dual, solve_primal
from .levelset import CutGeometry, LevelSet, classify, fast_sweep_reinit, sample_to_nodes
from .mesh import BackgroundMesh, build_background_mesh
from .problems import ProblemDefinition, Scenario
from .shapegrad import (H1Product, ShapeGradient, VelocityField, assemble_h1_product,
                        assemble_shape_gradient, fixed_boundary_vertices, normalize_velocity,
                        solve_velocity)
from .transport import DegenerateObjective, TransportParams, advect, estimate_horizon, horizon_cap

log = logging.getLogger(__name__)

LOG_COLUMNS = ("iteration", "residual", "lagrangian", "horizon", "velocity_norm", "slope")


def residual_indicator(u_h: FemField, geometry: CutGeometry | None = None) -> float:
    """R_Gamma = ||u_h||_{L^2(Gamma)}."""
    geometry = u_h.geometry if geometry is None else geometry
    if len(geometry.interface) == 0:
        raise EmptyDomain("the free boundary is empty")
    gr = interface_rule(geometry)
    return float(np.sqrt(gr.weights @ gr.values(u_h.coefficients) ** 2))


def objective_value(u_h: FemField) -> float:
    """J = 1/2 int_Gamma u_h^2."""
    gr = interface_rule(u_h.geometry)
    return 0.5 * float(gr.weights @ gr.values(u_h.coefficients) ** 2)


def lagrangian_value(u_h: FemField, p_h: FemField, problem: ProblemDefinition,
                     params: FemParams = FemParams()) -> float:
    """J(u_h) - a_h(u_h, p_h) + F_h(p_h), with a_h the unstabilized Nitsche form."""
    geometry = u_h.geometry
    u, p = u_h.coefficients, p_h.coefficients
    a = float(p @ (nitsche_form(geometry, params.gamma_D) @ u))
    F = float(assemble_primal_rhs(geometry, problem, params.gamma_D) @ p)
    return objective_value(u_h) - a + F


@dataclass(frozen=True)
class OptimizerConfig:
    fem: FemParams = FemParams()
    transport: TransportParams = TransportParams()
    tol: float = 1e-5
    max_iter: int = 200
    reinit_every: int = 1        # 0 disables reinitialization
    stationary_eps: float = 1e-14
    degenerate: str = "objective"  # horizon when L <= 0: "objective" uses J, "cap" uses T_cap

    def __post_init__(self):
        if self.degenerate not in ("objective", "cap"):
            raise ConfigError(f"degenerate must be 'objective' or 'cap', got {self.degenerate!r}")
        if self.max_iter < 0 or not self.tol >= 0:
            raise ConfigError("max_iter and tol must be non-negative")


@dataclass(eq=False)
class OptimizationState:
    iteration: int
    phi: LevelSet
    geometry: CutGeometry
    u_h: FemField
    p_h: FemField | None = None
    lagrangian: float = float("nan")
    residual: float = float("nan")
    horizon: float = float("nan")
    velocity_norm: float = float("nan")
    velocity: VelocityField | None = None
    slope: float = float("nan")          # g . beta, negative along descent

    def row(self) -> tuple:
        return (self.iteration, self.residual, self.lagrangian, self.horizon, self.velocity_norm, self.slope)


@dataclass(eq=False)
class OptimizationReport:
    states: list[OptimizationState]          # light copies (fields dropped except the last)
    reason: str                               # converged | stationary | non-descent | max-iterations
    final: OptimizationState
    diagnostic: str = ""
    history: list[tuple] = field(default_factory=list)

    @property
    def residuals(self) -> np.ndarray:
        return np.array([r[1] for r in self.history])

    @property
    def converged(self) -> bool:
        return self.reason == "converged"


class ProgressLog:
    """One line per iteration to a text stream and, optionally, a CSV file."""

    def __init__(self, stream: TextIO | None = sys.stdout, csv_file: TextIO | None = None):
        self.stream = stream
        self.writer = csv.writer(csv_file, lineterminator="\n") if csv_file is not None else None
        if self.writer:
            self.writer.writerow(LOG_COLUMNS)

    def __call__(self, row: tuple) -> None:
        if self.stream is not None:
            it, r, L, T, b, _ = row
            self.stream.write(f"{it:4d}  R={r:.6e}  L={L:.6e}  T={T:.4e}  |beta'|={b:.4e}\n")
            self.stream.flush()
        if self.writer:
            self.writer.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


def optimize(scenario: Scenario, n: int, config: OptimizerConfig = OptimizerConfig(), *,
             mesh: BackgroundMesh | None = None, phi0: LevelSet | None = None, start: int = 0,
             progress: Callable[[tuple], None] | None = None,
             snapshot: Callable[[OptimizationState], None] | None = None) -> OptimizationReport:
    """Run the descent loop until R_Gamma <= tol, a stationary point, or ``max_iter``.

    Order per iteration: primal solve, residual check, dual solve, shape
    gradient, velocity, horizon, transport, reinitialization. ``phi0`` and
    ``start`` allow resuming from a snapshot; the run is deterministic.
    """
    mesh = build_background_mesh(n) if mesh is None else mesh
    problem = scenario.problem
    fixed = sample_to_nodes(scenario.fixed, mesh) if scenario.fixed is not None else None
    phi = sample_to_nodes(scenario.initial, mesh) if phi0 is None else phi0
    clamped = fixed_boundary_vertices(mesh, fixed) if fixed is not None else None
    bform: H1Product = assemble_h1_product(mesh, clamped)
    tp = config.transport
    history, states = [], []
    reason, diagnostic = "max-iterations", ""
    state = None

    for it in range(start, start + config.max_iter + 1):
        try:
            geometry = classify(mesh, phi, fixed)
            u_h = solve_primal(geometry, problem, config.fem)
            residual = residual_indicator(u_h)
        except CutFemError as exc:
            raise type(exc)(f"iteration {it}: {exc}") from exc
        state = OptimizationState(it, phi, geometry, u_h, residual=residual)
        if residual <= config.tol:
            reason = "converged"
            _record(state, history, states, progress, snapshot)
            break
        if it == start + config.max_iter:
            _record(state, history, states, progress, snapshot)
            break
        p_h = solve_dual(geometry, u_h, config.fem)
        state.p_h = p_h
        state.lagrangian = lagrangian_value(u_h, p_h, problem, config.fem)
        g: ShapeGradient = assemble_shape_gradient(u_h, p_h, problem)
        raw = solve_velocity(bform, g)
        state.velocity_norm = raw.norm
        try:
            beta = normalize_velocity(raw, bform, config.stationary_eps)
        except StationaryPoint as exc:
            reason, diagnostic = "stationary", str(exc)
            _record(state, history, states, progress, snapshot)
            break
        state.velocity = beta
        dL = g.dot(beta.values)
        state.slope = dL
        cap = horizon_cap(beta, mesh.h, tp.cfl)
        try:
            T = estimate_horizon(state.lagrangian, dL, tp.alpha, cap)
        except DegenerateObjective:
            if config.degenerate == "cap":
                T = cap
            else:
                T = estimate_horizon(0.5 * residual ** 2, dL, tp.alpha, cap)
        except NonDescent as exc:
            reason, diagnostic = "non-descent", f"iteration {it}: {exc}"
            _record(state, history, states, progress, snapshot)
            break
        state.horizon = T
        _record(state, history, states, progress, snapshot)
        phi = advect(phi, beta, T, mesh, tp)
        if config.reinit_every and (it - start + 1) % config.reinit_every == 0:
            phi = fast_sweep_reinit(phi, mesh)

    return OptimizationReport(states, reason, state, diagnostic, history)


def _record(state, history, states, progress, snapshot):
    history.append(state.row())
    log.debug("iteration %d: R=%.6e L=%.6e T=%.4e", state.iteration, state.residual, state.lagrangian, state.horizon)
    states.append(replace(state, u_h=None, p_h=None, geometry=None, velocity=None))
    if progress is not None:
        progress(state.row())
    if snapshot is not None:
        snapshot(state)
