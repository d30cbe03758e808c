"""Command-line entry point.

    cutbernoulli <mode> [--config FILE] [--set key=value ...] [common flags]

Modes: solve, optimize, converge-primal, converge-velocity, condition-sweep.
Precedence: defaults < config file < CUTBERNOULLI_OUTPUT < flags and --set.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis
from .config import MODES, RunConfig, build_config, load_config, parse_overrides, scenario_from_config
from .driver import OptimizationState, OptimizerConfig, ProgressLog, optimize, residual_indicator
from .errors import ConfigError, CutFemError
from .fem import FemField, FemParams, solve_dual, solve_primal
from .levelset import LevelSet, classify, sample_to_nodes
from .mesh import BackgroundMesh, build_background_mesh
from .problems import velocity_study_scenario
from .shapegrad import (assemble_h1_product, assemble_shape_gradient, fixed_boundary_vertices,
                        solve_velocity)
from .transport import TransportParams
from .vtkio import Snapshot, atomic_write

OUTPUT_ENV = "CUTBERNOULLI_OUTPUT"

EXIT_OK, EXIT_NOT_CONVERGED, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


def fem_params(cfg: RunConfig) -> FemParams:
    return FemParams(gamma_D=cfg.gamma_D, gamma_1=cfg.gamma_1)


def snapshot_of(mesh: BackgroundMesh, phi: LevelSet, u_h: FemField | None = None,
                p_h: FemField | None = None, beta: np.ndarray | None = None, title: str = "") -> Snapshot:
    nv = mesh.num_vertices
    zero = np.zeros(nv)
    beta = np.zeros((nv, 2)) if beta is None else beta
    fields = {
        "phi": phi.values,
        "u": zero if u_h is None else u_h.coefficients,
        "p": zero if p_h is None else p_h.coefficients,
        "beta_x": beta[:, 0],
        "beta_y": beta[:, 1],
    }
    return Snapshot(mesh.vertices, mesh.triangles, fields, title or "cutbernoulli")


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _summary(out: Path, data: dict) -> None:
    atomic_write(out / "summary.json", json.dumps(data, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# modes


def run_solve(cfg: RunConfig, out: Path) -> int:
    scenario = scenario_from_config(cfg)
    mesh = build_background_mesh(cfg.n)
    which = cfg.geometry
    if which == "auto":
        which = "optimal" if scenario.optimal is not None else "initial"
    if which == "optimal" and scenario.optimal is None:
        raise ConfigError(f"problem {scenario.name} has no known optimal geometry")
    phi = sample_to_nodes(scenario.optimal if which == "optimal" else scenario.initial, mesh)
    fixed = sample_to_nodes(scenario.fixed, mesh) if scenario.fixed is not None else None
    params = fem_params(cfg)
    geometry = classify(mesh, phi, fixed)
    u_h = _stage("primal solve", solve_primal, geometry, scenario.problem, params)
    p_h = _stage("dual solve", solve_dual, geometry, u_h, params)
    g = assemble_shape_gradient(u_h, p_h, scenario.problem)
    clamped = fixed_boundary_vertices(mesh, fixed) if fixed is not None else None
    beta = _stage("velocity solve", solve_velocity, assemble_h1_product(mesh, clamped), g)
    snapshot_of(mesh, phi, u_h, p_h, beta.values, f"{scenario.name} solve n={cfg.n}").write(out / "solution.vtk")
    summary = {"mode": "solve", "problem": scenario.name, "n": cfg.n, "geometry": which,
               "residual": residual_indicator(u_h), "velocity_norm": beta.norm}
    if scenario.problem.exact is not None:
        rows = []
        for p in (2, 4):
            e = analysis.field_errors(u_h, scenario.problem.exact, scenario.problem.exact_grad, p)
            rows.append([p, repr(e["Lp"]), repr(e["W1p"]), repr(e["energy"])])
            summary[f"errors_p{p}"] = {k: e[k] for k in ("Lp", "W1p", "energy")}
        atomic_write(out / "errors.csv", _csv(["p", "Lp", "W1p", "energy"], rows))
    _summary(out, summary)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def run_optimize(cfg: RunConfig, out: Path) -> int:
    scenario = scenario_from_config(cfg)
    mesh = build_background_mesh(cfg.n)
    ocfg = OptimizerConfig(
        fem=fem_params(cfg),
        transport=TransportParams(alpha=cfg.alpha, N=cfg.N, gamma_2=cfg.gamma_2),
        tol=cfg.TOL, max_iter=cfg.max_iter, reinit_every=cfg.reinit_every)
    log_buf = io.StringIO()
    progress = ProgressLog(sys.stdout, log_buf)

    def snapshot(state: OptimizationState):
        if cfg.snapshot_every and state.iteration % cfg.snapshot_every == 0:
            _write_state(mesh, state, out, scenario.name)

    try:
        report = optimize(scenario, cfg.n, ocfg, mesh=mesh, progress=progress, snapshot=snapshot)
    finally:
        atomic_write(out / "log.csv", log_buf.getvalue())
    _write_state(mesh, report.final, out, scenario.name, name="final.vtk")
    summary = {"mode": "optimize", "problem": scenario.name, "n": cfg.n, "reason": report.reason,
               "diagnostic": report.diagnostic, "iterations": report.final.iteration,
               "residual": report.final.residual, "TOL": cfg.TOL}
    _summary(out, summary)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK if report.reason in ("converged", "stationary") else EXIT_NOT_CONVERGED


def _write_state(mesh, state: OptimizationState, out: Path, problem: str, name: str | None = None):
    fname = name or f"snapshot_{state.iteration:04d}.vtk"
    beta = state.velocity.values if state.velocity is not None else None
    snapshot_of(mesh, state.phi, state.u_h, state.p_h, beta,
                f"{problem} iteration {state.iteration}").write(out / fname)


def run_converge_primal(cfg: RunConfig, out: Path) -> int:
    params = fem_params(cfg)
    primal = analysis.primal_convergence(cfg.ns, params)
    atomic_write(out / "primal.csv", primal.to_csv())
    dual = analysis.dual_convergence(cfg.ns, cfg.n_ref, params)
    atomic_write(out / "dual.csv", dual.to_csv())
    print("primal\n" + primal.format() + "\n\ndual (reference n=%d)\n" % cfg.n_ref + dual.format())
    _summary(out, {"mode": "converge-primal", "ns": list(cfg.ns), "n_ref": cfg.n_ref,
                   "primal_rates": {k: primal.last_rate(k) for k in primal.norms},
                   "dual_rates": {k: dual.last_rate(k) for k in dual.norms}})
    return EXIT_OK


def run_converge_velocity(cfg: RunConfig, out: Path) -> int:
    # MP1 studies use the mildly perturbed circle rather than the optimization start
    scenario = velocity_study_scenario() if cfg.problem.upper() == "MP1" else scenario_from_config(cfg)
    table = analysis.velocity_convergence(cfg.ns, cfg.n_ref, scenario, fem_params(cfg))
    atomic_write(out / "velocity.csv", table.to_csv())
    print(table.format())
    span = max(1, min(2, len(table.rows) - 1))
    _summary(out, {"mode": "converge-velocity", "problem": scenario.name, "ns": list(cfg.ns),
                   "n_ref": cfg.n_ref, "rates": {k: table.last_rate(k, span) for k in table.norms}})
    return EXIT_OK


def run_condition_sweep(cfg: RunConfig, out: Path) -> int:
    h = 1.0 / cfg.n
    offsets = [o * h for o in cfg.offsets] if cfg.offsets else None
    rows, summary = [], {"mode": "condition-sweep", "n": cfg.n}
    for g1 in sorted({cfg.gamma_1, 0.0}, reverse=True):
        sweep = analysis.conditioning_sweep(cfg.n, offsets, gamma_1=g1, gamma_D=cfg.gamma_D)
        for r in sweep:
            rows.append([repr(g1), repr(r.offset), repr(r.estimate.kappa), repr(r.estimate.lambda_min),
                         repr(r.estimate.lambda_max), repr(r.min_cut_fraction), int(r.estimate.converged)])
        summary[f"variation_gamma1_{g1:g}"] = analysis.condition_variation(sweep)
    text = _csv(["gamma_1", "offset", "kappa", "lambda_min", "lambda_max", "min_cut_fraction", "converged"], rows)
    atomic_write(out / "conditioning.csv", text)
    print(text, end="")
    _summary(out, summary)
    return EXIT_OK


RUNNERS = {
    "solve": run_solve,
    "optimize": run_optimize,
    "converge-primal": run_converge_primal,
    "converge-velocity": run_converge_velocity,
    "condition-sweep": run_condition_sweep,
}


class StageError(Exception):
    def __init__(self, stage, exc):
        super().__init__(f"{stage} failed: {exc}")
        self.stage = stage


def _stage(name, fn, *args):
    try:
        return fn(*args)
    except CutFemError as exc:
        raise StageError(name, exc) from exc


# ---------------------------------------------------------------------------
# argument handling


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    common.add_argument("--problem")
    common.add_argument("--n", type=int)
    common.add_argument("--output")
    common.add_argument("--tol", type=float, dest="TOL")
    common.add_argument("--max-iter", type=int, dest="max_iter")
    common.add_argument("--dump-config", action="store_true", help="print the resolved config and exit")
    parser = argparse.ArgumentParser(prog="cutbernoulli", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        sub.add_parser(mode, parents=[common])
    return parser


def resolve_config(args, environ=os.environ) -> RunConfig:
    cfg = RunConfig(mode=args.mode)
    if args.config:
        cfg = load_config(args.config, cfg).replace(mode=args.mode)
    if environ.get(OUTPUT_ENV):
        cfg = cfg.replace(output=environ[OUTPUT_ENV])
    # flags and --set are applied together so that validation sees the final values
    values = {k: getattr(args, k) for k in ("problem", "n", "output", "TOL", "max_iter")
              if getattr(args, k) is not None}
    values.update(parse_overrides(args.overrides))
    return build_config(cfg, values)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
    except (ConfigError, OSError) as exc:
        print(f"cutbernoulli: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.dump_config:
        print(cfg.to_text(), end="")
        return EXIT_OK
    out = Path(cfg.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
        atomic_write(out / "config.txt", cfg.to_text())
        return RUNNERS[cfg.mode](cfg, out)
    except ConfigError as exc:
        print(f"cutbernoulli: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"cutbernoulli: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except CutFemError as exc:
        print(f"cutbernoulli: {cfg.mode} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
