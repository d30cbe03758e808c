"""CutFEM level-set shape optimization for the Bernoulli free-boundary problem."""
from .errors import (ConfigError, CutFemError, EmptyDomain, InvalidArgument, NoConvergence, NonDescent,
                     NumericError, OutOfDomain, StationaryPoint)
from .mesh import BackgroundMesh, build_background_mesh
from .levelset import CutGeometry, ElementClass, LevelSet, classify, fast_sweep_reinit, sample_to_nodes
from .fem import FemField, FemParams, solve_dual, solve_primal
from .problems import Scenario, get_scenario, model_problem_1, model_problem_2
from .driver import OptimizerConfig, optimize

__version__ = "0.1.0"

__all__ = [
    "BackgroundMesh", "ConfigError", "CutFemError", "CutGeometry", "ElementClass", "EmptyDomain", "FemField",
    "FemParams", "InvalidArgument", "LevelSet", "NoConvergence", "NonDescent", "NumericError",
    "OptimizerConfig", "OutOfDomain", "Scenario", "StationaryPoint", "build_background_mesh", "classify",
    "fast_sweep_reinit", "get_scenario", "model_problem_1", "model_problem_2", "optimize", "sample_to_nodes",
    "solve_dual", "solve_primal",
]
