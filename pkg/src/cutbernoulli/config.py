"""Run configuration stored as flat ``key = value`` text."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .problems import ProblemDefinition, Scenario, SCENARIOS, get_scenario

MODES = ("solve", "optimize", "converge-primal", "converge-velocity", "condition-sweep")


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.replace(",", " ").split())


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.replace(",", " ").split())


@dataclass(frozen=True)
class RunConfig:
    mode: str = "optimize"
    problem: str = "MP1"
    n: int = 64
    gamma_D: float = 10.0
    gamma_1: float = 1.0
    gamma_2: float = 1.0
    alpha: float = 0.5
    N: int = 3
    TOL: float = 1e-5
    max_iter: int = 200
    reinit_every: int = 1
    snapshot_every: int = 1
    output: str = "output"
    geometry: str = "auto"               # solve: initial | optimal | auto
    ns: tuple[int, ...] = (16, 32, 64, 128)
    n_ref: int = 256
    offsets: tuple[float, ...] = ()      # condition-sweep, in units of h; empty = 0, 1/7, 1/3, 1/2
    # closed-form custom problem (problem = custom); numpy expressions in x and y
    f: str = "0"
    g_D: str = "0"
    g_N: float = 0.0
    initial: str = ""
    fixed: str = ""

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.problem.upper() not in SCENARIOS and self.problem != "custom":
            raise ConfigError(f"problem must be one of {sorted(SCENARIOS)} or 'custom', got {self.problem!r}")
        if self.n < 2:
            raise ConfigError(f"n must be >= 2, got {self.n}")
        if not 0 <= self.alpha < 1:
            raise ConfigError(f"alpha must lie in [0, 1), got {self.alpha}")
        if self.N < 1 or self.gamma_2 <= 0 or self.gamma_D <= 0 or self.gamma_1 < 0:
            raise ConfigError("N >= 1, gamma_2 > 0, gamma_D > 0 and gamma_1 >= 0 are required")
        if self.geometry not in ("auto", "initial", "optimal"):
            raise ConfigError(f"geometry must be auto, initial or optimal, got {self.geometry!r}")
        if self.problem == "custom" and not self.initial:
            raise ConfigError("a custom problem needs an 'initial' level-set expression")

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ", ".join(repr(x) for x in v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def _convert(name: str, raw: str, lineno: int | None = None):
    where = f"line {lineno}: " if lineno is not None else ""
    types = {f.name: f.type for f in fields(RunConfig)}
    if name not in types:
        raise ConfigError(f"{where}unknown key {name!r}")
    t = types[name]
    try:
        if t == "int":
            return int(raw)
        if t == "float":
            return float(raw)
        if t == "tuple[int, ...]":
            return _ints(raw)
        if t == "tuple[float, ...]":
            return _floats(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{where}cannot read {name!r} from {raw!r}") from None


def parse_assignments(text: str, source: str = "config") -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source} line {lineno}: expected key = value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            out[key] = _convert(key, value, lineno)
        except ConfigError as exc:
            raise ConfigError(f"{source} {exc}") from None
    return out


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    values = parse_assignments(Path(path).read_text(), str(path))
    return build_config(base, values)


def build_config(base: RunConfig | None, values: dict) -> RunConfig:
    base = RunConfig() if base is None else base
    try:
        return dataclasses.replace(base, **values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def parse_overrides(pairs) -> dict:
    values = {}
    for item in pairs:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        k, v = (s.strip() for s in item.split("=", 1))
        values[k] = _convert(k, v)
    return values


def override(config: RunConfig, pairs) -> RunConfig:
    """Apply ``key=value`` strings on top of ``config``."""
    return build_config(config, parse_overrides(pairs))


# ---------------------------------------------------------------------------
# closed-form custom problems

_NAMESPACE = {k: getattr(np, k) for k in (
    "sin", "cos", "tan", "exp", "log", "sqrt", "abs", "pi", "hypot", "arctan2", "minimum", "maximum",
    "sinh", "cosh", "tanh", "where")}


def compile_expression(expr: str):
    """A function of points (..., 2) from a numpy expression in x and y."""
    try:
        code = compile(expr, "<expression>", "eval")
    except SyntaxError as exc:
        raise ConfigError(f"bad expression {expr!r}: {exc.msg}") from None
    bad = [n for n in code.co_names if n not in _NAMESPACE and n not in ("x", "y")]
    if bad:
        raise ConfigError(f"expression {expr!r} uses unknown names {bad}")

    def func(points):
        pts = np.asarray(points, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        val = eval(code, {"__builtins__": {}}, dict(_NAMESPACE, x=x, y=y))
        return np.broadcast_to(np.asarray(val, dtype=float), x.shape).copy()

    return func


def _fd_gradient(f, eps: float = 1e-6):
    def grad(points):
        pts = np.asarray(points, dtype=float)
        out = np.empty(pts.shape)
        for k in range(2):
            e = np.zeros(2)
            e[k] = eps
            out[..., k] = (f(pts + e) - f(pts - e)) / (2 * eps)
        return out

    return grad


def scenario_from_config(config: RunConfig) -> Scenario:
    if config.problem != "custom":
        return get_scenario(config.problem)
    f = compile_expression(config.f)
    f_is_zero = config.f.strip() in ("0", "0.0")
    problem = ProblemDefinition(f=f, g_D=compile_expression(config.g_D), g_N=float(config.g_N),
                                grad_f=_fd_gradient(f), f_is_zero=f_is_zero)
    fixed = compile_expression(config.fixed) if config.fixed else None
    return Scenario("custom", problem, compile_expression(config.initial), fixed)
