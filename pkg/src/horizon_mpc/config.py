"""Run configuration: YAML parsing, validation, presets and spec assembly."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import benchmark
from .cbf import AffineBarrier, AffineConstraint, BarrierSet, benchmark_barriers
from .lti import DiscreteLTI, StageCost, double_integrator
from .ocp import OcpSpec
from .qp import QpSettings
from .sim import DEFAULT_EPS, DEFAULT_MAX_STEPS


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


Matrix = tuple[tuple[float, ...], ...]
Vector = tuple[float, ...]


def _vec(value, name) -> Vector:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(name, f"expected a list of numbers ({exc})") from None
    if arr.ndim != 1:
        raise ConfigError(name, "expected a flat list of numbers")
    return tuple(float(v) for v in arr)


def _mat(value, name) -> Matrix:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(name, f"expected a matrix given as row lists ({exc})") from None
    if arr.ndim != 2:
        raise ConfigError(name, "expected a matrix given as row lists")
    return tuple(tuple(float(v) for v in row) for row in arr)


@dataclass(frozen=True)
class BarrierConfig:
    a: Vector
    c: float
    gamma: float
    name: str = ""


@dataclass(frozen=True)
class AffineConfig:
    a: Vector
    b: float


@dataclass(frozen=True)
class RunConfig:
    system_preset: str | None = "double_integrator"
    dt: float | None = benchmark.DEFAULT_DT
    A: Matrix | None = None
    B: Matrix | None = None
    Q: Matrix = ()
    R: Matrix = ()
    u_min: Vector = ()
    u_max: Vector = ()
    barriers: tuple[BarrierConfig, ...] = ()
    affine_constraints: tuple[AffineConfig, ...] = ()
    affine_full_horizon: bool = False
    x0: Vector = ()
    N: int = 20
    Ntilde: int = 10
    eps: float = DEFAULT_EPS
    max_steps: int = DEFAULT_MAX_STEPS
    abs_tol: float = 1e-8
    rel_tol: float = 1e-8
    feas_tol: float = 1e-8
    max_iter: int = 50_000
    out_dir: str = "out"
    seed: int = 0

    @property
    def constraint_horizon(self) -> int:
        return self.N - self.Ntilde

    def with_overrides(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        horizon = kw.pop("constraint_horizon", None)
        if horizon is not None:
            if "Ntilde" in kw:
                raise ConfigError("Ntilde", "give either Ntilde or constraint_horizon, not both")
            N = kw.get("N", self.N)
            kw["Ntilde"] = N - horizon
        cfg = dataclasses.replace(self, **kw)
        cfg.validate()
        return cfg

    def system(self) -> DiscreteLTI:
        if self.system_preset == "double_integrator":
            return double_integrator(self.dt)
        return DiscreteLTI(np.array(self.A), np.array(self.B))

    def qp_settings(self) -> QpSettings:
        return QpSettings(
            abs_tol=self.abs_tol, rel_tol=self.rel_tol,
            feas_tol=self.feas_tol, max_iter=self.max_iter,
        )

    def barrier_set(self) -> BarrierSet | None:
        if not self.barriers and not self.affine_constraints:
            return None
        return BarrierSet(
            [AffineBarrier(b.a, b.c, b.gamma, b.name) for b in self.barriers],
            [AffineConstraint(c.a, c.b) for c in self.affine_constraints],
        )

    def build_spec(self, N: int | None = None, Ntilde: int | None = None) -> OcpSpec:
        return OcpSpec(
            sys=self.system(),
            cost=StageCost(np.array(self.Q), np.array(self.R)),
            N=self.N if N is None else N,
            Ntilde=self.Ntilde if Ntilde is None else Ntilde,
            u_min=np.array(self.u_min),
            u_max=np.array(self.u_max),
            barriers=self.barrier_set(),
            affine_full_horizon=self.affine_full_horizon,
            qp_settings=self.qp_settings(),
        )

    def validate(self) -> None:
        if self.system_preset is not None:
            if self.system_preset != "double_integrator":
                raise ConfigError("system.preset", f"unknown preset {self.system_preset!r}")
            if self.dt is None or not self.dt > 0:
                raise ConfigError("system.dt", "must be a positive number")
            n, m = 4, 2
        else:
            if self.A is None or self.B is None:
                raise ConfigError("system", "give either a preset or both A and B")
            n = len(self.A)
            if any(len(r) != n for r in self.A):
                raise ConfigError("system.A", "must be square")
            if len(self.B) != n or not self.B or not self.B[0]:
                raise ConfigError("system.B", f"must have {n} rows")
            m = len(self.B[0])
        if np.shape(self.Q) != (n, n):
            raise ConfigError("cost.Q", f"must be {n}x{n}")
        if np.shape(self.R) != (m, m):
            raise ConfigError("cost.R", f"must be {m}x{m}")
        try:
            StageCost(np.array(self.Q), np.array(self.R))
        except ValueError as exc:
            raise ConfigError("cost", str(exc)) from None
        for name, v in (("input_box.lower", self.u_min), ("input_box.upper", self.u_max)):
            if len(v) != m:
                raise ConfigError(name, f"must have {m} entries")
        if any(lo > 0 or hi < 0 for lo, hi in zip(self.u_min, self.u_max)):
            raise ConfigError("input_box", "must contain u = 0 with lower <= upper")
        if len(self.x0) != n:
            raise ConfigError("x0", f"must have {n} entries")
        for i, b in enumerate(self.barriers):
            if len(b.a) != n:
                raise ConfigError(f"barriers[{i}].a", f"must have {n} entries")
            if not 0 < b.gamma <= 1:
                raise ConfigError(f"barriers[{i}].gamma", "must lie in (0, 1]")
        for i, c in enumerate(self.affine_constraints):
            if len(c.a) != n:
                raise ConfigError(f"affine_constraints[{i}].a", f"must have {n} entries")
        if self.N < 2:
            raise ConfigError("N", "must be >= 2")
        if not 1 <= self.Ntilde <= self.N - 1:
            raise ConfigError("Ntilde", f"need 1 <= Ntilde <= N-1 (got Ntilde={self.Ntilde}, N={self.N})")
        if not self.eps > 0:
            raise ConfigError("stop.eps", "must be positive")
        if self.max_steps < 1:
            raise ConfigError("stop.max_steps", "must be >= 1")
        for name in ("abs_tol", "rel_tol", "feas_tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"solver.{name}", "must be positive")
        if self.max_iter < 1:
            raise ConfigError("solver.max_iter", "must be >= 1")

    def to_dict(self) -> dict[str, Any]:
        if self.system_preset is not None:
            system = {"preset": self.system_preset, "dt": self.dt}
        else:
            system = {"A": [list(r) for r in self.A], "B": [list(r) for r in self.B]}
        return {
            "system": system,
            "cost": {"Q": [list(r) for r in self.Q], "R": [list(r) for r in self.R]},
            "input_box": {"lower": list(self.u_min), "upper": list(self.u_max)},
            "barriers": [
                {"a": list(b.a), "c": b.c, "gamma": b.gamma, "name": b.name}
                for b in self.barriers
            ],
            "affine_constraints": [{"a": list(c.a), "b": c.b} for c in self.affine_constraints],
            "affine_full_horizon": self.affine_full_horizon,
            "x0": list(self.x0),
            "N": self.N,
            "Ntilde": self.Ntilde,
            "stop": {"eps": self.eps, "max_steps": self.max_steps},
            "solver": {
                "abs_tol": self.abs_tol, "rel_tol": self.rel_tol,
                "feas_tol": self.feas_tol, "max_iter": self.max_iter,
            },
            "output": {"dir": self.out_dir},
            "seed": self.seed,
        }


_TOP_KEYS = {
    "system", "cost", "input_box", "barriers", "affine_constraints",
    "affine_full_horizon", "x0", "N", "Ntilde", "constraint_horizon",
    "stop", "solver", "output", "seed",
}


def _section(d: dict, key: str, allowed: set[str]) -> dict:
    sec = d.get(key) or {}
    if not isinstance(sec, dict):
        raise ConfigError(key, "must be a mapping")
    unknown = set(sec) - allowed
    if unknown:
        raise ConfigError(f"{key}.{sorted(unknown)[0]}", "unknown key")
    return sec


def _num(value, name, kind=float):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(name, f"expected a number, got {value!r}")
    if kind is int:
        if float(value) != int(value):
            raise ConfigError(name, f"expected an integer, got {value!r}")
        return int(value)
    return float(value)


def config_from_dict(d: dict) -> RunConfig:
    if not isinstance(d, dict):
        raise ConfigError("<root>", "config must be a mapping")
    unknown = set(d) - _TOP_KEYS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown key")
    kw: dict[str, Any] = {}

    system = _section(d, "system", {"preset", "dt", "A", "B"})
    if "preset" in system:
        kw["system_preset"] = system["preset"]
        kw["dt"] = _num(system.get("dt", benchmark.DEFAULT_DT), "system.dt")
        if "A" in system or "B" in system:
            raise ConfigError("system", "give either a preset or A and B, not both")
    else:
        kw["system_preset"] = None
        kw["dt"] = None
        if "A" not in system or "B" not in system:
            raise ConfigError("system", "give either a preset or both A and B")
        kw["A"] = _mat(system["A"], "system.A")
        kw["B"] = _mat(system["B"], "system.B")

    cost = _section(d, "cost", {"Q", "R"})
    for key in ("Q", "R"):
        if key not in cost:
            raise ConfigError(f"cost.{key}", "missing")
        kw[key] = _mat(cost[key], f"cost.{key}")

    box = _section(d, "input_box", {"lower", "upper"})
    for key, attr in (("lower", "u_min"), ("upper", "u_max")):
        if key not in box:
            raise ConfigError(f"input_box.{key}", "missing")
        kw[attr] = _vec(box[key], f"input_box.{key}")

    barriers = []
    for i, b in enumerate(d.get("barriers") or []):
        if not isinstance(b, dict) or set(b) - {"a", "c", "gamma", "name"}:
            raise ConfigError(f"barriers[{i}]", "expected keys a, c, gamma, name")
        for key in ("a", "c", "gamma"):
            if key not in b:
                raise ConfigError(f"barriers[{i}].{key}", "missing")
        barriers.append(BarrierConfig(
            _vec(b["a"], f"barriers[{i}].a"),
            _num(b["c"], f"barriers[{i}].c"),
            _num(b["gamma"], f"barriers[{i}].gamma"),
            str(b.get("name", "")),
        ))
    kw["barriers"] = tuple(barriers)

    affine = []
    for i, c in enumerate(d.get("affine_constraints") or []):
        if not isinstance(c, dict) or set(c) != {"a", "b"}:
            raise ConfigError(f"affine_constraints[{i}]", "expected keys a, b")
        affine.append(AffineConfig(
            _vec(c["a"], f"affine_constraints[{i}].a"), _num(c["b"], f"affine_constraints[{i}].b")
        ))
    kw["affine_constraints"] = tuple(affine)
    kw["affine_full_horizon"] = bool(d.get("affine_full_horizon", False))

    if "x0" not in d:
        raise ConfigError("x0", "missing")
    kw["x0"] = _vec(d["x0"], "x0")
    if "N" not in d:
        raise ConfigError("N", "missing")
    kw["N"] = _num(d["N"], "N", int)
    has_nt, has_ch = "Ntilde" in d, "constraint_horizon" in d
    if has_nt == has_ch:
        raise ConfigError("Ntilde", "give exactly one of Ntilde / constraint_horizon")
    if has_nt:
        kw["Ntilde"] = _num(d["Ntilde"], "Ntilde", int)
    else:
        kw["Ntilde"] = kw["N"] - _num(d["constraint_horizon"], "constraint_horizon", int)

    stop = _section(d, "stop", {"eps", "max_steps"})
    if "eps" in stop:
        kw["eps"] = _num(stop["eps"], "stop.eps")
    if "max_steps" in stop:
        kw["max_steps"] = _num(stop["max_steps"], "stop.max_steps", int)
    solver = _section(d, "solver", {"abs_tol", "rel_tol", "feas_tol", "max_iter"})
    for key in ("abs_tol", "rel_tol", "feas_tol"):
        if key in solver:
            kw[key] = _num(solver[key], f"solver.{key}")
    if "max_iter" in solver:
        kw["max_iter"] = _num(solver["max_iter"], "solver.max_iter", int)
    out = _section(d, "output", {"dir"})
    if "dir" in out:
        kw["out_dir"] = str(out["dir"])
    if "seed" in d:
        kw["seed"] = _num(d["seed"], "seed", int)

    cfg = RunConfig(**kw)
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("--config", f"invalid YAML: {exc}") from None
    return config_from_dict(data)


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False, default_flow_style=None)


def default_benchmark() -> RunConfig:
    bs = benchmark_barriers(benchmark.GAMMA, benchmark.VELOCITY_LIMIT)
    cfg = RunConfig(
        system_preset="double_integrator",
        dt=benchmark.DEFAULT_DT,
        Q=_mat(np.eye(4), "Q"),
        R=_mat(np.eye(2), "R"),
        u_min=(-benchmark.INPUT_LIMIT,) * 2,
        u_max=(benchmark.INPUT_LIMIT,) * 2,
        barriers=tuple(BarrierConfig(tuple(b.a.tolist()), b.c, b.gamma, b.name) for b in bs.barriers),
        affine_constraints=tuple(AffineConfig(tuple(c.a.tolist()), c.b) for c in bs.extra_affine),
        x0=tuple(benchmark.X0.tolist()),
        N=20,
        Ntilde=10,
    )
    cfg.validate()
    return cfg


PRESETS = {"paper-benchmark": default_benchmark}
