"""Declarative experiment configuration (TOML, schema-validated).

Unknown keys are rejected so typos fail fast; tolerances must be
positive.  The config fully determines a run together with the seed.
"""

from __future__ import annotations

import hashlib
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError


def _take(table: dict, allowed: dict, context: str) -> dict:
    unknown = set(table) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in [{context}]: {sorted(unknown)}")
    out = {}
    for key, default in allowed.items():
        out[key] = table.get(key, default)
    return out


@dataclass(frozen=True)
class ProblemConfig:
    lagrangian: str = "quadratic"
    dim: int = 1
    horizon: float = 1.0
    terminal: str = "zero"
    terminal_params: dict = field(default_factory=dict)

    @staticmethod
    def from_dict(d: dict) -> "ProblemConfig":
        vals = _take(d, {"lagrangian": "quadratic", "dim": 1, "horizon": 1.0,
                         "terminal": "zero", "terminal_params": {}}, "problem")
        return ProblemConfig(**vals)


@dataclass(frozen=True)
class InitialDatum:
    id: str
    t0: float
    path: str
    path_params: dict = field(default_factory=dict)

    @staticmethod
    def from_dict(d: dict) -> "InitialDatum":
        vals = _take(d, {"id": None, "t0": 0.0, "path": "zero", "path_params": {}},
                     "initial_data")
        if vals["id"] is None:
            raise ConfigError("each initial datum needs an id")
        return InitialDatum(**vals)


@dataclass(frozen=True)
class SolverConfig:
    cells: int = 64
    restarts: int = 8
    steps: int = 6
    control_grid: object = "auto"       # "auto" or list of velocities
    points_per_side: int = 2
    samples: int = 100_000
    node_budget: int = 20_000_000
    geometric_grid: bool = False
    geometric_growth: float = 1.002
    use_oracle: str = "auto"            # auto|always|never

    @staticmethod
    def from_dict(d: dict) -> "SolverConfig":
        vals = _take(d, {"cells": 64, "restarts": 8, "steps": 6,
                         "control_grid": "auto", "points_per_side": 2,
                         "samples": 100_000, "node_budget": 20_000_000,
                         "geometric_grid": False, "geometric_growth": 1.002,
                         "use_oracle": "auto"}, "solver")
        if vals["use_oracle"] not in ("auto", "always", "never"):
            raise ConfigError("solver.use_oracle must be auto, always, or never")
        return SolverConfig(**vals)


@dataclass(frozen=True)
class Tolerances:
    gap: float = 0.05
    check: float = 0.05
    rescaling: float = 0.02

    @staticmethod
    def from_dict(d: dict) -> "Tolerances":
        vals = _take(d, {"gap": 0.05, "check": 0.05, "rescaling": 0.02},
                     "tolerances")
        for k, v in vals.items():
            if v <= 0:
                raise ConfigError(f"tolerances.{k} must be positive")
        return Tolerances(**vals)


@dataclass(frozen=True)
class VerifyConfig:
    subsolution_samples: int = 50
    minimax_samples: int = 100
    mc_samples: int = 200
    value_cells: int = 16
    value_restarts: int = 2
    tree_steps: int = 3
    inject_offset: float = 0.0
    rescaling_t0: tuple = (0.0, 0.5, 1.0)
    n: int = 1

    @staticmethod
    def from_dict(d: dict) -> "VerifyConfig":
        vals = _take(d, {"subsolution_samples": 50, "minimax_samples": 100,
                         "mc_samples": 200, "value_cells": 16,
                         "value_restarts": 2, "tree_steps": 3,
                         "inject_offset": 0.0,
                         "rescaling_t0": [0.0, 0.5, 1.0], "n": 1}, "verify")
        vals["rescaling_t0"] = tuple(vals["rescaling_t0"])
        return VerifyConfig(**vals)


@dataclass(frozen=True)
class LegendreConfig:
    p_min: float = -5.0
    p_max: float = 5.0
    count: int = 21

    @staticmethod
    def from_dict(d: dict) -> "LegendreConfig":
        return LegendreConfig(**_take(d, {"p_min": -5.0, "p_max": 5.0, "count": 21},
                                      "legendre"))


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"
    format: str = "csv"

    @staticmethod
    def from_dict(d: dict) -> "OutputConfig":
        vals = _take(d, {"directory": "out", "format": "csv"}, "output")
        if vals["format"] not in ("csv", "json"):
            raise ConfigError("output.format must be csv or json")
        return OutputConfig(**vals)


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemConfig
    initial_data: tuple
    n_schedule: tuple
    solver: SolverConfig
    tolerances: Tolerances
    verify: VerifyConfig
    legendre: LegendreConfig
    output: OutputConfig
    seed: int
    config_hash: str = ""

    @staticmethod
    def from_dict(d: dict, raw_bytes: bytes = b"") -> "ExperimentConfig":
        top = _take(d, {"problem": {}, "initial_data": [], "schedule": {},
                        "solver": {}, "tolerances": {}, "verify": {},
                        "legendre": {}, "output": {}, "seed": 0}, "top level")
        schedule = _take(top["schedule"], {"n": [1, 4, 16, 64, 256]}, "schedule")
        data = tuple(InitialDatum.from_dict(x) for x in top["initial_data"])
        if not data:
            data = (InitialDatum("default", 0.0, "zero"),)
        return ExperimentConfig(
            problem=ProblemConfig.from_dict(top["problem"]),
            initial_data=data,
            n_schedule=tuple(int(n) for n in schedule["n"]),
            solver=SolverConfig.from_dict(top["solver"]),
            tolerances=Tolerances.from_dict(top["tolerances"]),
            verify=VerifyConfig.from_dict(top["verify"]),
            legendre=LegendreConfig.from_dict(top["legendre"]),
            output=OutputConfig.from_dict(top["output"]),
            seed=int(top["seed"]),
            config_hash=hashlib.sha256(raw_bytes).hexdigest())

    def with_overrides(self, seed: Optional[int] = None,
                       out: Optional[str] = None) -> "ExperimentConfig":
        from dataclasses import replace
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=seed)
        if out is not None:
            cfg = replace(cfg, output=OutputConfig(out, cfg.output.format))
        return cfg


def load_config(path) -> ExperimentConfig:
    raw = Path(path).read_bytes()
    try:
        data = tomllib.loads(raw.decode("utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return ExperimentConfig.from_dict(data, raw)
