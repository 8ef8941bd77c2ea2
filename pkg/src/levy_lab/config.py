"""TOML experiment configuration and its canonical hash.

Example::

    experiment = "convergence"
    seed = 7
    p = 2.0
    t = 1.0
    schedule = [0.5, 0.25, 0.125]
    reps = 20000

    [measure]
    generator = "radial"
    alpha = 1.0
    dimension = 2

    [solver]
    tol = 1e-8

    [output]
    dir = "results"
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .infconv import SolverConfig
from .measures import DomainError, ModelSpace, RadialFamily, DiscreteMeasure, measure_from_dict, unit_directions
from .criteria import DEFAULT_SCHEDULE, series_family
from .rng import substream

EXPERIMENTS = ("check", "simulate", "novikov", "umd", "gamma-norm", "convergence", "criteria-matrix")
GENERATORS = ("radial", "series", "random-discrete", "single-atom")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MeasureSpec:
    """Where the candidate measure comes from: a JSON file, an inline table
    in the measure JSON schema, or a named generator with parameters."""

    kind: str  # "file" | "inline" | "generator"
    file: str | None = None
    inline: dict | None = None
    generator: str | None = None
    params: dict = field(default_factory=dict)

    def canonical(self) -> dict:
        if self.kind == "file":
            # content, not location, defines the experiment
            return {"kind": "file", "content": json.loads(Path(self.file).read_text())}
        if self.kind == "inline":
            return {"kind": "inline", "content": self.inline}
        return {"kind": "generator", "generator": self.generator, "params": self.params}

    def build(self, p: float, seed: int):
        """The measure this spec describes (a DiscreteMeasure, RadialFamily or
        MeasureSequence)."""
        if self.kind == "file":
            return measure_from_dict(json.loads(Path(self.file).read_text()))
        if self.kind == "inline":
            return measure_from_dict(copy.deepcopy(self.inline))
        return build_generated(self.generator, self.params, p, seed)


def _space(params, p):
    d = int(params.get("dimension", 1))
    if "grid_weights" in params:
        return ModelSpace.grid(params["grid_weights"], p)
    return ModelSpace.sequence(d, p)


def build_generated(name: str, params: dict, p: float, seed: int):
    params = dict(params)
    if name == "radial":
        space = _space(params, p)
        d = space.dimension
        dirs = params.get("directions")
        if dirs is None:
            dirs = np.vstack([np.eye(d), -np.eye(d)])
        dirs = np.asarray(dirs, float)
        dirs = dirs / space.norm(dirs)[:, None]
        wts = params.get("direction_weights")
        return RadialFamily(space, float(params.get("alpha", 1.0)), unit_directions(space, dirs, wts),
                            float(params.get("rmax", 1.0)))
    if name == "series":
        sizes = params.get("sizes", [2**k for k in range(4, 13)])
        return series_family(float(params.get("p", p)), sizes)
    if name == "random-discrete":
        space = _space(params, p)
        rng = substream(seed, "measure", "random-discrete")
        n = int(params.get("atoms", 8))
        scale = float(params.get("scale", 0.5))
        atoms = rng.normal(size=(n, space.dimension)) * scale
        masses = rng.uniform(float(params.get("mass_low", 0.1)), float(params.get("mass_high", 1.0)), size=n)
        return DiscreteMeasure(space, atoms, masses)
    if name == "single-atom":
        space = _space(params, p)
        u = np.asarray(params.get("atom", [0.5] + [0.0] * (space.dimension - 1)), float)
        return DiscreteMeasure(space, u[None, :], np.array([float(params.get("mass", 1.0))]))
    raise ConfigError(f"unknown measure generator {name!r}; choose from {GENERATORS}")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int
    measure: MeasureSpec | None = None
    p: float = 2.0
    t: float = 1.0
    schedule: tuple = DEFAULT_SCHEDULE
    reps: int = 10000
    reps_outer: int = 2000
    n_gauss: int = 200
    cells: int = 4
    mode: str = "sharp"
    solver: SolverConfig = field(default_factory=SolverConfig)
    params: dict = field(default_factory=dict)
    output_dir: str = "results"
    source: str | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if not isinstance(self.seed, (int, np.integer)) or isinstance(self.seed, bool):
            raise ConfigError("seed must be an integer")
        sched = tuple(float(x) for x in self.schedule)
        if not sched or any(x <= 0 for x in sched) or any(b >= a for a, b in zip(sched, sched[1:])):
            raise ConfigError("schedule must be positive and strictly decreasing")
        object.__setattr__(self, "schedule", sched)
        if not (self.p > 1 and math.isfinite(self.p)):
            raise ConfigError("p must be finite and > 1")
        if self.t <= 0:
            raise ConfigError("horizon t must be positive")
        if self.mode not in ("sharp", "sufficient"):
            raise ConfigError("mode must be 'sharp' or 'sufficient'")
        for name in ("reps", "reps_outer", "n_gauss", "cells"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be positive")

    def canonical(self) -> dict:
        """Semantic content only (no output paths or file locations)."""
        return {
            "experiment": self.experiment,
            "seed": int(self.seed),
            "measure": None if self.measure is None else self.measure.canonical(),
            "p": float(self.p),
            "t": float(self.t),
            "schedule": list(self.schedule),
            "reps": int(self.reps),
            "reps_outer": int(self.reps_outer),
            "n_gauss": int(self.n_gauss),
            "cells": int(self.cells),
            "mode": self.mode,
            "solver": {"tol": self.solver.tol, "max_iter": self.solver.max_iter, "step_rule": self.solver.step_rule},
            "params": self.params,
        }

    def config_hash(self) -> str:
        text = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"), allow_nan=False)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def replace(self, **kw) -> "ExperimentConfig":
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update({k: v for k, v in kw.items() if v is not None})
        return ExperimentConfig(**d)

    def build_measure(self):
        if self.measure is None:
            raise ConfigError("this experiment needs a [measure] section or --measure")
        return self.measure.build(self.p, self.seed)


def _measure_spec(table, base: Path) -> MeasureSpec:
    if table is None:
        return None
    if isinstance(table, str):
        table = {"file": table}
    keys = {"file", "inline", "generator"} & set(table)
    if len(keys) != 1:
        raise ConfigError("[measure] needs exactly one of 'file', 'inline', 'generator'")
    if "file" in table:
        path = Path(table["file"])
        if not path.is_absolute():
            path = base / path
        if not path.is_file():
            raise ConfigError(f"measure file not found: {path}")
        return MeasureSpec("file", file=str(path))
    if "inline" in table:
        return MeasureSpec("inline", inline=dict(table["inline"]))
    params = {k: v for k, v in table.items() if k != "generator"}
    if table["generator"] not in GENERATORS:
        raise ConfigError(f"unknown measure generator {table['generator']!r}")
    return MeasureSpec("generator", generator=table["generator"], params=params)


def config_from_dict(raw: dict, base: Path | str = ".") -> ExperimentConfig:
    raw = dict(raw)
    base = Path(base)
    if "seed" not in raw:
        raise ConfigError("seed is mandatory")
    known = {"experiment", "seed", "measure", "p", "t", "schedule", "reps", "reps_outer", "n_gauss",
             "cells", "mode", "solver", "params", "output"}
    extra = set(raw) - known
    if extra:
        raise ConfigError(f"unknown config keys: {sorted(extra)}")
    sol = raw.get("solver", {})
    if set(sol) - {"tol", "max_iter", "step_rule"}:
        raise ConfigError(f"unknown [solver] keys: {sorted(set(sol) - {'tol', 'max_iter', 'step_rule'})}")
    try:
        solver = SolverConfig(**{k: sol[k] for k in ("tol", "max_iter", "step_rule") if k in sol})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad [solver] section: {exc}") from exc
    out = raw.get("output", {})
    kw = {k: raw[k] for k in ("p", "t", "reps", "reps_outer", "n_gauss", "cells", "mode") if k in raw}
    if "schedule" in raw:
        kw["schedule"] = tuple(raw["schedule"])
    return ExperimentConfig(
        experiment=raw.get("experiment", "check"),
        seed=raw["seed"],
        measure=_measure_spec(raw.get("measure"), base),
        solver=solver,
        params=dict(raw.get("params", {})),
        output_dir=str(out.get("dir", "results")),
        **kw,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    cfg = config_from_dict(raw, path.parent)
    return cfg.replace(source=str(path))


def measure_spec_from_path(path) -> MeasureSpec:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"measure file not found: {p}")
    return MeasureSpec("file", file=str(p.resolve()))
