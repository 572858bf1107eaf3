"""Experiment configuration files (INI syntax, ``schema = 1``).

Example::

    [experiment]
    schema = 1
    alphas = 1.3, 0.05, 0.05, 0.05, 0.05, 0.05
    master_seed = 7
    replicas = 100000

    [thresholds]
    hill_range = 1.55, 1.95

Every key of ``[experiment]`` maps onto a field of ExperimentConfig;
``[grids]`` and ``[thresholds]`` are free-form numeric lists read by the
experiments that need them.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

from rwde.dirichlet import Weights

SCHEMA = 1


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.replace(",", " ").split())


@dataclass
class ExperimentConfig:
    alphas: tuple
    master_seed: int = 0
    replicas: int = 1000
    n_max: int = 10_000_000
    u_hat: tuple | None = None
    a: float | None = None
    window: int | None = None
    eps: float = 0.1
    eta: float | None = None
    m: int | None = None
    threads: int = 1
    chunk: int = 1000
    radius: int = 4
    graph: str | None = None
    grids: dict = field(default_factory=dict)
    thresholds: dict = field(default_factory=dict)
    source: str | None = None

    def __post_init__(self):
        try:
            self.weights = Weights(tuple(self.alphas))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.replicas < 1 or self.n_max < 1 or self.threads < 1 or self.chunk < 1:
            raise ConfigError("replicas, n_max, threads and chunk must be positive")
        if self.u_hat is not None:
            if len(self.u_hat) != self.weights.d:
                raise ConfigError(f"u_hat must have {self.weights.d} components")
            if abs(math.hypot(*self.u_hat) - 1.0) > 1e-12:
                raise ConfigError("u_hat must be a unit vector")
        if self.a is not None and not self.a > 2 * math.sqrt(self.weights.d):
            raise ConfigError(f"a must exceed 2*sqrt(d) = {2 * math.sqrt(self.weights.d):.6g}")

    def grid(self, name, default=None) -> tuple:
        if name in self.grids:
            return self.grids[name]
        if default is None:
            raise ConfigError(f"grid {name!r} missing from [grids]")
        return tuple(default)

    def threshold(self, name, default=None):
        val = self.thresholds.get(name, default)
        if val is None:
            raise ConfigError(f"threshold {name!r} missing from [thresholds]")
        return val

    def echo(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            if f.name in ("source", "threads"):
                continue  # run-environment details live in the timing record
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        out["grids"] = {k: list(v) for k, v in self.grids.items()}
        out["thresholds"] = {k: (list(v) if isinstance(v, tuple) else v)
                             for k, v in self.thresholds.items()}
        out["schema"] = SCHEMA
        return out


_INT_KEYS = {"master_seed", "replicas", "n_max", "window", "m", "threads", "chunk", "radius"}
_FLOAT_KEYS = {"a", "eps", "eta"}
_VECTOR_KEYS = {"alphas", "u_hat"}
_STR_KEYS = {"graph"}


def load_config(path, **overrides) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not cp.has_section("experiment"):
        raise ConfigError(f"{path}: missing [experiment] section")
    sec = cp["experiment"]
    schema = sec.get("schema")
    if schema is None or int(schema) != SCHEMA:
        raise ConfigError(f"{path}: expected schema = {SCHEMA}, got {schema}")
    kw = {}
    for key, raw in sec.items():
        if key == "schema":
            continue
        if key not in _INT_KEYS | _FLOAT_KEYS | _VECTOR_KEYS | _STR_KEYS:
            raise ConfigError(f"{path}: unknown key {key!r} in [experiment]")
        try:
            if key in _INT_KEYS:
                kw[key] = int(float(raw)) if "e" in raw.lower() else int(raw)
            elif key in _FLOAT_KEYS:
                kw[key] = float(raw)
            elif key in _VECTOR_KEYS:
                kw[key] = _floats(raw)
            else:
                kw[key] = str((path.parent / raw).resolve())
        except ValueError as exc:
            raise ConfigError(f"{path}: bad value for {key!r}: {exc}") from None
    for sect in ("grids", "thresholds"):
        vals = {}
        if cp.has_section(sect):
            for key, raw in cp[sect].items():
                v = raw.strip().lower()
                if v in ("true", "false"):
                    vals[key] = v == "true"
                    continue
                try:
                    nums = _floats(raw)
                except ValueError:
                    raise ConfigError(f"{path}: [{sect}] {key} must be numeric") from None
                vals[key] = nums if (sect == "grids" or len(nums) > 1) else nums[0]
        kw[sect] = vals
    for k, v in overrides.items():
        if v is not None:
            kw[k] = v
    kw["source"] = str(path)
    if "alphas" not in kw:
        raise ConfigError(f"{path}: alphas is required")
    return ExperimentConfig(**kw)
