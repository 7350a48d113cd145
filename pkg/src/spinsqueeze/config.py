"""Experiment configuration: INI-style ``key = value`` files with ``[section]`` headers.

Example::

    [experiment]
    name = ground-scaling
    n_grid = 30:150:10
    seed = 7

    [noise]
    k_alpha = 0.05
    realizations = 24

Every block is validated when the file is loaded, before any computation.
"""

from __future__ import annotations

import configparser
import hashlib
import math
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

EXPERIMENTS = ("ground-scaling", "time-scaling", "noise-sweep", "coop-sweep", "single-run")
FULL_GRID = tuple(range(30, 151, 10))
TIME_SCALING_GRID = tuple(range(30, 101, 10))


class ConfigError(ValueError):
    pass


def parse_grid(text: str) -> tuple[int, ...]:
    """``"30:150:10"`` (inclusive range) or ``"30, 50, 100"``."""
    text = text.strip()
    try:
        if ":" in text:
            parts = [int(p) for p in text.split(":")]
            if len(parts) not in (2, 3):
                raise ValueError
            start, stop = parts[0], parts[1]
            step = parts[2] if len(parts) == 3 else 1
            if step <= 0:
                raise ValueError
            grid = tuple(range(start, stop + 1, step))
        else:
            grid = tuple(int(p) for p in text.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"cannot parse N grid {text!r}") from None
    if not grid or any(n < 1 for n in grid):
        raise ConfigError(f"N grid {text!r} must contain positive integers")
    return grid


def parse_floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(p) for p in text.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"cannot parse number list {text!r}") from None


@dataclass(frozen=True)
class ProtocolBlock:
    signal_fraction: float = 1 / math.sqrt(2)
    adiabatic_infidelity: float = 7e-3
    optimal_infidelity: float = 5e-4
    kind: str = "adiabatic"
    adiabatic_time: str = "search"
    method: str = "expm"
    step_size: float | None = None


@dataclass(frozen=True)
class OptimizerBlock:
    n_f: int = 10
    budget: int = 20_000
    restarts: int = 4
    simplex_edge: float = 0.1
    clamp: float = 5.0
    seed: int | None = None
    time_rule: str = "fit"
    time_amplitude: float = 0.06
    time_exponent: float = 0.93
    time_factor: float = 1.5

    def duration(self, n_atoms: int) -> float:
        return self.time_factor * self.time_amplitude * n_atoms**self.time_exponent


@dataclass(frozen=True)
class NoiseBlock:
    k_alpha: float = 0.05
    k_beta: float = 0.05
    nu: float = 500.0
    realizations: int = 24
    seed: int | None = None


@dataclass(frozen=True)
class DissipationBlock:
    n_atoms: int = 30
    kappa_over_delta: float = 1e-3
    eta_grid: tuple[float, ...] = tuple(10.0 ** (k / 2) for k in range(6, 19))
    include_omega: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "ground-scaling"
    n_grid: tuple[int, ...] = FULL_GRID
    master_seed: int = 0
    workers: int = 1
    out: str = "results"
    format: str = "csv"
    full: bool = False
    protocol: ProtocolBlock = field(default_factory=ProtocolBlock)
    optimizer: OptimizerBlock = field(default_factory=OptimizerBlock)
    noise: NoiseBlock = field(default_factory=NoiseBlock)
    dissipation: DissipationBlock = field(default_factory=DissipationBlock)

    @property
    def optimizer_seed(self) -> int:
        return self.master_seed if self.optimizer.seed is None else self.optimizer.seed

    @property
    def noise_seed(self) -> int:
        return self.master_seed if self.noise.seed is None else self.noise.seed

    def resolved(self) -> dict:
        d = asdict(self)
        d["optimizer"]["seed"] = self.optimizer_seed
        d["noise"]["seed"] = self.noise_seed
        return d

    def digest(self) -> str:
        """Hash of everything that can change a number; workers and out do not."""
        d = self.resolved()
        for key in ("workers", "out"):
            d.pop(key)
        payload = json.dumps(d, sort_keys=True, default=repr)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    need(cfg.experiment in EXPERIMENTS, f"unknown experiment {cfg.experiment!r}; choose from {EXPERIMENTS}")
    need(len(cfg.n_grid) > 0 and all(n >= 1 for n in cfg.n_grid), "n_grid must hold positive integers")
    need(cfg.master_seed >= 0, "seed must be non-negative")
    need(cfg.workers >= 1, "workers must be >= 1")
    need(cfg.format in ("csv", "json"), f"format must be csv or json, got {cfg.format!r}")

    p = cfg.protocol
    need(0 < p.signal_fraction < 1, "signal_fraction must lie in (0, 1)")
    need(0 < p.adiabatic_infidelity < 1 and 0 < p.optimal_infidelity < 1, "target infidelities must lie in (0, 1)")
    need(p.kind in ("adiabatic", "crab"), f"protocol kind must be adiabatic or crab, got {p.kind!r}")
    need(p.adiabatic_time in ("search", "fit"), "adiabatic_time must be search or fit")
    need(p.method in ("expm", "split", "rk4"), f"unknown method {p.method!r}")
    need(p.step_size is None or p.step_size > 0, "step_size must be positive")

    o = cfg.optimizer
    need(o.n_f >= 1 and o.restarts >= 1, "n_f and restarts must be >= 1")
    need(o.budget >= 100, "optimizer budget must be >= 100")
    need(o.simplex_edge > 0 and o.clamp > 0, "simplex_edge and clamp must be positive")
    need(o.time_rule in ("fit", "qsl"), "time_rule must be fit or qsl")
    need(o.time_amplitude > 0 and o.time_factor > 0, "optimal-time fit parameters must be positive")

    n = cfg.noise
    need(n.k_alpha >= 0 and n.k_beta >= 0, "noise amplitudes must be >= 0")
    need(n.nu > 0 and n.realizations >= 1, "nu must be positive and realizations >= 1")

    d = cfg.dissipation
    need(d.n_atoms >= 1, "dissipation n_atoms must be >= 1")
    need(d.kappa_over_delta > 0, "kappa_over_delta must be positive")
    eta = np.asarray(d.eta_grid)
    need(eta.size > 0 and np.all(eta > 0) and np.all(np.diff(eta) > 0), "eta_grid must be positive and ascending")
    return cfg


def _getbool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


_CASTS = {
    int: int,
    float: float,
    str: str,
    bool: _getbool,
}


def _block(cls, section, overrides):
    kwargs = {}
    defaults = cls()
    for key, raw in section.items():
        if key not in cls.__dataclass_fields__:
            raise ConfigError(f"unknown key {key!r} in [{section.name}]")
        current = getattr(defaults, key)
        try:
            if key == "eta_grid":
                kwargs[key] = parse_floats(raw)
            elif current is None:
                kwargs[key] = None if raw.strip().lower() in ("", "none") else (
                    int(raw) if key == "seed" else float(raw))
            else:
                kwargs[key] = _CASTS[type(current)](raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {section.name}.{key}: {raw!r} ({exc})") from None
    kwargs.update(overrides)
    return cls(**kwargs)


def load_config(path=None, **overrides) -> ExperimentConfig:
    """Read ``path`` (optional), apply keyword overrides, validate."""
    parser = configparser.ConfigParser(interpolation=None)
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file {path} not found")
        try:
            parser.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from None
    known = {"experiment", "protocol", "optimizer", "noise", "dissipation"}
    extra = set(parser.sections()) - known
    if extra:
        raise ConfigError(f"unknown config sections: {sorted(extra)}")

    top = {}
    if parser.has_section("experiment"):
        sec = parser["experiment"]
        for key, raw in sec.items():
            try:
                if key == "name":
                    top["experiment"] = raw.strip()
                elif key == "n_grid":
                    top["n_grid"] = parse_grid(raw)
                elif key in ("seed", "master_seed"):
                    top["master_seed"] = int(raw)
                elif key == "workers":
                    top["workers"] = int(raw)
                elif key in ("out", "format"):
                    top[key] = raw.strip()
                elif key == "full":
                    top["full"] = _getbool(raw)
                else:
                    raise ConfigError(f"unknown key {key!r} in [experiment]")
            except ValueError as exc:
                if isinstance(exc, ConfigError):
                    raise
                raise ConfigError(f"bad value for experiment.{key}: {raw!r}") from None

    empty = {}
    blocks = {}
    for name, cls in (("protocol", ProtocolBlock), ("optimizer", OptimizerBlock), ("noise", NoiseBlock),
                      ("dissipation", DissipationBlock)):
        section = parser[name] if parser.has_section(name) else _EmptySection(name)
        blocks[name] = _block(cls, section, overrides.pop(name, empty))

    top.update({k: v for k, v in overrides.items() if v is not None})
    try:
        cfg = ExperimentConfig(**top, **blocks)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return validate(cfg)


class _EmptySection(dict):
    def __init__(self, name):
        super().__init__()
        self.name = name


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return validate(replace(cfg, **{k: v for k, v in kw.items() if v is not None}))
