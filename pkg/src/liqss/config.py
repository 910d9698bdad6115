"""Run configuration: a JSON document with machine, grid, torque, quanta and solver blocks."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

from .analysis import Scenario
from .machine import STATE_NAMES, GridSpec, MachineParams, TorqueProfile

__all__ = ["ConfigError", "Quanta", "Solver", "RunConfig", "load_config", "default_config"]


class ConfigError(ValueError):
    """The configuration is malformed or has out-of-range values."""


@dataclass(frozen=True)
class Quanta:
    """Quantum sizes in model units (Wb, rad/s, rad).

    ``None`` for `speed_dq` or `angle_dq` means "derive from `flux_dq`".
    """

    flux_dq: float = 1e-4
    speed_dq: float | None = None
    angle_dq: float | None = None
    overrides: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in ("flux_dq", "speed_dq", "angle_dq"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigError(f"quanta.{name} must be > 0")
        for k, v in self.overrides.items():
            if k not in STATE_NAMES:
                raise ConfigError(f"quanta.overrides: unknown state {k!r}")
            if not v > 0:
                raise ConfigError(f"quanta.overrides.{k} must be > 0")


@dataclass(frozen=True)
class Solver:
    t_end: float = 50.0
    euler_dt: float = 1e-4
    resample_dt: float = 1e-4

    def __post_init__(self) -> None:
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise ConfigError(f"solver.{f.name} must be > 0")
        if abs(self.resample_dt - self.euler_dt) > 1e-15:
            # errors are computed sample by sample on the Euler grid
            raise ConfigError("solver.resample_dt must equal solver.euler_dt")


@dataclass(frozen=True)
class RunConfig:
    machine: MachineParams = field(default_factory=MachineParams)
    grid: GridSpec = field(default_factory=GridSpec)
    torque: TorqueProfile = field(default_factory=TorqueProfile)
    quanta: Quanta = field(default_factory=Quanta)
    solver: Solver = field(default_factory=Solver)
    out_dir: str = "out"

    _BLOCKS = {"machine": MachineParams, "grid": GridSpec, "torque": TorqueProfile,
               "quanta": Quanta, "solver": Solver}

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(d) - set(cls._BLOCKS) - {"out_dir"}
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        kw = {}
        for key, typ in cls._BLOCKS.items():
            block = d.get(key, {})
            if not isinstance(block, dict):
                raise ConfigError(f"{key} must be an object")
            names = {f.name for f in fields(typ)}
            extra = set(block) - names
            if extra:
                raise ConfigError(f"unknown keys in {key}: {sorted(extra)}")
            try:
                kw[key] = typ(**block)
            except ConfigError:
                raise
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{key}: {exc}") from exc
        out_dir = d.get("out_dir", "out")
        if not isinstance(out_dir, str) or not out_dir:
            raise ConfigError("out_dir must be a non-empty string")
        return cls(out_dir=out_dir, **kw)

    def to_dict(self) -> dict:
        return {key: asdict(getattr(self, key)) for key in self._BLOCKS} | {"out_dir": self.out_dir}

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def scenario(self) -> Scenario:
        return Scenario(self.machine, self.grid, self.torque, self.solver.t_end,
                        self.solver.euler_dt)

    def with_overrides(self, *, out_dir=None, t_end=None, dq=None, dq_speed=None) -> "RunConfig":
        """Apply command-line overrides."""
        cfg = self
        if out_dir is not None:
            cfg = replace(cfg, out_dir=str(out_dir))
        if t_end is not None:
            cfg = replace(cfg, solver=_rebuild(cfg.solver, t_end=t_end))
        if dq is not None:
            cfg = replace(cfg, quanta=_rebuild(cfg.quanta, flux_dq=dq))
        if dq_speed is not None:
            cfg = replace(cfg, quanta=_rebuild(cfg.quanta, speed_dq=dq_speed))
        return cfg


def _rebuild(obj, **changes):
    try:
        return replace(obj, **changes)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None = None) -> RunConfig:
    """Read a config file, or the shipped default when `path` is None."""
    try:
        if path is None:
            text = resources.files("liqss").joinpath("default_config.json").read_text()
        else:
            text = Path(path).read_text()
        data = json.loads(text)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    return RunConfig.from_dict(data)


def default_config() -> RunConfig:
    return load_config(None)
