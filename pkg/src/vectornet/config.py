"""Run configuration: YAML parsing with strict key checking."""
from __future__ import annotations

import dataclasses
import difflib
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .core_model import ModelParams
from .engine import TRAVEL_INFECTION, EventSpec, MutationSpec, QuarantineSpec
from .geo_ingest import IslandConfig
from .mobility import MobilityGenConfig


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


@dataclass(frozen=True)
class NetworkSource:
    nodes: str | None = None          # id,x_m,y_m,population[,area_m2]
    intersections: str | None = None  # x_m,y_m
    cells: str | None = None          # x0_m,y0_m,size_m,population
    island: IslandConfig | None = None
    d_max: float = 200.0


@dataclass(frozen=True)
class MobilitySource:
    file: str | None = None
    generator: MobilityGenConfig | None = None
    return_rate: float = 1.0


@dataclass(frozen=True)
class IntegratorSettings:
    t0: float = 0.0
    t1: float = 400.0
    h: float = 0.05
    output_interval: float = 1.0


@dataclass(frozen=True)
class SimulationSettings:
    seed_node: int | None = None
    seed_count: float = 1.0
    observed_nodes: tuple = ()
    snapshot_times: tuple = ()
    travel_infection: str = "origin"
    mosquito_mobility: bool = True
    normalize_kernel: bool = False
    frozen_aquatic: bool = False


@dataclass(frozen=True)
class ExperimentSettings:
    thresholds: tuple = (1.0, 0.5, 0.2, 0.1, 0.02)
    beta_h_values: tuple = ()
    beta_m_values: tuple = ()
    n_replicates: int = 30
    reference: str | None = None
    workers: int = 1


@dataclass(frozen=True)
class RunConfig:
    seed: int
    network: NetworkSource = NetworkSource()
    mobility: MobilitySource = MobilitySource()
    params: ModelParams = ModelParams()
    events: EventSpec = EventSpec()
    integrator: IntegratorSettings = IntegratorSettings()
    simulation: SimulationSettings = SimulationSettings()
    experiment: ExperimentSettings = ExperimentSettings()
    output_dir: str = "out"
    base_dir: str = field(default=".", compare=False)

    def resolve(self, path: str | None) -> Path | None:
        if path is None:
            return None
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("base_dir")
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()


# nested sections and the dataclass that parses them
_NESTED = {
    (RunConfig, "network"): NetworkSource,
    (RunConfig, "mobility"): MobilitySource,
    (RunConfig, "params"): ModelParams,
    (RunConfig, "events"): EventSpec,
    (RunConfig, "integrator"): IntegratorSettings,
    (RunConfig, "simulation"): SimulationSettings,
    (RunConfig, "experiment"): ExperimentSettings,
    (NetworkSource, "island"): IslandConfig,
    (MobilitySource, "generator"): MobilityGenConfig,
    (EventSpec, "quarantine"): QuarantineSpec,
    (EventSpec, "mutation"): MutationSpec,
}


# keys owned elsewhere: sub-seeds derive from the master seed, the return
# rate lives in the mobility section
_RESERVED = {
    (IslandConfig, "seed"): "seeds derive from the top-level 'seed'",
    (MobilityGenConfig, "seed"): "seeds derive from the top-level 'seed'",
    (MobilityGenConfig, "return_rate"): "use 'mobility.return_rate'",
}


def _coerce(value, default, where):
    """Check `value` against the type of the field default."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, tuple):
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        return tuple(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
    return value


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'}: expected a mapping, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls) if f.name != "base_dir"}
    kwargs = {}
    for key, value in data.items():
        loc = f"{where}.{key}" if where else str(key)
        if key not in fields:
            lowered = {k.lower().replace("_", ""): k for k in fields}
            hit = lowered.get(str(key).lower().replace("_", ""))
            hint = [hit] if hit else difflib.get_close_matches(str(key), list(fields), n=1, cutoff=0.5)
            msg = f"unknown key '{loc}'"
            raise ConfigError(msg + (f"; did you mean '{hint[0]}'?" if hint else ""))
        if (cls, key) in _RESERVED:
            raise ConfigError(f"key '{loc}' is not settable here; {_RESERVED[(cls, key)]}")
        sub = _NESTED.get((cls, key))
        if sub is not None:
            kwargs[key] = None if value is None else _build(sub, value, loc)
            continue
        f = fields[key]
        default = f.default if f.default is not dataclasses.MISSING else None
        if default is None and value is not None and str(f.type) == "float":
            kwargs[key] = _coerce(value, 0.0, loc)
        elif value is None or default is None:
            # optional fields: type-check against the annotation name
            if value is not None and "str" in str(f.type) and not isinstance(value, str):
                raise ConfigError(f"{loc}: expected a string, got {value!r}")
            if value is not None and "int" in str(f.type) and (isinstance(value, bool) or not isinstance(value, int)):
                raise ConfigError(f"{loc}: expected an integer, got {value!r}")
            kwargs[key] = value
        else:
            kwargs[key] = _coerce(value, default, loc)
    missing = [n for n, f in fields.items() if n not in kwargs
               and f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING]
    if missing:
        raise ConfigError(f"missing required key '{(where + '.') if where else ''}{missing[0]}'")
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where or 'config'}: {exc}") from None


def parse_config(source, base_dir=None, check_files: bool = True) -> RunConfig:
    """Parse a YAML document (path or mapping) into a validated RunConfig.

    Relative file paths resolve against the config file's directory.
    """
    if isinstance(source, dict):
        data, base = source, Path(base_dir or ".")
    else:
        path = Path(source)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = yaml.safe_load(path.read_text())
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        base = Path(base_dir) if base_dir else path.parent
        if data is None:
            data = {}
    cfg = _build(RunConfig, data, "")
    cfg = dataclasses.replace(cfg, base_dir=str(base))
    _validate(cfg, check_files)
    return cfg


def _validate(cfg: RunConfig, check_files: bool) -> None:
    net = cfg.network
    sources = [net.nodes is not None, net.intersections is not None or net.cells is not None,
               net.island is not None]
    if sum(sources) > 1:
        raise ConfigError("network: give exactly one of nodes, intersections+cells, island")
    if (net.intersections is None) != (net.cells is None):
        raise ConfigError("network: intersections and cells go together")
    if net.d_max <= 0:
        raise ConfigError("network.d_max: must be > 0")
    if cfg.mobility.file is not None and cfg.mobility.generator is not None:
        raise ConfigError("mobility: give either file or generator")
    if cfg.mobility.return_rate < 0:
        raise ConfigError("mobility.return_rate: must be >= 0")
    it = cfg.integrator
    if it.h <= 0:
        raise ConfigError("integrator.h: must be > 0")
    if it.t1 < it.t0:
        raise ConfigError("integrator.t1: must be >= t0")
    if it.output_interval <= 0:
        raise ConfigError("integrator.output_interval: must be > 0")
    if cfg.simulation.travel_infection not in TRAVEL_INFECTION:
        raise ConfigError(f"simulation.travel_infection: one of {', '.join(TRAVEL_INFECTION)}")
    if cfg.experiment.workers < 1:
        raise ConfigError("experiment.workers: must be >= 1")
    if check_files:
        for loc, p in (("network.nodes", net.nodes), ("network.intersections", net.intersections),
                       ("network.cells", net.cells), ("mobility.file", cfg.mobility.file),
                       ("experiment.reference", cfg.experiment.reference)):
            if p is not None and not cfg.resolve(p).is_file():
                raise ConfigError(f"{loc}: file not found: {cfg.resolve(p)}")
