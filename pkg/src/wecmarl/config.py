"""Run configuration: one YAML file with a section per module.

Example::

    seed: 0
    workers: 1
    geometry: {tier: coupled}
    pto: {gen_force_max: 2.0e5}
    sim: {dt_sim: 0.05, dt_control: 0.2, integrator: rk4}
    layout: {preset: full}
    sea: {periods: [8, 10, 12, 14, 16], height: 2.0, duration: 200}
    agent: {hidden: [256, 256], init_log_std: -0.5}
    a3c: {optimizer: adam, lr: 1.0e-4, entropy_coef: 0.01, reward_scale: 1.0e-5}
    train_eval: {episodes: 2, periods: [8, 10, 12, 14, 16]}
    protocol: {episodes: 20, duration: 200}
    schedule: canonical_schedule.yaml

Relative paths are resolved against the config file.  Command-line flags
override file values.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import yaml

from .evaluation import EvalProtocol
from .marl.schedule import TrainingSchedule, load_schedule, schedule_from_dict
from .marl.trainer import TrainConfig, _default_eval
from .rl.a3c import A3cConfig
from .wec.env import SeaConfig
from .wec.geometry import TIERS, ConfigError, SimConfig
from .wec.observation import PRESETS

SECTIONS = {"seed", "workers", "geometry", "pto", "sim", "layout", "sea", "agent", "a3c", "train_eval",
            "protocol", "schedule", "output", "fault_threshold"}
PTO_KEYS = {"gen_force_max", "tension_min", "tension_max", "efficiency"}


def packaged(name: str) -> Path:
    return Path(str(resources.files("wecmarl") / "data" / name))


def _build(cls, section: dict, name: str, **extra):
    known = {f.name for f in dataclasses.fields(cls)}
    bad = sorted(set(section) - known)
    if bad:
        raise ConfigError(f"section {name!r}: unknown keys {bad}")
    args = {**section, **extra}
    for k, v in args.items():
        if isinstance(v, list):
            args[k] = tuple(v)
    try:
        return cls(**args)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"section {name!r}: {exc}") from exc


@dataclass
class RunConfig:
    seed: int = 0
    workers: int = 1
    tier: str = "coupled"
    pto: dict = field(default_factory=dict)
    sim: SimConfig = field(default_factory=SimConfig)
    layout: str = "full"
    sea: SeaConfig = field(default_factory=SeaConfig)
    hidden: tuple = (256, 256)
    init_log_std: float = -0.5
    a3c: A3cConfig = field(default_factory=A3cConfig)
    train_eval: EvalProtocol = field(default_factory=_default_eval)
    protocol: EvalProtocol = field(default_factory=EvalProtocol)
    schedule_path: Path | None = None
    fault_threshold: float = 0.25
    source: Path | None = None

    def __post_init__(self):
        if self.tier not in TIERS:
            raise ConfigError(f"tier must be one of {TIERS}, got {self.tier!r}")
        if self.layout not in PRESETS:
            raise ConfigError(f"layout preset must be one of {sorted(PRESETS)}, got {self.layout!r}")
        bad = sorted(set(self.pto) - PTO_KEYS)
        if bad:
            raise ConfigError(f"section 'pto': unknown keys {bad}")
        if int(self.workers) < 1:
            raise ConfigError("workers must be >= 1")
        if self.schedule_path is not None and not Path(self.schedule_path).exists():
            raise ConfigError(f"schedule file not found: {self.schedule_path}")

    def train_config(self) -> TrainConfig:
        return TrainConfig(tier=self.tier, layout=self.layout, sim=self.sim, sea=self.sea,
                           a3c=replace(self.a3c, workers=int(self.workers)), hidden=tuple(self.hidden),
                           init_log_std=float(self.init_log_std), seed=int(self.seed), eval=self.train_eval,
                           fault_threshold=float(self.fault_threshold), pto=dict(self.pto))

    def schedule(self) -> TrainingSchedule:
        return load_schedule(self.schedule_path or packaged("canonical_schedule.yaml"))


def config_from_dict(data: dict, base_dir: Path | None = None) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping of sections")
    bad = sorted(set(data) - SECTIONS)
    if bad:
        raise ConfigError(f"unknown configuration sections {bad}")
    kw = {}
    if "seed" in data:
        kw["seed"] = int(data["seed"])
    if "workers" in data:
        kw["workers"] = int(data["workers"])
    if "fault_threshold" in data:
        kw["fault_threshold"] = float(data["fault_threshold"])
    geo = dict(data.get("geometry") or {})
    if set(geo) - {"tier"}:
        raise ConfigError(f"section 'geometry': unknown keys {sorted(set(geo) - {'tier'})}")
    if "tier" in geo:
        kw["tier"] = geo["tier"]
    if "pto" in data:
        kw["pto"] = {k: float(v) for k, v in (data["pto"] or {}).items()}
    if "sim" in data:
        kw["sim"] = _build(SimConfig, data["sim"] or {}, "sim")
    lay = dict(data.get("layout") or {})
    if set(lay) - {"preset"}:
        raise ConfigError(f"section 'layout': unknown keys {sorted(set(lay) - {'preset'})}")
    if "preset" in lay:
        kw["layout"] = lay["preset"]
    if "sea" in data:
        kw["sea"] = _build(SeaConfig, data["sea"] or {}, "sea")
    agent = dict(data.get("agent") or {})
    if set(agent) - {"hidden", "init_log_std"}:
        raise ConfigError(f"section 'agent': unknown keys {sorted(set(agent) - {'hidden', 'init_log_std'})}")
    if "hidden" in agent:
        kw["hidden"] = tuple(int(h) for h in agent["hidden"])
    if "init_log_std" in agent:
        kw["init_log_std"] = float(agent["init_log_std"])
    if "a3c" in data:
        kw["a3c"] = _build(A3cConfig, data["a3c"] or {}, "a3c")
    if "train_eval" in data:
        kw["train_eval"] = _build(EvalProtocol, {**_default_eval().to_dict(), **(data["train_eval"] or {})},
                                  "train_eval")
    if "protocol" in data:
        kw["protocol"] = _build(EvalProtocol, data["protocol"] or {}, "protocol")
    if data.get("schedule"):
        p = Path(data["schedule"])
        if not p.is_absolute() and base_dir is not None:
            p = base_dir / p
        kw["schedule_path"] = p
    return RunConfig(**kw)


def load_config(path=None) -> RunConfig:
    """Read a config file; ``None`` gives the packaged desk defaults."""
    path = Path(path) if path is not None else packaged("desk.yaml")
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    cfg = config_from_dict(data, path.parent)
    cfg.source = path
    return cfg


def schedule_text(schedule: TrainingSchedule) -> str:
    return yaml.safe_dump(schedule.to_dict(), sort_keys=False)


__all__ = ["RunConfig", "config_from_dict", "load_config", "packaged", "schedule_from_dict", "schedule_text"]
