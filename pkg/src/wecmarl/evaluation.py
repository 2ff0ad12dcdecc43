"""Paired-seed evaluation of composed controllers and power-gain tables.

Every controller evaluated under the same :class:`EvalProtocol` sees the
same wave episodes, so differences between two results reflect the
controllers only.  Episodes ending in a simulator fault are excluded from
the averages and counted.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .wec.env import SeaConfig, WecEnv, run_episode, TERMINAL_FAULTS
from .wec.geometry import ConfigError

log = logging.getLogger(__name__)


class ComparisonError(ValueError):
    """Results produced under different protocols cannot be compared."""


@dataclass(frozen=True)
class EvalProtocol:
    periods: tuple = tuple(float(p) for p in range(8, 17))
    height: float = 2.0
    episodes: int = 20
    duration: float = 200.0
    seed_base: int = 0
    warmup: float = 20.0
    monochromatic: bool = False
    gamma: float = 3.3
    n_components: int = 256

    def __post_init__(self):
        object.__setattr__(self, "periods", tuple(float(p) for p in np.atleast_1d(self.periods)))
        if not self.periods:
            raise ConfigError("protocol needs at least one wave period")
        if int(self.episodes) < 1:
            raise ConfigError("episodes per period must be >= 1")
        if not (self.height > 0 and self.duration > 0 and 0 <= self.warmup < self.duration):
            raise ConfigError("height and duration must be > 0 and 0 <= warmup < duration")

    def seeds(self, period: float) -> list[int]:
        """Episode seeds for one period; they depend only on the protocol."""
        ss = np.random.SeedSequence([int(self.seed_base), int(round(period * 1000))])
        return [int(s) for s in ss.generate_state(int(self.episodes), dtype=np.uint32)]

    def sea(self) -> SeaConfig:
        return SeaConfig(self.periods, self.height, self.duration, self.gamma, self.n_components, self.monochromatic)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["periods"] = list(self.periods)
        return d


@dataclass
class PeriodResult:
    period: float
    mean_power: float  # W, total over legs
    stderr: float
    leg_power: np.ndarray
    leg_stderr: np.ndarray
    episodes: int
    excluded: int


@dataclass
class EvalResult:
    protocol: EvalProtocol
    periods: list
    name: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def score(self) -> float:
        """Arithmetic mean over periods of the total mean power."""
        vals = [p.mean_power for p in self.periods]
        return math.fsum(vals) / len(vals)

    @property
    def excluded(self) -> int:
        return sum(p.excluded for p in self.periods)

    def power(self) -> np.ndarray:
        return np.array([p.mean_power for p in self.periods])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["period", "mean_power", "stderr", "power_leg0", "power_leg1", "power_leg2",
                    "stderr_leg0", "stderr_leg1", "stderr_leg2", "episodes", "excluded"])
        for p in self.periods:
            w.writerow([_f(p.period), _f(p.mean_power), _f(p.stderr), *map(_f, p.leg_power), *map(_f, p.leg_stderr),
                        p.episodes, p.excluded])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv())


def _f(x) -> str:
    return repr(float(x))


def _mean_se(values: list[float]) -> tuple[float, float]:
    n = len(values)
    if n == 0:
        return float("nan"), float("nan")
    m = math.fsum(values) / n
    if n == 1:
        return m, 0.0
    var = math.fsum((v - m) ** 2 for v in values) / (n - 1)
    return m, math.sqrt(var / n)


def evaluate(controller, protocol: EvalProtocol, env: WecEnv | None = None, name: str = "") -> EvalResult:
    """Per-period mean power (total and per leg) with standard errors.

    ``env`` supplies geometry, PTO, integrator and observation layout; its
    sea configuration is replaced by the protocol's.
    """
    if env is None:
        env = WecEnv(sea=protocol.sea())
    else:
        env = WecEnv(env.geometry, env.pto, env.sim, env.layout, protocol.sea())
    results = []
    for period in protocol.periods:
        per_leg = []
        excluded = 0
        for seed in sorted(protocol.seeds(period)):
            stats = run_episode(env, controller, period, seed, protocol.warmup)
            if stats.faults & TERMINAL_FAULTS:
                excluded += 1
                log.warning("evaluation episode (period %s, seed %d) ended in a fault; excluded", period, seed)
                continue
            per_leg.append(stats.mean_leg_power)
        legs = [_mean_se([float(e[k]) for e in per_leg]) for k in range(3)]
        leg_mean = np.array([m for m, _ in legs])
        leg_se = np.array([s for _, s in legs])
        _, se = _mean_se([float(e.sum()) for e in per_leg])
        # total is the sum of the per-leg means, so the two always agree
        results.append(PeriodResult(period, float(leg_mean.sum()), se, leg_mean, leg_se, len(per_leg), excluded))
    return EvalResult(protocol, results, name)


@dataclass
class GainTable:
    periods: list
    controller: list
    baseline: list
    gain: list  # percent
    name: str = "controller"

    @property
    def average(self) -> float:
        """Arithmetic mean of the per-period gains."""
        return math.fsum(self.gain) / len(self.gain)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["period", "power_controller", "power_baseline", "gain_percent"])
        for p, c, b, g in zip(self.periods, self.controller, self.baseline, self.gain):
            w.writerow([_f(p), _f(c), _f(b), _f(g)])
        w.writerow(["Avg", "", "", _f(self.average)])
        return buf.getvalue()

    def plot_data(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["controller", "period", "gain_percent"])
        for p, g in zip(self.periods, self.gain):
            w.writerow([self.name, _f(p), _f(g)])
        return buf.getvalue()


def percent_gain(p_ctrl: float, p_base: float) -> float:
    if p_base == 0:
        return 0.0 if p_ctrl == 0 else math.copysign(math.inf, p_ctrl)
    return 100.0 * (p_ctrl - p_base) / p_base


def gain_table(controller: EvalResult, baseline: EvalResult, name: str | None = None) -> GainTable:
    if controller.protocol != baseline.protocol:
        raise ComparisonError("controller and baseline were evaluated under different protocols")
    pc, pb = controller.power(), baseline.power()
    return GainTable(list(controller.protocol.periods), pc.tolist(), pb.tolist(),
                     [percent_gain(c, b) for c, b in zip(pc, pb)], name or controller.name or "controller")


def ablation_csv(tables: dict) -> str:
    """Per-period gains with one column per layout and an Avg row."""
    names = list(tables)
    if not names:
        raise ConfigError("no ablation results")
    periods = tables[names[0]].periods
    for n in names:
        if tables[n].periods != periods:
            raise ComparisonError("ablation tables cover different periods")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["period", *names])
    for i, p in enumerate(periods):
        w.writerow([_f(p), *(_f(tables[n].gain[i]) for n in names)])
    w.writerow(["Avg", *(_f(tables[n].average) for n in names)])
    return buf.getvalue()


def state_design_ablation(layouts, protocol: EvalProtocol, train, baseline: EvalResult | None = None,
                          env_factory=None) -> tuple[dict, str]:
    """Train one fresh controller per observation layout and tabulate its gain over SD.

    ``train(layout) -> controller`` must use identical budgets and seeds for
    every layout; ``env_factory(layout)`` builds the evaluation environment.
    """
    from .baseline import SpringDamperController

    tables = {}
    for layout in layouts:
        env = env_factory(layout) if env_factory else WecEnv(layout=layout)
        if baseline is None:
            baseline = evaluate(SpringDamperController(), protocol, env, "sd")
        ctrl = train(layout)
        tables[layout.name] = gain_table(evaluate(ctrl, protocol, env, layout.name), baseline, layout.name)
    return tables, ablation_csv(tables)


def write_manifest(path, protocol: EvalProtocol, **extra) -> None:
    seeds = {_f(p): protocol.seeds(p) for p in protocol.periods}
    data = {"protocol": protocol.to_dict(), "seeds": seeds, **extra}
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
