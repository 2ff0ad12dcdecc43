"""Long-running desk experiments: the impedance-matching oracle and the directional MARL run.

Both return plain result objects so tests and the CLI can print them.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .baseline import SpringDamperController, max_absorbed_power
from .evaluation import EvalProtocol, GainTable, evaluate, gain_table
from .marl.controller import AgentAssignment, MultiAgentEnv, compose_controller
from .marl.schedule import TrainingSchedule
from .marl.trainer import TrainConfig, load_agents, run_schedule
from .rl import policy as pol
from .rl.a3c import GlobalStore, StepBudget, Worker
from .wec.env import SeaConfig, WecEnv, run_episode
from .wec.geometry import default_geometry
from .wec.observation import ObservationLayout


@dataclass
class ImpedanceResult:
    seed: int
    p_max: float
    sd_ratio: float
    best_ratio: float
    best_step: int
    steps: int
    history: list = field(default_factory=list)  # (step, ratio)

    @property
    def passed(self) -> bool:
        return self.best_ratio >= 0.8


def monochromatic_power(controller, period: float = 10.0, height: float = 2.0, duration: float = 200.0,
                        warmup: float = 20.0, env: WecEnv | None = None) -> float:
    """Mean total power of ``controller`` on the decoupled tier in a regular wave."""
    if env is None:
        env = WecEnv(default_geometry("decoupled-heave"),
                     sea=SeaConfig(periods=(period,), height=height, duration=duration, monochromatic=True))
    return float(run_episode(env, controller, period, 0, warmup).mean_leg_power.sum())


def impedance_trial(config: TrainConfig, seed: int, max_steps: int = 5_000_000, eval_every: int = 50_000,
                    target: float = 0.8, period: float = 10.0, height: float = 2.0, log=None) -> ImpedanceResult:
    """Train one agent on all three legs of the decoupled tier in a regular wave.

    The policy is evaluated (mean action) every ``eval_every`` steps and the
    best ratio to the impedance-matching bound is kept.  Training stops at
    ``max_steps`` or as soon as the best ratio reaches ``target``.
    """
    geom = default_geometry("decoupled-heave")
    layout = ObservationLayout.preset(config.layout)
    sea = SeaConfig(periods=(period,), height=height, duration=200.0, monochromatic=True)
    env = WecEnv(geom, sim=config.sim, layout=layout, sea=sea, seed=seed)
    eval_env = WecEnv(geom, sim=config.sim, layout=layout, sea=sea)
    p_max = max_absorbed_power(geom, height / 2.0, period)
    sd_ratio = monochromatic_power(SpringDamperController(), period, height, env=eval_env) / p_max
    assignment = AgentAssignment(("single",))
    spec = pol.AgentSpec(layout.dim, 3, env.pto.gen_force_max, tuple(config.hidden), config.init_log_std)
    ss = np.random.SeedSequence([int(seed), 3])
    init_ss, work_ss = ss.spawn(2)
    store = GlobalStore(pol.init_agent(spec, np.random.default_rng(init_ss)), config.a3c)
    worker = Worker(MultiAgentEnv(env, assignment, ["single"], None, {"single": 0.0}), {"single": store},
                    config.a3c, np.random.default_rng(work_ss))
    budget = StepBudget(max_steps)
    res = ImpedanceResult(int(seed), p_max, sd_ratio, -np.inf, 0, 0)
    while budget.remaining > 0:
        worker.run(budget, eval_every)
        ctrl = compose_controller(assignment, {"single": store.snapshot()}, layout=layout)
        ratio = monochromatic_power(ctrl, period, height, env=eval_env) / p_max
        res.history.append((budget.used, ratio))
        if ratio > res.best_ratio:
            res.best_ratio, res.best_step = ratio, budget.used
        if log is not None:
            log(f"seed {seed} step {budget.used} ratio {ratio:.3f} best {res.best_ratio:.3f}")
        if res.best_ratio >= target:
            break
    res.steps = budget.used
    return res


@dataclass
class DirectionalResult:
    seed: int
    table: GainTable
    overall_sequence: list
    stages: list

    @property
    def average_gain(self) -> float:
        return self.table.average


def directional_trial(schedule: TrainingSchedule, config: TrainConfig, seed: int, out_dir,
                      protocol: EvalProtocol | None = None) -> DirectionalResult:
    """Train ``schedule`` and compare its best controller with the tuned SD baseline."""
    cfg = replace(config, seed=int(seed))
    out = Path(out_dir)
    rep = run_schedule(schedule, cfg, out)
    protocol = protocol or EvalProtocol(periods=(8.0, 10.0, 12.0, 14.0, 16.0), episodes=20, seed_base=11)
    layout = ObservationLayout.preset(cfg.layout)
    env = cfg.build_env(0, layout)
    agents = load_agents(out / "best")
    ctrl = compose_controller(AgentAssignment(schedule.groups), agents, layout=layout)
    rl = evaluate(ctrl, protocol, env, name="marl")
    sd = evaluate(SpringDamperController(), protocol, env, name="sd")
    table = gain_table(rl, sd, name="marl")
    return DirectionalResult(int(seed), table, rep.overall_sequence, [s.name for s in rep.stages])
