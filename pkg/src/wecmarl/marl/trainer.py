"""Run training schedules: stages of A3C with frozen partners, baselines and checkpoints.

Output tree for one run::

    out/
      progress.json            completed stages (for --resume)
      training_log.csv         one row per evaluation
      schedule.json            resolved schedule and training config
      stage_00_hybrid-front/   <agent>.ckpt, <agent>.state, manifest.json
      best/                    overall best fully learned controller

Scores are the mean total power on a held-out evaluation protocol whose
episode seeds are disjoint from the training streams.  Every stage keeps
its best evaluated parameters (restored at the stage end), and the
overall best only moves up, so its score is non-decreasing over the
schedule.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import shutil
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from ..evaluation import EvalProtocol, EvalResult, evaluate
from ..rl import policy as pol
from ..rl.a3c import A3cConfig, GlobalStore, StepBudget, Worker, run_workers
from ..rl.checkpoint import checkpoint_hash, load_state, save_checkpoint, save_state
from ..wec.env import SeaConfig, WecEnv
from ..wec.geometry import ConfigError, SimConfig, default_geometry, default_pto
from ..wec.observation import ObservationLayout
from .controller import ROLES, AgentAssignment, JointController, MultiAgentEnv
from .schedule import TrainingSchedule, TrainingStage, detect_saturation, relative_gain

log = logging.getLogger(__name__)

LOG_COLUMNS = ["stage_index", "stage", "round", "step", "global_step", "score", "stage_best", "overall_best",
               "episodes", "env_faults", "grad_faults", "updates", "policy_loss", "value_loss", "entropy",
               "log_std_mean"]


class StageAborted(RuntimeError):
    """Too many training faults in a stage."""


def _default_eval() -> EvalProtocol:
    return EvalProtocol(periods=(8.0, 10.0, 12.0, 14.0, 16.0), episodes=2, duration=200.0,
                        seed_base=7_000_001, warmup=20.0)


@dataclass(frozen=True)
class TrainConfig:
    tier: str = "coupled"
    layout: str = "full"
    sim: SimConfig = field(default_factory=SimConfig)
    sea: SeaConfig = field(default_factory=SeaConfig)
    a3c: A3cConfig = field(default_factory=A3cConfig)
    hidden: tuple = (256, 256)
    init_log_std: float = -0.5
    seed: int = 0
    eval: EvalProtocol = field(default_factory=_default_eval)
    fault_threshold: float = 0.25  # fraction of faulted episodes or discarded updates
    min_episodes_for_abort: int = 8
    pto: dict = field(default_factory=dict)  # overrides of the default PTO fields

    def to_dict(self) -> dict:
        d = {"tier": self.tier, "layout": self.layout, "sim": asdict(self.sim), "sea": asdict(self.sea),
             "a3c": self.a3c.to_dict(), "hidden": list(self.hidden), "init_log_std": self.init_log_std,
             "seed": self.seed, "eval": self.eval.to_dict(), "fault_threshold": self.fault_threshold,
             "min_episodes_for_abort": self.min_episodes_for_abort, "pto": dict(sorted(self.pto.items()))}
        d["sea"]["periods"] = list(self.sea.periods)
        return d

    def build_env(self, seed: int = 0, layout: ObservationLayout | None = None) -> WecEnv:
        geom = default_geometry(self.tier)
        return WecEnv(geom, replace(default_pto(geom), **self.pto), self.sim, layout or ObservationLayout.preset(self.layout),
                      self.sea, seed)


@dataclass
class StageReport:
    index: int
    name: str
    kind: str
    round: int
    steps: int
    history: list
    best_score: float
    best_step: int
    candidate_score: float | None  # score of the all-agent controller after the stage
    overall_best: float | None
    hashes: dict
    frozen_before: dict
    frozen_after: dict
    stopped: str
    episodes: int = 0
    env_faults: int = 0
    grad_faults: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ScheduleReport:
    stages: list
    overall_best: float | None
    best_dir: str

    @property
    def overall_sequence(self) -> list:
        return [s.overall_best for s in self.stages]


class TrainingContext:
    """State carried across stages: agents, the overall best and output paths."""

    def __init__(self, schedule: TrainingSchedule, config: TrainConfig, out_dir):
        self.schedule = schedule
        self.config = config
        self.out = Path(out_dir)
        self.assignment = AgentAssignment(schedule.groups)
        self.layout = ObservationLayout.preset(config.layout)
        self.eval_env = config.build_env(0, self.layout)
        self.f_max = self.eval_env.pto.gen_force_max
        self.agents: dict[str, pol.AgentParams] = {}
        self.overall_best: float | None = None
        self.overall_agents: dict | None = None
        self.global_step = 0
        self.best_changed = False
        blob = json.dumps({"schedule": schedule.to_dict(), "config": config.to_dict()}, sort_keys=True)
        self.config_hash = hashlib.sha256(blob.encode()).hexdigest()

    def spec(self, group: str) -> pol.AgentSpec:
        return pol.AgentSpec(self.layout.dim, ROLES[group].d_out, self.f_max, tuple(self.config.hidden),
                             self.config.init_log_std)

    def init_agent(self, group: str) -> pol.AgentParams:
        idx = self.schedule.groups.index(group)
        rng = np.random.default_rng(np.random.SeedSequence([self.config.seed, 1, idx]))
        return pol.init_agent(self.spec(group), rng)

    def controller(self, agents: dict, baseline_groups=()) -> JointController:
        params = {g: p for g, p in agents.items() if g not in baseline_groups}
        baselines = {g: "sd" for g in self.assignment.groups if g not in params}
        return JointController(self.assignment, params, baselines, self.layout)

    def score(self, agents: dict, baseline_groups=()) -> EvalResult:
        return evaluate(self.controller(agents, baseline_groups), self.config.eval, self.eval_env)

    def hash_of(self, group: str, params: pol.AgentParams) -> str:
        return checkpoint_hash(params, group, self.config_hash)


def validate_schedule(schedule: TrainingSchedule, initialized=()) -> None:
    """Every frozen group must have been trained (or loaded) by an earlier stage."""
    ready = set(initialized)
    for s in schedule.stages:
        missing = [g for g in s.frozen if g not in ready]
        if missing:
            raise ConfigError(f"stage {s.name!r} freezes {missing} before they were ever trained")
        ready.update(s.trainable)


def _frozen_copy(p: pol.AgentParams) -> pol.AgentParams:
    c = p.copy()
    c.flat.setflags(write=False)
    return c


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def run_stage(stage: TrainingStage, ctx: TrainingContext, index: int, log_writer=None) -> StageReport:
    """Train ``stage.trainable`` against frozen agents and baselines; keep the best evaluation."""
    cfg = ctx.config
    stage.check(ctx.schedule.groups)
    for g in stage.trainable:
        if g not in ctx.agents:
            ctx.agents[g] = ctx.init_agent(g)
    for g in stage.frozen:
        if g not in ctx.agents:
            raise ConfigError(f"stage {stage.name!r}: frozen agent {g!r} was never initialized")

    frozen = {g: _frozen_copy(ctx.agents[g]) for g in stage.frozen}
    frozen_before = {g: ctx.hash_of(g, p) for g, p in frozen.items()}
    stores = {g: GlobalStore(ctx.agents[g], cfg.a3c) for g in stage.trainable}

    fixed_params = dict(frozen)
    fixed_baselines = {g: "sd" for g in stage.baseline}
    fixed_baselines.update({g: "zero" for g in stage.trainable})  # placeholders, overwritten by actions
    fixed = JointController(ctx.assignment, fixed_params, fixed_baselines, ctx.layout)
    eta = {**ctx.schedule.eta, **(stage.eta or {})}

    seeds = np.random.SeedSequence([cfg.seed, 2, index]).spawn(cfg.a3c.workers)
    workers = []
    for i, ss in enumerate(seeds):
        env_seed, rng_seed = ss.spawn(2)
        env = cfg.build_env(int(env_seed.generate_state(1)[0]), ctx.layout)
        menv = MultiAgentEnv(env, ctx.assignment, stage.trainable, fixed, eta)
        workers.append(Worker(menv, stores, cfg.a3c, np.random.default_rng(rng_seed)))
    budget = StepBudget(stage.steps)

    def current() -> dict:
        agents = dict(frozen)
        agents.update({g: s.snapshot() for g, s in stores.items()})
        return agents

    history: list[float] = []
    best_score, best_step, best_agents = -np.inf, 0, None
    step, stopped = 0, "budget"
    while True:
        agents = current()
        score = ctx.score(agents, stage.baseline).score
        history.append(score)
        if score > best_score:
            best_score, best_step, best_agents = score, step, {g: agents[g] for g in stage.trainable}
        if log_writer is not None:
            _log_row(log_writer, ctx, stage, index, step, score, best_score, workers, agents)
        log.info("stage %s step %d score %.1f W (best %.1f)", stage.name, step, score, best_score)
        _check_faults(stage, workers, cfg)
        if step >= stage.steps or not stage.trainable:
            break
        if stage.stop_on_saturation and detect_saturation(history, ctx.schedule.detector):
            stopped = "saturated"
            break
        n = min(stage.eval_every, stage.steps - step)
        run_workers(workers, budget, n)
        step += n
        ctx.global_step += n

    for g, p in (best_agents or {}).items():
        ctx.agents[g] = p.copy()
    for g, p in frozen.items():
        if ctx.hash_of(g, p) != frozen_before[g] or p.digest() != ctx.agents[g].digest():
            raise RuntimeError(f"frozen agent {g!r} changed during stage {stage.name!r}")

    # candidate for the overall best: a controller with every group learned
    if not stage.baseline:
        candidate = best_score
    elif all(g in ctx.agents for g in ctx.assignment.groups):
        candidate = ctx.score(ctx.agents).score
    else:
        candidate = None
    if candidate is not None and (ctx.overall_best is None or candidate > ctx.overall_best):
        ctx.overall_best = candidate
        ctx.overall_agents = {g: p.copy() for g, p in ctx.agents.items()}
        ctx.best_changed = True

    stage_dir = ctx.out / f"stage_{index:02d}_{stage.name}"
    hashes = {}
    for g, p in ctx.agents.items():
        hashes[g] = save_checkpoint(stage_dir / f"{g}.ckpt", p, g, ctx.config_hash)
        opt = stores[g].optimizer_state() if g in stores and cfg.a3c.optimizer == "adam" else None
        save_state(stage_dir / f"{g}.state", p, g, opt)
    frozen_after = {g: hashes[g] for g in stage.frozen}
    report = StageReport(index, stage.name, stage.kind, stage.round, budget.used, history, float(best_score),
                         best_step, candidate, ctx.overall_best, hashes, frozen_before, frozen_after, stopped,
                         sum(w.stats.episodes for w in workers), sum(w.stats.env_faults for w in workers),
                         sum(w.stats.faults for w in workers))
    if frozen_before != frozen_after:
        raise RuntimeError(f"frozen checkpoint hashes changed during stage {stage.name!r}")
    manifest = {"stage": stage.to_dict(), "seed": cfg.seed, "stage_seed_entropy": [cfg.seed, 2, index],
                "eval_protocol": cfg.eval.to_dict(), "config_hash": ctx.config_hash, **report.to_dict()}
    (stage_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return report


def _log_row(writer, ctx, stage, index, step, score, best, workers, agents):
    terms = [t for w in workers for t in w.stats.last_terms.values()]
    mean = (lambda xs: repr(float(np.mean(xs))) if xs else "")
    log_std = [float(np.mean(agents[g].log_std)) for g in stage.trainable]
    writer.writerow([index, stage.name, stage.round, step, ctx.global_step, _fmt(score), _fmt(best),
                     _fmt(ctx.overall_best), sum(w.stats.episodes for w in workers),
                     sum(w.stats.env_faults for w in workers), sum(w.stats.faults for w in workers),
                     sum(w.stats.updates for w in workers), mean([t.policy for t in terms]),
                     mean([t.value for t in terms]), mean([t.entropy for t in terms]), mean(log_std)])


def _check_faults(stage, workers, cfg: TrainConfig):
    episodes = sum(w.stats.episodes for w in workers)
    env_faults = sum(w.stats.env_faults for w in workers)
    updates = sum(w.stats.updates for w in workers)
    grad_faults = sum(w.stats.faults for w in workers)
    if episodes >= cfg.min_episodes_for_abort and env_faults > cfg.fault_threshold * episodes:
        raise StageAborted(f"stage {stage.name!r}: {env_faults} of {episodes} training episodes ended in "
                           f"simulator faults (threshold {cfg.fault_threshold:.0%})")
    total = updates + grad_faults
    if total >= 10 and grad_faults > cfg.fault_threshold * total:
        raise StageAborted(f"stage {stage.name!r}: {grad_faults} of {total} updates discarded for "
                           f"non-finite gradients (threshold {cfg.fault_threshold:.0%})")


def _save_best(ctx: TrainingContext) -> None:
    best = ctx.out / "best"
    if best.exists():
        shutil.rmtree(best)
    if ctx.overall_agents is None:
        return
    for g, p in ctx.overall_agents.items():
        save_checkpoint(best / f"{g}.ckpt", p, g, ctx.config_hash)
    (best / "score.json").write_text(json.dumps({"score": ctx.overall_best}, sort_keys=True) + "\n")


def run_schedule(schedule: TrainingSchedule, config: TrainConfig, out_dir, resume: bool = False,
                 initial_agents: dict | None = None) -> ScheduleReport:
    """Run every stage in order, honouring ping-pong early stopping; resumable per stage."""
    ctx = TrainingContext(schedule, config, out_dir)
    validate_schedule(schedule, initial_agents or {})
    ctx.out.mkdir(parents=True, exist_ok=True)
    progress_path = ctx.out / "progress.json"
    log_path = ctx.out / "training_log.csv"
    reports: list[StageReport] = []
    if initial_agents:
        ctx.agents.update({g: p.copy() for g, p in initial_agents.items()})

    if resume and progress_path.exists():
        prog = json.loads(progress_path.read_text())
        if prog["config_hash"] != ctx.config_hash:
            raise ConfigError("cannot resume: schedule or training configuration changed")
        reports = [StageReport(**r) for r in prog["stages"]]
        if reports:
            last = reports[-1]
            stage_dir = ctx.out / f"stage_{last.index:02d}_{last.name}"
            for g in last.hashes:
                ctx.agents[g], _ = load_state(stage_dir / f"{g}.state")
            ctx.overall_best = last.overall_best
            ctx.global_step = int(prog["global_step"])
            if (ctx.out / "best").exists():
                from ..rl.checkpoint import load_checkpoint
                ctx.overall_agents = {p.stem: load_checkpoint(p)[0] for p in sorted((ctx.out / "best").glob("*.ckpt"))}
        # drop rows of a stage that was interrupted
        keep = {str(r.index) for r in reports}
        rows = list(csv.reader(log_path.open(newline=""))) if log_path.exists() else [LOG_COLUMNS]
        log_file = open(log_path, "w", newline="")
        writer = csv.writer(log_file, lineterminator="\n")
        writer.writerows([rows[0]] + [r for r in rows[1:] if r and r[0] in keep])
    else:
        for p in [*ctx.out.glob("stage_*"), ctx.out / "best"]:
            if p.is_dir():
                shutil.rmtree(p)
        log_file = open(log_path, "w", newline="")
        writer = csv.writer(log_file, lineterminator="\n")
        writer.writerow(LOG_COLUMNS)
        (ctx.out / "schedule.json").write_text(json.dumps(
            {"schedule": schedule.to_dict(), "config": config.to_dict(), "config_hash": ctx.config_hash},
            indent=2, sort_keys=True) + "\n")

    done = {r.index for r in reports}
    stop_round = _stopped_round(schedule, reports)
    try:
        for i, stage in enumerate(schedule.stages):
            if i in done:
                continue
            if stage.round and stop_round is not None and stage.round > stop_round:
                log.info("ping-pong stopped after round %d; skipping %s", stop_round, stage.name)
                continue
            ctx.best_changed = False
            report = run_stage(stage, ctx, i, writer)
            log_file.flush()
            reports.append(report)
            if ctx.best_changed:
                _save_best(ctx)
            progress_path.write_text(json.dumps(
                {"config_hash": ctx.config_hash, "global_step": ctx.global_step,
                 "stages": [r.to_dict() for r in reports]}, indent=2, sort_keys=True) + "\n")
            stop_round = _stopped_round(schedule, reports)
    finally:
        log_file.close()
    return ScheduleReport(reports, ctx.overall_best, str(ctx.out / "best"))


def _stopped_round(schedule: TrainingSchedule, reports: list) -> int | None:
    """Last ping-pong round to run, once a complete round failed to improve the overall best."""
    eps = schedule.detector.epsilon
    rounds = sorted({s.round for s in schedule.stages if s.round})
    by_index = {r.index: r for r in reports}
    for r in rounds:
        if r < schedule.min_rounds:
            continue
        idx = [i for i, s in enumerate(schedule.stages) if s.round == r]
        if not all(i in by_index for i in idx):
            return None
        before = [by_index[j].overall_best for j in by_index if j < idx[0]]
        ref = before[-1] if before and before[-1] is not None else None
        after = by_index[idx[-1]].overall_best
        if ref is None or after is None:
            continue
        if relative_gain(after, ref) < eps:
            return r
    return None


def load_agents(directory) -> dict:
    """Agents from a stage or best directory (fp32 checkpoints)."""
    from ..rl.checkpoint import CheckpointError, load_checkpoint

    directory = Path(directory)
    if not directory.is_dir():
        raise CheckpointError(f"checkpoint directory not found: {directory}")
    agents = {p.stem: load_checkpoint(p)[0] for p in sorted(directory.glob("*.ckpt"))}
    if not agents:
        raise CheckpointError(f"no checkpoints in {directory}")
    return agents


def train_single(config: TrainConfig, steps: int, eval_every: int, out_dir) -> ScheduleReport:
    """One agent driving all three legs, trained for ``steps`` control steps."""
    stage = TrainingStage("align", ("single",), steps=steps, eval_every=eval_every, name="single")
    sched = TrainingSchedule([stage], ("single",), eta={"single": 0.0}, name="single")
    return run_schedule(sched, config, out_dir)


def with_seed(config: TrainConfig, seed: int) -> TrainConfig:
    return replace(config, seed=int(seed))
