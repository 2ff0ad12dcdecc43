"""Command-line entry point: ``wecmarl <command> [options]``.

Every command writes only inside its output directory (``--out``, or the
``WECMARL_OUTPUT_ROOT`` environment variable, or ``./wecmarl-out``).
Exit codes: 0 success, 1 invalid input or configuration, 2 runtime fault.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_INVALID, EXIT_FAULT = 0, 1, 2
ENV_OUTPUT_ROOT = "WECMARL_OUTPUT_ROOT"

log = logging.getLogger("wecmarl")


class OutputError(ValueError):
    """A requested output path lies outside the output directory."""


def output_dir(args) -> Path:
    root = args.out or os.environ.get(ENV_OUTPUT_ROOT) or "wecmarl-out"
    return Path(root).resolve()


def inside(root: Path, *parts) -> Path:
    p = (root / Path(*parts)).resolve()
    if root != p and root not in p.parents:
        raise OutputError(f"{p} is outside the output directory {root}")
    return p


def _floats(text: str) -> tuple:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


# --- commands ------------------------------------------------------------------------------

def cmd_generate_waves(args) -> int:
    from .waves import WaveSpectrumParams, synthesize_episode

    params = WaveSpectrumParams(args.hs, args.tp, args.gamma, args.components)  # validates before any write
    if args.count < 1 or not (math.isfinite(args.duration) and args.duration > 0):
        raise ValueError("count must be >= 1 and duration > 0")
    out = inside(output_dir(args), "waves")
    out.mkdir(parents=True, exist_ok=True)
    seeds = np.random.SeedSequence(args.seed).generate_state(args.count, dtype=np.uint32)
    hs = []
    for i, s in enumerate(seeds):
        ep = synthesize_episode(params, int(s), args.duration)
        ep.write_csv(out / f"episode_{i:04d}.csv")
        hs.append(ep.empirical_hs())
    mean = float(np.mean(hs))
    print(f"wrote {args.count} episodes to {out}")
    print(f"empirical Hs {mean:.4f} m (target {args.hs:.4f} m, {100 * (mean / args.hs - 1):+.2f}%)")
    return EXIT_OK


def _run_config(args):
    from .config import load_config

    cfg = load_config(args.config)
    over = {}
    if getattr(args, "seed", None) is not None:
        over["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        over["workers"] = args.workers
    if getattr(args, "tier", None):
        over["tier"] = args.tier
    if getattr(args, "layout", None):
        over["layout"] = args.layout
    if getattr(args, "schedule", None):
        over["schedule_path"] = Path(args.schedule)
    return replace(cfg, **over) if over else cfg


def cmd_train(args) -> int:
    from .config import schedule_text
    from .marl.trainer import run_schedule, validate_schedule

    cfg = _run_config(args)
    sched = cfg.schedule()
    if args.scale != 1.0:
        sched = sched.scaled(args.scale)
    validate_schedule(sched)
    tcfg = cfg.train_config()
    if args.dry_run:
        print(sched.describe())
        print(schedule_text(sched), end="")
        print(json.dumps(tcfg.to_dict(), indent=2, sort_keys=True))
        return EXIT_OK
    out = inside(output_dir(args), "train")
    rep = run_schedule(sched, tcfg, out, resume=args.resume)
    for s in rep.stages:
        best = "" if s.overall_best is None else f"{s.overall_best:.1f}"
        print(f"{s.index:2d} {s.name:<18} steps={s.steps:<8d} stage_best={s.best_score:.1f} W  "
              f"overall_best={best} W  stop={s.stopped}")
    print(f"best controller: {rep.best_dir}")
    return EXIT_OK


def _controller(spec: str, cfg):
    """``sd``, ``zero`` or a directory of agent checkpoints."""
    from .baseline import SpringDamperController
    from .marl.controller import AgentAssignment, compose_controller
    from .marl.trainer import load_agents
    from .wec.observation import ObservationLayout

    layout = ObservationLayout.preset(cfg.layout)
    if spec == "sd":
        return SpringDamperController(), {}
    if spec == "zero":
        return (lambda view: np.zeros(3)), {}
    agents = load_agents(spec)
    groups = tuple(agents) if "single" not in agents else ("single",)
    from .rl.checkpoint import file_hash

    hashes = {g: file_hash(Path(spec) / f"{g}.ckpt") for g in agents}
    if any(p.spec.d_in != layout.dim for p in agents.values()):
        dims = {g: p.spec.d_in for g, p in agents.items()}
        raise ValueError(f"checkpoint input widths {dims} do not match layout {layout.name!r} (dim {layout.dim})")
    order = ("front", "back") if set(groups) == {"front", "back"} else groups
    return compose_controller(AgentAssignment(order), agents, layout=layout), hashes


def _protocol(args, cfg):
    p = cfg.protocol
    over = {}
    if args.episodes is not None:
        over["episodes"] = args.episodes
    if args.periods is not None:
        over["periods"] = args.periods
    if args.duration is not None:
        over["duration"] = args.duration
    if getattr(args, "seed", None) is not None:
        over["seed_base"] = args.seed
    return replace(p, **over) if over else p


def _eval_env(cfg):
    return cfg.train_config().build_env(0)


def cmd_evaluate(args) -> int:
    from .evaluation import evaluate, write_manifest

    cfg = _run_config(args)
    proto = _protocol(args, cfg)
    ctrl, hashes = _controller(args.controller, cfg)
    out = inside(output_dir(args), "eval")
    out.mkdir(parents=True, exist_ok=True)
    res = evaluate(ctrl, proto, _eval_env(cfg), args.controller)
    res.write_csv(out / "evaluation.csv")
    write_manifest(out / "manifest.json", proto, controller=args.controller, checkpoint_hashes=hashes,
                   tier=cfg.tier, layout=cfg.layout, excluded=res.excluded)
    for p in res.periods:
        print(f"T={p.period:5.1f} s  P={p.mean_power / 1e3:9.3f} kW  (se {p.stderr / 1e3:.3f})  "
              f"legs {np.round(p.leg_power / 1e3, 3).tolist()}  excluded {p.excluded}")
    return EXIT_OK


def cmd_gain_table(args) -> int:
    from .evaluation import evaluate, gain_table, write_manifest

    cfg = _run_config(args)
    proto = _protocol(args, cfg)
    ctrl, h1 = _controller(args.controller, cfg)
    base, h2 = _controller(args.baseline, cfg)
    out = inside(output_dir(args), "gain")
    out.mkdir(parents=True, exist_ok=True)
    env = _eval_env(cfg)
    name = args.name or Path(args.controller).name
    table = gain_table(evaluate(ctrl, proto, env, name), evaluate(base, proto, env, args.baseline), name)
    (out / "gain_table.csv").write_text(table.to_csv())
    if args.plot_data:
        (out / "plot_data.csv").write_text(table.plot_data())
    write_manifest(out / "manifest.json", proto, controller=args.controller, baseline=args.baseline,
                   checkpoint_hashes={**h1, **{f"baseline/{k}": v for k, v in h2.items()}})
    print(table.to_csv(), end="")
    return EXIT_OK


def cmd_ablate_states(args) -> int:
    from .baseline import SpringDamperController
    from .evaluation import ablation_csv, evaluate, gain_table, write_manifest
    from .marl.controller import AgentAssignment, compose_controller
    from .marl.trainer import run_schedule
    from .wec.observation import ObservationLayout

    cfg = _run_config(args)
    proto = _protocol(args, cfg)
    sched = cfg.schedule()
    if args.scale != 1.0:
        sched = sched.scaled(args.scale)
    out = inside(output_dir(args), "ablation")
    out.mkdir(parents=True, exist_ok=True)
    base = None
    tables = {}
    for name in args.layouts.split(","):
        c = replace(cfg, layout=name.strip())
        layout = ObservationLayout.preset(c.layout)
        env = _eval_env(c)
        if base is None:
            base = evaluate(SpringDamperController(), proto, env, "sd")
        rep = run_schedule(sched, c.train_config(), inside(out, f"train_{layout.name}"))
        from .marl.trainer import load_agents

        agents = load_agents(rep.best_dir)
        ctrl = compose_controller(AgentAssignment(sched.groups), agents, layout=layout)
        tables[layout.name] = gain_table(evaluate(ctrl, proto, env, layout.name), base, layout.name)
    text = ablation_csv(tables)
    (out / "state_ablation.csv").write_text(text)
    write_manifest(out / "manifest.json", proto, layouts=list(tables), schedule=sched.to_dict())
    print(text, end="")
    return EXIT_OK


def cmd_hypersearch(args) -> int:
    from .search import load_space, run_search, synthetic_objective

    import yaml

    out = inside(output_dir(args), "search")
    out.mkdir(parents=True, exist_ok=True)
    space_arg = args.space
    if Path(space_arg).suffix in (".yaml", ".yml"):
        if not Path(space_arg).exists():
            raise ValueError(f"search space file not found: {space_arg}")
        space_arg = yaml.safe_load(Path(space_arg).read_text())
    space = load_space(space_arg)
    if args.objective == "synthetic":
        objective = synthetic_objective
    else:
        objective = _training_objective(args, space, out)
    res = run_search(space, objective, args.budget, args.strategy, args.seed or 0, out / "history.csv",
                     resume=args.resume)
    failed = sum(t.status == "failed" for t in res.trials)
    if res.best is None:
        print(f"no successful trials ({failed} failed)")
        return EXIT_FAULT
    print(f"best trial {res.best.id}: {res.best.point} objective {res.best.objective:.6g} ({failed} failed)")
    return EXIT_OK


def _training_objective(args, space, out: Path):
    """Train a controller at each point (desk budget) and score it on the held-out protocol."""
    from .marl.trainer import run_schedule

    cfg = _run_config(args)
    sched = cfg.schedule().scaled(args.scale)

    def objective(point: dict, seed: int) -> float:
        tcfg = cfg.train_config()
        a3c = tcfg.a3c
        if "lr" in point:
            a3c = replace(a3c, lr=point["lr"])
        if "gamma" in point:
            a3c = replace(a3c, gamma=point["gamma"])
        eta = dict(sched.eta)
        if "eta_front" in point:
            eta["front"] = point["eta_front"]
        if "eta_back" in point:
            eta["back"] = point["eta_back"]
        s = replace(sched, eta=eta)
        tcfg = replace(tcfg, a3c=a3c)  # common evaluation episodes across trials
        rep = run_schedule(s, tcfg, inside(out, f"trial_{seed}"))
        if rep.overall_best is None:
            raise RuntimeError("schedule produced no fully learned controller")
        return rep.overall_best

    return objective


def cmd_check(args) -> int:
    from .checks import CHECKS, run_checks

    names = args.only.split(",") if args.only else list(CHECKS)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise ValueError(f"unknown checks {unknown}; choose from {sorted(CHECKS)}")
    results = run_checks(names, dt_sim=args.dt_sim)
    if args.json:
        print(json.dumps({"passed": all(r.passed for r in results), "checks": [r.to_dict() for r in results]},
                         indent=2))
    else:
        for r in results:
            print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_INVALID


# --- parser --------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wecmarl", description="Multi-agent A3C control of a three-tether WEC.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        p.add_argument("--out", help=f"output directory (default ${ENV_OUTPUT_ROOT} or ./wecmarl-out)")
        if config:
            p.add_argument("--config", help="YAML run configuration (default: packaged desk config)")
            p.add_argument("--seed", type=int)
            p.add_argument("--tier", choices=("coupled", "decoupled-heave"))
            p.add_argument("--layout", choices=("step1", "step2", "step3", "step4", "full"))

    def proto(p):
        p.add_argument("--episodes", type=int)
        p.add_argument("--periods", type=_floats, help="comma-separated wave periods (s)")
        p.add_argument("--duration", type=float)

    p = sub.add_parser("generate-waves", help="write JONSWAP wave episodes as CSV")
    common(p, config=False)
    p.add_argument("--hs", type=float, default=2.0)
    p.add_argument("--tp", type=float, default=10.0)
    p.add_argument("--gamma", type=float, default=3.3)
    p.add_argument("--components", type=int, default=256)
    p.add_argument("--duration", type=float, default=200.0)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_generate_waves)

    p = sub.add_parser("train", help="run a training schedule")
    common(p)
    p.add_argument("--schedule", help="schedule YAML (default: packaged canonical schedule)")
    p.add_argument("--workers", type=int)
    p.add_argument("--scale", type=float, default=1.0, help="multiply every stage budget")
    p.add_argument("--dry-run", action="store_true", help="print the resolved schedule and exit")
    p.add_argument("--resume", action="store_true", help="continue after the last completed stage")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a controller over the wave periods")
    common(p)
    proto(p)
    p.add_argument("--controller", required=True, help="sd, zero, or a checkpoint directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gain-table", help="percent power gain of a controller over a baseline")
    common(p)
    proto(p)
    p.add_argument("--controller", required=True)
    p.add_argument("--baseline", default="sd")
    p.add_argument("--name")
    p.add_argument("--plot-data", action="store_true", help="also write (period, gain) series")
    p.set_defaults(func=cmd_gain_table)

    p = sub.add_parser("ablate-states", help="train one controller per observation layout")
    common(p)
    proto(p)
    p.add_argument("--layouts", default="step1,step2,step3,step4")
    p.add_argument("--schedule")
    p.add_argument("--scale", type=float, default=1.0)
    p.set_defaults(func=cmd_ablate_states)

    p = sub.add_parser("hypersearch", help="sequential hyperparameter search")
    common(p)
    p.add_argument("--space", default="lr-gamma", help="lr-gamma, eta, or a YAML file of dimensions")
    p.add_argument("--budget", type=int, default=20)
    p.add_argument("--strategy", choices=("random", "surrogate"), default="surrogate")
    p.add_argument("--objective", choices=("synthetic", "train"), default="synthetic")
    p.add_argument("--schedule")
    p.add_argument("--scale", type=float, default=0.1, help="budget multiplier for training objectives")
    p.add_argument("--resume", action="store_true")
    p.set_defaults(func=cmd_hypersearch)

    p = sub.add_parser("check", help="fast invariant self-checks")
    p.add_argument("--json", action="store_true")
    p.add_argument("--only", help="comma-separated subset of checks")
    p.add_argument("--dt-sim", type=float, help="integrator step for the energy check")
    p.set_defaults(func=cmd_check)
    return ap


def main(argv=None) -> int:
    from .evaluation import ComparisonError
    from .marl.trainer import StageAborted
    from .rl.policy import TrainingFault
    from .wec.dynamics import SimulationFault

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (StageAborted, TrainingFault, SimulationFault) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAULT
    except (ValueError, ComparisonError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAULT


if __name__ == "__main__":
    sys.exit(main())
