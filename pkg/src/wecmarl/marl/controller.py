"""Agent-to-leg assignment, composed joint controllers and the training stream env.

Groups of legs are driven by one source each: an RL agent or a baseline.
The standard assignment gives the front leg its own agent and lets one
shared agent drive both back legs, the second through the mirrored
observation.  A ``single`` group drives all three legs from one agent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..rl import policy as pol
from ..rl.a3c import StreamStep
from ..wec.env import ObsView, WecEnv
from ..wec.geometry import ConfigError
from .mirror import leg_view
from .reward import check_eta, shaped_reward

BASELINES = ("sd", "zero")


@dataclass(frozen=True)
class GroupRole:
    legs: tuple
    streams: tuple  # ((legs driven by the stream), leg whose perspective the obs takes)
    d_out: int


ROLES = {
    "front": GroupRole((0,), (((0,), 0),), 1),
    "back": GroupRole((1, 2), (((1,), 1), ((2,), 2)), 1),
    "single": GroupRole((0, 1, 2), (((0, 1, 2), 0),), 3),
}

STANDARD = ("front", "back")
DEFAULT_ETA = {"front": -0.6, "back": 0.8, "single": 0.0}


@dataclass(frozen=True)
class AgentAssignment:
    groups: tuple = STANDARD

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(self.groups))
        unknown = [g for g in self.groups if g not in ROLES]
        if unknown:
            raise ConfigError(f"unknown agent groups {unknown}; choose from {sorted(ROLES)}")
        legs = sorted(k for g in self.groups for k in ROLES[g].legs)
        if legs != [0, 1, 2]:
            raise ConfigError(f"groups {self.groups} must cover each leg exactly once")

    def role(self, group: str) -> GroupRole:
        return ROLES[group]


def group_obs(group: str, obs: np.ndarray, layout) -> np.ndarray:
    """(n_streams, d_in) observations for ``group``."""
    return np.stack([leg_view(obs, layout, view_leg) for _, view_leg in ROLES[group].streams])


def baseline_commands(name: str, view: ObsView, legs) -> np.ndarray:
    legs = list(legs)
    if name == "sd":
        return -view.sd_damping[legs] * view.state.extension_rate[legs]
    if name == "zero":
        return np.zeros(len(legs))
    raise ConfigError(f"unknown baseline {name!r}; choose from {BASELINES}")


def place(cmd: np.ndarray, group: str, actions: np.ndarray) -> None:
    """Write per-stream agent outputs into the leg command vector."""
    for (legs, _), a in zip(ROLES[group].streams, np.atleast_2d(actions)):
        cmd[list(legs)] = a


class JointController:
    """obs view -> three generator commands; RL sources act with their mean action."""

    def __init__(self, assignment: AgentAssignment, params: dict, baselines: dict, layout):
        self.assignment = assignment
        self.params = dict(params)
        self.baselines = dict(baselines)
        self.layout = layout
        for g in assignment.groups:
            if (g in self.params) == (g in self.baselines):
                raise ConfigError(f"group {g!r} must have exactly one source (agent or baseline)")
            if g in self.params:
                p = self.params[g]
                if p.spec.d_in != layout.dim or p.spec.d_out != ROLES[g].d_out:
                    raise ConfigError(f"agent {g!r} shape ({p.spec.d_in}->{p.spec.d_out}) does not fit "
                                      f"layout dim {layout.dim} / {ROLES[g].d_out} outputs")
            elif self.baselines[g] not in BASELINES:
                raise ConfigError(f"unknown baseline {self.baselines[g]!r}")

    def __call__(self, view: ObsView) -> np.ndarray:
        cmd = np.zeros(3)
        for g in self.assignment.groups:
            if g in self.params:
                p = self.params[g]
                mean = pol.policy_mean(p, group_obs(g, view.vector, self.layout))
                place(cmd, g, pol.squash(mean, p.spec.f_max))
            else:
                cmd[list(ROLES[g].legs)] = baseline_commands(self.baselines[g], view, ROLES[g].legs)
        return cmd


def compose_controller(assignment: AgentAssignment, params: dict | None = None,
                       baselines: dict | None = None, layout=None) -> JointController:
    """Resolve every leg group to an agent (deterministic mean action) or a baseline."""
    params = params or {}
    baselines = baselines or {}
    if layout is None:
        from ..wec.observation import ObservationLayout
        layout = ObservationLayout()
    missing = [g for g in assignment.groups if g not in params and g not in baselines]
    if missing:
        raise ConfigError(f"no source for leg groups {missing}")
    return JointController(assignment, params, baselines, layout)


class MultiAgentEnv:
    """Stream environment for A3C workers.

    Trainable groups receive per-stream observations and shaped rewards;
    every other group is driven by ``fixed`` (frozen agents in mean mode or
    baselines), which never feeds into any gradient.
    """

    def __init__(self, env: WecEnv, assignment: AgentAssignment, trainable, fixed: JointController | None,
                 eta: dict | None = None):
        self.env = env
        self.assignment = assignment
        self.trainable = tuple(trainable)
        self.fixed = fixed
        eta = {**DEFAULT_ETA, **(eta or {})}
        self.eta = {g: check_eta(eta[g]) for g in self.trainable}
        for g in self.trainable:
            if g not in assignment.groups:
                raise ConfigError(f"trainable group {g!r} is not in the assignment")
        self.fixed_groups = [g for g in assignment.groups if g not in self.trainable]
        if self.fixed_groups and fixed is None:
            raise ConfigError(f"groups {self.fixed_groups} need a fixed source")
        self.view = None

    def _obs(self) -> dict:
        return {g: group_obs(g, self.view.vector, self.env.layout) for g in self.trainable}

    def reset(self) -> dict:
        self.view = self.env.reset()
        return self._obs()

    def step(self, actions: dict) -> StreamStep:
        cmd = np.zeros(3)
        if self.fixed_groups:
            full = self.fixed(self.view)
            for g in self.fixed_groups:
                legs = list(ROLES[g].legs)
                cmd[legs] = full[legs]
        for g in self.trainable:
            place(cmd, g, actions[g])
        res = self.env.step(cmd)
        self.view = res.view
        power = res.leg_power
        total = float(power.sum())
        rewards = {}
        for g in self.trainable:
            r = []
            for legs, _ in ROLES[g].streams:
                own = float(power[list(legs)].sum())
                r.append(shaped_reward(own, total - own, self.eta[g]))
            rewards[g] = np.array(r)
        info = {"leg_power": power}
        if res.terminal:
            info["fault"] = self.view.state.fault_names
        return StreamStep(self._obs(), rewards, res.done, res.terminal, info)
