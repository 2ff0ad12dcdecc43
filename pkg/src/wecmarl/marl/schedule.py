"""Training stages, saturation detection and schedule files.

Stage kinds:

``hybrid``  one agent trains while the other legs run the spring-damper baseline
``align``   every agent trains together
``skip``    a subset trains while the rest stay frozen (mean action, weights untouched)

A ``ping_pong`` entry in a schedule file expands into alternating skip
stages, one round per (front, back) pair; the runner stops after a round
that does not improve the best evaluation by at least the detector's
relative threshold.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import yaml

from ..wec.geometry import ConfigError
from .controller import ROLES, STANDARD

KINDS = ("hybrid", "align", "skip")


@dataclass(frozen=True)
class SaturationDetector:
    window: int = 5
    epsilon: float = 0.01

    def __post_init__(self):
        if int(self.window) < 2:
            raise ConfigError("saturation window must be >= 2")
        if not self.epsilon >= 0:
            raise ConfigError("saturation epsilon must be >= 0")


def relative_gain(new: float, ref: float) -> float:
    return (new - ref) / max(abs(ref), 1e-12)


def detect_saturation(history, detector: SaturationDetector) -> bool:
    """True iff the best of the last ``window`` evaluations beats the best before it by < epsilon.

    When the history is exactly one window long, its first entry is the reference.
    Shorter histories never count as saturated.
    """
    h = [float(x) for x in history]
    w = detector.window
    if len(h) < w:
        return False
    before = h[:-w] or h[:1]
    return relative_gain(max(h[-w:]), max(before)) < detector.epsilon


@dataclass(frozen=True)
class TrainingStage:
    kind: str
    trainable: tuple
    frozen: tuple = ()
    baseline: tuple = ()  # groups driven by the spring-damper baseline
    steps: int = 100_000
    eval_every: int = 10_000
    stop_on_saturation: bool = False
    eta: dict | None = None  # per-stage override of the team coefficients
    name: str = ""
    round: int = 0  # ping-pong round (0 outside ping-pong)

    def __post_init__(self):
        for f in ("trainable", "frozen", "baseline"):
            v = getattr(self, f)
            object.__setattr__(self, f, (v,) if isinstance(v, str) else tuple(v))
        if self.kind not in KINDS:
            raise ConfigError(f"stage kind must be one of {KINDS}, got {self.kind!r}")
        overlap = set(self.trainable) & set(self.frozen) | set(self.trainable) & set(self.baseline) \
            | set(self.frozen) & set(self.baseline)
        if overlap:
            raise ConfigError(f"groups {sorted(overlap)} appear in more than one role")
        if int(self.steps) < 0 or int(self.eval_every) < 1:
            raise ConfigError("steps must be >= 0 and eval_every >= 1")
        if self.steps % self.eval_every:
            raise ConfigError(f"steps ({self.steps}) must be a multiple of eval_every ({self.eval_every}) "
                              "so stages end on an evaluation")
        if self.kind == "hybrid" and (len(self.trainable) != 1 or not self.baseline):
            raise ConfigError("a hybrid stage trains one agent against the baseline on the other legs")
        if self.kind == "align" and (self.frozen or self.baseline):
            raise ConfigError("an align stage trains every agent")
        if not self.name:
            object.__setattr__(self, "name", f"{self.kind}-{'+'.join(self.trainable) or 'none'}")

    def check(self, groups) -> None:
        """Every group must be trainable, frozen or baseline-driven."""
        roles = set(self.trainable) | set(self.frozen) | set(self.baseline)
        if roles != set(groups):
            raise ConfigError(f"stage {self.name!r}: roles {sorted(roles)} do not match groups {sorted(groups)}")

    def to_dict(self) -> dict:
        d = asdict(self)
        for f in ("trainable", "frozen", "baseline"):
            d[f] = list(d[f])
        return d


def hybrid_init(agent: str, groups=STANDARD, **kw) -> TrainingStage:
    kw.setdefault("baseline", tuple(g for g in groups if g != agent))
    kw["baseline"] = tuple(kw["baseline"])
    kw["frozen"] = tuple(kw.get("frozen", ()))
    return TrainingStage("hybrid", (agent,), **kw)


def align(groups=STANDARD, **kw) -> TrainingStage:
    kw["frozen"] = tuple(kw.get("frozen", ()))
    kw["baseline"] = tuple(kw.get("baseline", ()))
    return TrainingStage("align", tuple(groups), **kw)


def skip(trainable, groups=STANDARD, **kw) -> TrainingStage:
    trainable = (trainable,) if isinstance(trainable, str) else tuple(trainable)
    kw.setdefault("frozen", tuple(g for g in groups if g not in trainable))
    kw["frozen"] = tuple(kw["frozen"])
    kw["baseline"] = tuple(kw.get("baseline", ()))
    return TrainingStage("skip", trainable, **kw)


@dataclass
class TrainingSchedule:
    stages: list
    groups: tuple = STANDARD
    detector: SaturationDetector = field(default_factory=SaturationDetector)
    eta: dict = field(default_factory=lambda: {"front": -0.6, "back": 0.8})
    name: str = "schedule"
    min_rounds: int = 1  # ping-pong rounds always run before early stopping may apply

    def __post_init__(self):
        self.groups = tuple(self.groups)
        if not self.stages:
            raise ConfigError("a schedule needs at least one stage")
        for g in self.groups:
            if g not in ROLES:
                raise ConfigError(f"unknown group {g!r}")
        for s in self.stages:
            s.check(self.groups)

    def describe(self) -> str:
        lines = [f"schedule {self.name!r}: groups {list(self.groups)}, eta {self.eta}, "
                 f"detector W={self.detector.window} eps={self.detector.epsilon}, min ping-pong rounds {self.min_rounds}"]
        for i, s in enumerate(self.stages):
            extra = f" round {s.round}" if s.round else ""
            lines.append(f"  [{i}] {s.name}: trainable={list(s.trainable)} frozen={list(s.frozen)} "
                         f"baseline={list(s.baseline)} steps={s.steps} eval_every={s.eval_every}{extra}")
        return "\n".join(lines)

    def scaled(self, factor: float) -> "TrainingSchedule":
        """Same staging with every budget multiplied by ``factor`` (kept on eval boundaries)."""
        stages = []
        for s in self.stages:
            every = max(1, int(round(s.eval_every * factor)))
            n = max(1, int(round(s.steps / s.eval_every))) * every if s.steps else 0
            stages.append(replace(s, steps=n, eval_every=every))
        return TrainingSchedule(stages, self.groups, self.detector, dict(self.eta), self.name, self.min_rounds)

    def to_dict(self) -> dict:
        return {"name": self.name, "groups": list(self.groups), "eta": dict(self.eta), "min_rounds": self.min_rounds,
                "detector": asdict(self.detector), "stages": [s.to_dict() for s in self.stages]}


def ping_pong_schedule(agents=STANDARD, steps: int = 100_000, detector: SaturationDetector | None = None,
                       rounds: int = 3, start: str = "front", eval_every: int = 10_000,
                       groups=STANDARD) -> list:
    """Alternating skip stages, ``start`` first, for at most ``rounds`` rounds."""
    agents = list(agents)
    if len(agents) < 2:
        raise ConfigError("ping-pong needs at least two agents")
    if start not in agents:
        raise ConfigError(f"start agent {start!r} not among {agents}")
    i = agents.index(start)
    order = agents[i:] + agents[:i]
    stages = []
    for r in range(1, rounds + 1):
        for a in order:
            stages.append(skip(a, groups, steps=steps, eval_every=eval_every, stop_on_saturation=True,
                               round=r, name=f"skip-{a}-r{r}"))
    return stages


def canonical_schedule(hybrid_steps: int = 300_000, align_steps: int = 300_000, skip_steps: int = 300_000,
                       rounds: int = 3, eval_every: int = 50_000) -> TrainingSchedule:
    """HybridInit(front), HybridInit(back), Align, then ping-pong skip rounds."""
    stages = [
        hybrid_init("front", steps=hybrid_steps, eval_every=eval_every),
        hybrid_init("back", steps=hybrid_steps, eval_every=eval_every),
        align(steps=align_steps, eval_every=eval_every),
        *ping_pong_schedule(steps=skip_steps, rounds=rounds, eval_every=eval_every),
    ]
    return TrainingSchedule(stages, name="canonical", min_rounds=min(2, rounds))


def _stage_from_dict(d: dict, groups) -> list:
    d = dict(d)
    kind = d.pop("kind")
    if kind == "ping_pong":
        return ping_pong_schedule(d.pop("agents", list(groups)), int(d.pop("steps")), None,
                                  int(d.pop("rounds", 3)), d.pop("start", "front"),
                                  int(d.pop("eval_every", 10_000)), groups)
    if kind == "hybrid":
        return [hybrid_init(_one(d.pop("trainable")), groups, **d)]
    if kind == "align":
        d.pop("trainable", None)
        return [align(groups, **d)]
    if kind == "skip":
        return [skip(d.pop("trainable"), groups, **d)]
    raise ConfigError(f"unknown stage kind {kind!r}")


def _one(x):
    return x[0] if isinstance(x, (list, tuple)) else x


def schedule_from_dict(d: dict) -> TrainingSchedule:
    d = d.get("schedule", d)
    groups = tuple(d.get("groups", STANDARD))
    stages = []
    for s in d.get("stages", []):
        stages += _stage_from_dict(s, groups)
    det = SaturationDetector(**d.get("detector", {}))
    eta = {"front": -0.6, "back": 0.8}
    eta.update(d.get("eta", {}))
    return TrainingSchedule(stages, groups, det, eta, d.get("name", "schedule"), int(d.get("min_rounds", 1)))


def load_schedule(path) -> TrainingSchedule:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"schedule file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return schedule_from_dict(data)
