"""Episode driver around :class:`WecModel` used by training and evaluation.

Each reset draws a sea state (period from the configured list, fresh wave
seed unless given), retunes the PTO springs to that period and samples the
whole episode's wave on the integrator grid once.  Controllers receive an
:class:`ObsView` and return three generator commands.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ..baseline import tune_for_resonance
from ..waves import WaveSpectrumParams, regular_wave, synthesize_episode
from . import kernels
from .dynamics import WecModel, WecState
from .geometry import PtoConfig, SimConfig, WecGeometry, default_geometry, default_pto
from .observation import ObservationLayout, observation
from .pto import electrical_power

TERMINAL_FAULTS = kernels.FAULT_ROTATION | kernels.FAULT_GEOMETRY

TRAJECTORY_COLUMNS = (
    ["t"] + [f"e{i}" for i in range(6)] + [f"de{i}" for i in range(6)] + [f"g{k}" for k in range(3)]
    + [f"dg{k}" for k in range(3)] + [f"T{k}" for k in range(3)] + [f"Fgen{k}" for k in range(3)]
    + [f"P{k}" for k in range(3)]
)


@dataclass(frozen=True)
class SeaConfig:
    """Sea states an environment draws from."""

    periods: tuple = (8.0, 10.0, 12.0, 14.0, 16.0)
    height: float = 2.0
    duration: float = 200.0
    gamma: float = 3.3
    n_components: int = 256
    monochromatic: bool = False

    def __post_init__(self):
        object.__setattr__(self, "periods", tuple(float(p) for p in np.atleast_1d(self.periods)))
        if not self.periods or min(self.periods) <= 0:
            raise ValueError("periods must be a nonempty list of positive values")
        if not (self.height > 0 and self.duration > 0):
            raise ValueError("height and duration must be > 0")

    def episode(self, period: float, seed: int):
        if self.monochromatic:
            return regular_wave(self.height, period, self.duration)
        params = WaveSpectrumParams(self.height, period, self.gamma, self.n_components)
        return synthesize_episode(params, seed, self.duration)


@dataclass
class ObsView:
    """What a controller sees at one control step."""

    state: WecState
    wave: np.ndarray  # (z, dz, ddz) at state.time
    sd_damping: np.ndarray
    vector: np.ndarray
    period: float


@dataclass
class StepResult:
    view: ObsView
    leg_power: np.ndarray  # mean electrical power per leg over the interval, W
    done: bool
    terminal: bool  # ended by a fault rather than the time limit
    new_faults: int = 0


class WecEnv:
    def __init__(self, geometry: WecGeometry | None = None, pto: PtoConfig | None = None,
                 sim: SimConfig | None = None, layout: ObservationLayout | None = None,
                 sea: SeaConfig | None = None, seed: int = 0, record: bool = False):
        self.geometry = geometry or default_geometry()
        self.pto = pto or default_pto(self.geometry)
        self.sim = sim or SimConfig()
        self.layout = layout or ObservationLayout()
        self.sea = sea or SeaConfig()
        self.rng = np.random.default_rng(seed)
        self.record = record
        self.trajectory: list[list[float]] = []
        self._models: dict[float, tuple[WecModel, np.ndarray]] = {}
        self._nominal = self.geometry.nominal_lengths
        self.model = None
        self.state = None

    @property
    def obs_dim(self) -> int:
        return self.layout.dim

    def model_for(self, period: float) -> tuple[WecModel, np.ndarray]:
        """Spring tuned to ``period`` (shared by every controller) plus the matched SD damping."""
        if period not in self._models:
            k_s, c = tune_for_resonance(self.geometry, period)
            self._models[period] = (WecModel(self.geometry, self.pto.with_spring(k_s), self.sim), c)
        return self._models[period]

    def reset(self, period: float | None = None, wave_seed: int | None = None) -> ObsView:
        if period is None:
            period = self.sea.periods[int(self.rng.integers(len(self.sea.periods)))]
        if wave_seed is None:
            wave_seed = int(self.rng.integers(2**31))
        self.period = float(period)
        self.wave_seed = wave_seed
        self.episode = self.sea.episode(self.period, wave_seed)
        self.model, self.sd_damping = self.model_for(self.period)
        self.wave = self.model.wave_grid(self.episode)
        self.n_steps = int(np.floor(self.episode.duration / self.sim.dt_control + 1e-9))
        self.step_index = 0
        self.state = self.model.equilibrium()
        self._rows_per_step = 2 * self.sim.substeps
        self.trajectory = []
        return self._view()

    def _view(self) -> ObsView:
        w = self.wave[self.step_index * self._rows_per_step]
        vec = observation(self.state, w, self.layout, self._nominal)
        return ObsView(self.state, w, self.sd_damping, vec, self.period)

    def step(self, cmd) -> StepResult:
        if self.state is None or self.step_index >= self.n_steps:
            raise RuntimeError("call reset() before stepping past the episode end")
        before = self.state.faults
        self.state, energy = self.model.advance(self.state, cmd, self.wave, self.step_index * self._rows_per_step)
        self.step_index += 1
        power = electrical_power(energy / self.sim.dt_control, self.pto.efficiency)
        new = self.state.faults & ~before
        terminal = bool(self.state.faults & TERMINAL_FAULTS)
        done = terminal or self.step_index >= self.n_steps
        if self.record:
            s = self.state
            self.trajectory.append([s.time, *s.pose, *s.velocity, *s.extension, *s.extension_rate,
                                    *s.tension, *s.gen_force, *power])
        return StepResult(self._view(), power, done, terminal, new)

    def write_trajectory(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRAJECTORY_COLUMNS)
            for row in self.trajectory:
                w.writerow([repr(float(x)) for x in row])


@dataclass
class EpisodeStats:
    energy: np.ndarray = field(default_factory=lambda: np.zeros(3))
    duration: float = 0.0
    faults: int = 0

    @property
    def mean_leg_power(self) -> np.ndarray:
        return self.energy / self.duration if self.duration > 0 else np.zeros(3)


def run_episode(env: WecEnv, controller, period: float, wave_seed: int, warmup: float = 0.0) -> EpisodeStats:
    """Roll ``controller`` for one episode, averaging power after ``warmup`` seconds."""
    view = env.reset(period, wave_seed)
    stats = EpisodeStats()
    dt = env.sim.dt_control
    while True:
        res = env.step(controller(view))
        if res.view.state.time > warmup + 1e-9:
            stats.energy += res.leg_power * dt
            stats.duration += dt
        view = res.view
        if res.done:
            stats.faults = view.state.faults
            return stats
