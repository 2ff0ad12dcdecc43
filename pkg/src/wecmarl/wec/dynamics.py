"""Rigid-body state, one control-interval step, and energy bookkeeping.

The equations of motion are linear in the pose apart from the tether
kinematics::

    M_total a = G [z, zdot, zddot] - B v - K e + J(e)^T F_pto

Cumulative excitation work, radiated energy and per-leg captured energy
are integrated alongside the state with the same scheme, so the energy
balance residual measures integration error only.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..waves import WaveEpisode
from . import kernels
from .geometry import MIRROR_DOF, MIRROR_LEGS, PtoConfig, SimConfig, WecGeometry


class SimulationFault(RuntimeError):
    """Raised when a step leaves the modelled regime and the caller asked to stop."""


@dataclass
class WecState:
    time: float
    pose: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray
    extension: np.ndarray
    extension_rate: np.ndarray
    extension_accel: np.ndarray
    tension: np.ndarray
    gen_force: np.ndarray
    excitation_work: float = 0.0
    radiated_energy: float = 0.0
    captured_energy: np.ndarray = field(default_factory=lambda: np.zeros(3))
    faults: int = 0

    @property
    def fault_names(self) -> list[str]:
        names = {kernels.FAULT_TENSION: "tension-limit", kernels.FAULT_ROTATION: "large-rotation",
                 kernels.FAULT_GEOMETRY: "degenerate-geometry"}
        return [n for bit, n in names.items() if self.faults & bit]

    def mirrored(self) -> "WecState":
        """Reflection about the x-z plane (sway/roll/yaw negated, back legs swapped)."""
        m, legs = MIRROR_DOF, MIRROR_LEGS
        return replace(
            self,
            pose=self.pose * m, velocity=self.velocity * m, acceleration=self.acceleration * m,
            extension=self.extension[legs], extension_rate=self.extension_rate[legs],
            extension_accel=self.extension_accel[legs], tension=self.tension[legs],
            gen_force=self.gen_force[legs], captured_energy=self.captured_energy[legs],
        )

    def copy(self) -> "WecState":
        return replace(self, **{k: v.copy() for k, v in vars(self).items() if isinstance(v, np.ndarray)})


class WecModel:
    """Geometry + PTO + integrator settings packed for the compiled kernels."""

    def __init__(self, geometry: WecGeometry, pto: PtoConfig, sim: SimConfig | None = None):
        self.geometry = geometry
        self.pto = pto
        self.sim = sim or SimConfig()
        g = geometry
        self._packed = kernels.pack(
            g.inverse_mass, g.radiation_damping, g.hydrostatic_stiffness, g.excitation_gain, g.dof_mask,
            g.anchors, g.attachments, g.preload, pto.spring_stiffness, pto.rest_extension,
            np.full(3, g.pretension), pto.gen_force_max, pto.tension_min, pto.tension_max)
        self.last_mean_gen_force = np.zeros(3)

    def with_pto(self, pto: PtoConfig) -> "WecModel":
        return WecModel(self.geometry, pto, self.sim)

    def equilibrium(self, time: float = 0.0) -> WecState:
        z3 = np.zeros(3)
        g = self.geometry.nominal_lengths.copy()
        f_spring = -self.pto.spring_stiffness * (g - self.pto.rest_extension)
        tension = np.clip(-f_spring, self.pto.tension_min, self.pto.tension_max)
        return WecState(time, np.zeros(6), np.zeros(6), np.zeros(6), g, z3.copy(), z3.copy(),
                        tension, -tension - f_spring)

    def initial_state(self, pose, velocity, time: float = 0.0) -> WecState:
        s = self.equilibrium(time)
        s.pose = np.array(pose, dtype=float)
        s.velocity = np.array(velocity, dtype=float) * self.geometry.dof_mask
        self._refresh(s, np.zeros(3), np.zeros(3))
        return s

    def wave_grid(self, episode: WaveEpisode, t0: float = 0.0, t1: float | None = None) -> np.ndarray:
        """(n, 3) wave samples every dt_sim/2 from ``t0`` to ``t1`` (inclusive)."""
        t1 = episode.duration if t1 is None else t1
        half = 0.5 * self.sim.dt_sim
        n = int(round((t1 - t0) / half)) + 1
        return kernels.wave_grid(2.0 * np.pi * episode.frequencies, episode.amplitudes, episode.phases,
                                 float(t0), half, n)

    def _refresh(self, s: WecState, w, cmd):
        wave = np.tile(np.asarray(w, dtype=float), (1, 1))
        out, _ = kernels.advance(s.pose, s.velocity, wave, 0, 0, self.sim.dt_sim, self.sim.method,
                                 np.asarray(cmd, dtype=float), *self._packed)
        self._unpack_end(s, out)

    @staticmethod
    def _unpack_end(s: WecState, out: np.ndarray):
        k = kernels
        s.acceleration = out[k.OUT_A:k.OUT_A + 6]
        s.extension = out[k.OUT_G:k.OUT_G + 3]
        s.extension_rate = out[k.OUT_GD:k.OUT_GD + 3]
        s.extension_accel = out[k.OUT_GDD:k.OUT_GDD + 3]
        s.tension = out[k.OUT_T:k.OUT_T + 3]
        s.gen_force = out[k.OUT_FGEN:k.OUT_FGEN + 3]

    def advance(self, state: WecState, cmd, wave: np.ndarray, row: int) -> tuple[WecState, np.ndarray]:
        """One control interval using pre-sampled wave rows starting at ``row``."""
        k = kernels
        n_sub = self.sim.substeps
        cmd = np.asarray(cmd, dtype=float).reshape(3)
        if row + 2 * n_sub >= len(wave):
            raise ValueError("wave samples do not cover the control interval")
        out, flags = k.advance(state.pose, state.velocity, wave, row, n_sub, self.sim.dt_sim,
                               self.sim.method, cmd, *self._packed)
        acc = out[k.OUT_ACC:k.OUT_ACC + k.N_ACC]
        energy = acc[k.ACC_CAPT:k.ACC_CAPT + 3].copy()
        nxt = WecState(
            state.time + n_sub * self.sim.dt_sim, out[k.OUT_E:k.OUT_E + 6], out[k.OUT_V:k.OUT_V + 6],
            None, None, None, None, None, None,
            state.excitation_work + acc[k.ACC_EXC], state.radiated_energy + acc[k.ACC_RAD],
            state.captured_energy + energy, state.faults | int(flags))
        self._unpack_end(nxt, out)
        self.last_mean_gen_force = acc[k.ACC_FGEN:k.ACC_FGEN + 3] / (n_sub * self.sim.dt_sim)
        return nxt, energy

    def stored_energy(self, state: WecState) -> float:
        """Kinetic + hydrostatic + PTO spring + pretension potential energy."""
        g = self.geometry
        v, e = state.velocity, state.pose
        stretch = state.extension - self.pto.rest_extension
        pre = g.pretension * np.sum(state.extension - g.nominal_lengths) - g.preload @ e
        return float(0.5 * v @ g.mass_matrix @ v + 0.5 * e @ g.hydrostatic_stiffness @ e
                     + 0.5 * np.sum(self.pto.spring_stiffness * stretch**2) + pre)

    def energy_residual(self, start: WecState, end: WecState) -> tuple[float, float]:
        """(residual, scale) of the balance W_exc = E_capt + E_rad + dE_stored."""
        w = end.excitation_work - start.excitation_work
        capt = float(np.sum(end.captured_energy - start.captured_energy))
        rad = end.radiated_energy - start.radiated_energy
        d_stored = self.stored_energy(end) - self.stored_energy(start)
        scale = abs(w) + abs(capt) + abs(rad) + abs(self.stored_energy(start)) + abs(self.stored_energy(end))
        return w - capt - rad - d_stored, scale


def step(state: WecState, f_gen_cmds, episode: WaveEpisode, sim: SimConfig,
         geometry: WecGeometry, pto: PtoConfig) -> tuple[WecState, np.ndarray]:
    """Advance one control interval; returns the next state and per-leg captured energy (J)."""
    if state.time + sim.dt_control > episode.duration + 1e-9:
        raise ValueError(f"step past episode end ({state.time} + {sim.dt_control} > {episode.duration})")
    model = WecModel(geometry, pto, sim)
    wave = model.wave_grid(episode, state.time, state.time + sim.dt_control)
    return model.advance(state, f_gen_cmds, wave, 0)
