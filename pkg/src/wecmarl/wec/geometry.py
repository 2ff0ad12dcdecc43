"""Buoy geometry, PTO and integrator configuration for the three-tether surrogate.

Coordinates: x points along the front leg (and the wave direction), z up,
origin at the buoy centre of gravity at rest.  Pose ``e`` is
(surge, sway, heave, roll, pitch, yaw).  Leg 0 is the front leg; legs 1
and 2 are the back legs, mirror images of each other about the x-z plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from functools import cached_property

import numpy as np

from . import kernels

DOF_NAMES = ("surge", "sway", "heave", "roll", "pitch", "yaw")
HEAVE = 2

# reflection about the x-z plane: sway, roll and yaw flip sign; back legs swap
MIRROR_DOF = np.array([1.0, -1.0, 1.0, -1.0, 1.0, -1.0])
MIRROR_LEGS = np.array([0, 2, 1])

TIERS = ("coupled", "decoupled-heave")


class ConfigError(ValueError):
    """Invalid simulator configuration."""


def _arr(x, shape, name):
    a = np.array(x, dtype=float)
    if a.shape != shape:
        raise ConfigError(f"{name}: expected shape {shape}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ConfigError(f"{name}: non-finite entries")
    return a


def _check_spd(m, name, semi=False):
    if not np.allclose(m, m.T, rtol=1e-10, atol=1e-9 * max(1.0, np.abs(m).max())):
        raise ConfigError(f"{name} must be symmetric")
    eig = np.linalg.eigvalsh(0.5 * (m + m.T))
    if (eig.min() < -1e-9 * max(1.0, abs(eig).max())) if semi else (eig.min() <= 0):
        raise ConfigError(f"{name} must be positive {'semi' if semi else ''}definite")


@dataclass(frozen=True, eq=False)
class WecGeometry:
    mass: float
    inertia: np.ndarray
    submergence: float
    hydrostatic_stiffness: np.ndarray
    added_mass: np.ndarray
    radiation_damping: np.ndarray
    excitation_gain: np.ndarray  # (6, 3) acting on (z, zdot, zddot)
    anchors: np.ndarray  # (3, 3) world frame
    attachments: np.ndarray  # (3, 3) body frame
    pretension: float = 0.0  # static tension per leg from net buoyancy, N
    dof_mask: np.ndarray = field(default_factory=lambda: np.ones(6))
    tier: str = "coupled"

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("inertia", _arr(self.inertia, (3, 3), "inertia"))
        for name in ("hydrostatic_stiffness", "added_mass", "radiation_damping"):
            set_(name, _arr(getattr(self, name), (6, 6), name))
        set_("excitation_gain", _arr(self.excitation_gain, (6, 3), "excitation_gain"))
        set_("anchors", _arr(self.anchors, (3, 3), "anchors"))
        set_("attachments", _arr(self.attachments, (3, 3), "attachments"))
        set_("dof_mask", _arr(self.dof_mask, (6,), "dof_mask"))
        if not self.mass > 0:
            raise ConfigError("mass must be > 0")
        if not (math.isfinite(self.pretension) and self.pretension >= 0):
            raise ConfigError("pretension must be finite and >= 0")
        if self.tier not in TIERS:
            raise ConfigError(f"tier must be one of {TIERS}")
        if not set(np.unique(self.dof_mask)) <= {0.0, 1.0} or self.dof_mask.sum() == 0:
            raise ConfigError("dof_mask must be 0/1 with at least one free DOF")
        _check_spd(self.inertia, "inertia")
        _check_spd(self.added_mass, "added_mass")
        _check_spd(self.radiation_damping, "radiation_damping", semi=True)
        _check_spd(self.hydrostatic_stiffness, "hydrostatic_stiffness", semi=True)
        p = np.diag(MIRROR_DOF)
        for name in ("added_mass", "radiation_damping", "hydrostatic_stiffness"):
            m = getattr(self, name)
            if not np.allclose(p @ m @ p, m, atol=1e-9 * max(1.0, np.abs(m).max())):
                raise ConfigError(f"{name} breaks mirror symmetry about the x-z plane")
        if not np.allclose(p @ self.excitation_gain, self.excitation_gain):
            raise ConfigError("excitation_gain must not drive sway, roll or yaw")
        s = np.array([1.0, -1.0, 1.0])
        for pts, name in ((self.anchors, "anchors"), (self.attachments, "attachments")):
            if not np.allclose(pts[1] * s, pts[2]) or abs(pts[0, 1]) > 1e-12:
                raise ConfigError(f"{name}: back legs must mirror each other, front leg on the x-z plane")
        if np.any(self.nominal_lengths < 1e-9):
            raise ConfigError("attachment coincident with anchor")

    @cached_property
    def mass_matrix(self) -> np.ndarray:
        m = np.zeros((6, 6))
        m[:3, :3] = self.mass * np.eye(3)
        m[3:, 3:] = self.inertia
        return m + self.added_mass

    @cached_property
    def inverse_mass(self) -> np.ndarray:
        """Inverse of the free-free block, embedded in 6x6 (locked DOFs get zero)."""
        free = self.dof_mask > 0
        out = np.zeros((6, 6))
        out[np.ix_(free, free)] = np.linalg.inv(self.mass_matrix[np.ix_(free, free)])
        return out

    @cached_property
    def nominal_lengths(self) -> np.ndarray:
        g, _, _ = kernels.tether_kinematics(np.zeros(6), self.anchors, self.attachments)
        return g

    @cached_property
    def preload(self) -> np.ndarray:
        """Constant net-buoyancy load that balances the pretension at the rest pose."""
        _, jac, _ = kernels.tether_kinematics(np.zeros(6), self.anchors, self.attachments)
        return jac.T @ np.full(3, self.pretension)

    @cached_property
    def heave_projection(self) -> np.ndarray:
        """d g_k / d heave at rest (cosine of each leg's inclination from vertical)."""
        _, jac, _ = kernels.tether_kinematics(np.zeros(6), self.anchors, self.attachments)
        return jac[:, HEAVE].copy()

    @cached_property
    def geometric_heave_stiffness(self) -> float:
        """Heave stiffness contributed by the pretension through tether rotation."""
        proj = self.heave_projection
        return float(self.pretension * np.sum((1.0 - proj**2) / self.nominal_lengths))

    def decoupled(self) -> "WecGeometry":
        """Heave-only tier: diagonal matrices, heave excitation only, other DOFs locked."""
        gx = np.zeros((6, 3))
        gx[HEAVE] = self.excitation_gain[HEAVE]
        mask = np.zeros(6)
        mask[HEAVE] = 1.0
        return replace(
            self,
            hydrostatic_stiffness=np.diag(np.diag(self.hydrostatic_stiffness)),
            added_mass=np.diag(np.diag(self.added_mass)),
            radiation_damping=np.diag(np.diag(self.radiation_damping)),
            excitation_gain=gx, dof_mask=mask, tier="decoupled-heave",
        )

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.tolist() if isinstance(v, np.ndarray) else v
        return out


def leg_points(radius: float, z: float, azimuths_deg=(0.0, 120.0, 240.0)) -> np.ndarray:
    az = np.radians(np.asarray(azimuths_deg, dtype=float))
    pts = np.stack([radius * np.cos(az), radius * np.sin(az), np.full(3, z)], axis=1)
    pts[np.abs(pts) < 1e-12] = 0.0
    # enforce exact mirror pairing of the back legs
    pts[2] = pts[1] * np.array([1.0, -1.0, 1.0])
    return pts


def default_geometry(tier: str = "coupled") -> WecGeometry:
    """Documented surrogate constants, loosely scaled to a 16 m diameter submerged buoy."""
    inclination = math.radians(35.0)
    drop = 30.0
    attach_r, attach_z = 8.0, -2.5
    anchor_r = attach_r + drop * math.tan(inclination)
    added = np.diag([5.0e5, 5.0e5, 8.0e5, 4.0e6, 4.0e6, 1.0e5])
    added[0, 4] = added[4, 0] = 2.0e5
    added[1, 3] = added[3, 1] = -2.0e5
    damping = np.diag([1.5e5, 1.5e5, 2.5e5, 2.0e6, 2.0e6, 2.0e5])
    damping[0, 4] = damping[4, 0] = 1.0e5
    damping[1, 3] = damping[3, 1] = -1.0e5
    gain = np.zeros((6, 3))
    gain[0] = [0.0, 4.0e5, 0.0]  # surge: in phase with horizontal water acceleration
    gain[2] = [3.0e5, 0.0, 0.0]  # heave: Froude-Krylov-like pressure term
    gain[4] = [0.0, 0.0, 1.0e6]  # pitch
    geom = WecGeometry(
        mass=4.0e5,
        inertia=np.diag([6.0e6, 6.0e6, 1.0e7]),
        submergence=2.0,
        hydrostatic_stiffness=np.diag([0.0, 0.0, 0.0, 4.0e6, 4.0e6, 2.0e5]),
        added_mass=added,
        radiation_damping=damping,
        excitation_gain=gain,
        anchors=leg_points(anchor_r, attach_z - drop),
        attachments=leg_points(attach_r, attach_z),
        pretension=2.0e6,
    )
    if tier == "coupled":
        return geom
    if tier == "decoupled-heave":
        return geom.decoupled()
    raise ConfigError(f"unknown tier {tier!r}")


@dataclass(frozen=True, eq=False)
class PtoConfig:
    spring_stiffness: np.ndarray  # N/m per leg
    rest_extension: np.ndarray  # m per leg
    gen_force_max: float = 2.0e5
    tension_min: float = -1.5e6  # relative to the static pretension
    tension_max: float = 1.0e6
    efficiency: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "spring_stiffness", _arr(np.broadcast_to(self.spring_stiffness, (3,)), (3,), "spring_stiffness"))
        object.__setattr__(self, "rest_extension", _arr(np.broadcast_to(self.rest_extension, (3,)), (3,), "rest_extension"))
        if np.any(self.spring_stiffness < 0):
            raise ConfigError("spring_stiffness must be >= 0")
        if not self.gen_force_max > 0:
            raise ConfigError("gen_force_max must be > 0")
        if not self.tension_min < self.tension_max:
            raise ConfigError("tension_min must be < tension_max")
        if not 0 < self.efficiency <= 1:
            raise ConfigError("efficiency must be in (0, 1]")

    def with_spring(self, stiffness) -> "PtoConfig":
        return replace(self, spring_stiffness=np.broadcast_to(np.asarray(stiffness, dtype=float), (3,)).copy())

    def to_dict(self) -> dict:
        return {f.name: (getattr(self, f.name).tolist() if isinstance(getattr(self, f.name), np.ndarray)
                         else getattr(self, f.name)) for f in fields(self)}


def default_pto(geometry: WecGeometry, spring_stiffness=1.0e5) -> PtoConfig:
    return PtoConfig(spring_stiffness=spring_stiffness, rest_extension=geometry.nominal_lengths.copy())


@dataclass(frozen=True)
class SimConfig:
    dt_sim: float = 0.05
    dt_control: float = 0.2
    integrator: str = "rk4"

    def __post_init__(self):
        if not (self.dt_sim > 0 and self.dt_control > 0):
            raise ConfigError("time steps must be > 0")
        ratio = self.dt_control / self.dt_sim
        if abs(ratio - round(ratio)) > 1e-9 * ratio or round(ratio) < 1:
            raise ConfigError(f"dt_control={self.dt_control} is not an integer multiple of dt_sim={self.dt_sim}")
        if self.integrator not in ("semi-implicit-euler", "rk4"):
            raise ConfigError(f"unknown integrator {self.integrator!r}")

    @property
    def substeps(self) -> int:
        return int(round(self.dt_control / self.dt_sim))

    @property
    def method(self) -> int:
        return kernels.RK4 if self.integrator == "rk4" else kernels.SEMI_IMPLICIT_EULER
