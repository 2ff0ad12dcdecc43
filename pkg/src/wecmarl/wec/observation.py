"""Flat RL observation vectors built from the simulator state and the sea.

Block order is fixed: pose, velocity, acceleration (6 each), tether
extension, rate, acceleration (3 each), wave elevation, rate,
acceleration (1 each), then tensions (3) last.  A layout switches groups
of blocks on or off:

========  ==================================================  ===
preset    blocks                                              dim
========  ==================================================  ===
step1     e, de, z, dz                                        14
step2     step1 + dg                                          17
step3     step2 + dde, ddg, ddz                               27
step4     step3 + T                                           30
full      step4 + g                                           33
========  ==================================================  ===
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .geometry import MIRROR_DOF, MIRROR_LEGS, ConfigError

# (name, width, group) in emission order
BLOCKS = (
    ("e", 6, "base"),
    ("de", 6, "base"),
    ("dde", 6, "accelerations"),
    ("g", 3, "extension"),
    ("dg", 3, "tether_rates"),
    ("ddg", 3, "accelerations"),
    ("z", 1, "base"),
    ("dz", 1, "base"),
    ("ddz", 1, "accelerations"),
    ("T", 3, "tensions"),
)

PRESETS = {
    "step1": dict(tether_rates=False, accelerations=False, tensions=False, extension=False),
    "step2": dict(tether_rates=True, accelerations=False, tensions=False, extension=False),
    "step3": dict(tether_rates=True, accelerations=True, tensions=False, extension=False),
    "step4": dict(tether_rates=True, accelerations=True, tensions=True, extension=False),
    "full": dict(tether_rates=True, accelerations=True, tensions=True, extension=True),
}


@dataclass(frozen=True)
class ObservationScales:
    """Divisors applied per block; extension is divided by the nominal leg length."""

    pose: tuple = (1.0, 1.0, 1.0, 0.1, 0.1, 0.1)
    velocity: tuple = (1.0, 1.0, 1.0, 0.1, 0.1, 0.1)
    acceleration: tuple = (1.0, 1.0, 1.0, 0.1, 0.1, 0.1)
    extension_rate: float = 1.0
    extension_accel: float = 1.0
    wave: tuple = (1.0, 1.0, 1.0)
    tension: float = 1.0e6


@dataclass(frozen=True)
class ObservationLayout:
    """Which state-design blocks are emitted.  The step-1 blocks are always on."""

    tether_rates: bool = True
    accelerations: bool = True
    tensions: bool = True
    extension: bool = True
    scales: ObservationScales = field(default_factory=ObservationScales)

    @classmethod
    def preset(cls, name: str, scales: ObservationScales | None = None) -> "ObservationLayout":
        if name not in PRESETS:
            raise ConfigError(f"unknown observation preset {name!r}; choose from {sorted(PRESETS)}")
        return cls(**PRESETS[name], scales=scales or ObservationScales())

    @property
    def name(self) -> str:
        for key, flags in PRESETS.items():
            if all(getattr(self, k) == v for k, v in flags.items()):
                return key
        return "custom"

    def enabled(self, group: str) -> bool:
        return group == "base" or bool(getattr(self, group))

    @cached_property
    def blocks(self) -> list[tuple[str, int]]:
        return [(n, w) for n, w, grp in BLOCKS if self.enabled(grp)]

    @cached_property
    def dim(self) -> int:
        return sum(w for _, w in self.blocks)

    def slices(self) -> dict[str, slice]:
        out, i = {}, 0
        for n, w in self.blocks:
            out[n] = slice(i, i + w)
            i += w
        return out

    @cached_property
    def plan(self) -> tuple[np.ndarray, np.ndarray]:
        """Indices into the raw state concatenation and matching inverse scales."""
        sc = self.scales
        raw = {  # offset into the raw vector, divisor
            "e": (0, np.asarray(sc.pose, dtype=float)), "de": (6, np.asarray(sc.velocity, dtype=float)),
            "dde": (12, np.asarray(sc.acceleration, dtype=float)), "g": (18, np.ones(3)),
            "dg": (21, np.full(3, sc.extension_rate)), "ddg": (24, np.full(3, sc.extension_accel)),
            "z": (27, sc.wave[0:1]), "dz": (28, sc.wave[1:2]), "ddz": (29, sc.wave[2:3]),
            "T": (30, np.full(3, sc.tension)),
        }
        idx, inv = [], []
        for n, w in self.blocks:
            off, div = raw[n]
            idx += range(off, off + w)
            inv += list(1.0 / np.asarray(div, dtype=float))
        return np.array(idx), np.array(inv)

    @cached_property
    def mirror_maps(self) -> tuple[np.ndarray, np.ndarray]:
        """(permutation, sign) with ``mirror(obs) = sign * obs[perm]``."""
        perm, sign, i = [], [], 0
        for n, w in self.blocks:
            if w == 6:
                perm += list(range(i, i + 6))
                sign += list(MIRROR_DOF)
            elif w == 3:
                perm += list(i + MIRROR_LEGS)
                sign += [1.0] * 3
            else:
                perm.append(i)
                sign.append(1.0)
            i += w
        return np.array(perm), np.array(sign)

    def to_dict(self) -> dict:
        return {"preset": self.name, "tether_rates": self.tether_rates, "accelerations": self.accelerations,
                "tensions": self.tensions, "extension": self.extension}


def observation(state, wave_sample, layout: ObservationLayout, nominal_lengths) -> np.ndarray:
    """Normalised observation for ``state`` with ``wave_sample = (z, dz, ddz)``."""
    raw = np.concatenate((state.pose, state.velocity, state.acceleration, state.extension,
                          state.extension_rate, state.extension_accel, wave_sample, state.tension))
    idx, inv = layout.plan
    out = raw[idx] * inv
    if layout.extension:
        out[layout.slices()["g"]] /= nominal_lengths
    return out
