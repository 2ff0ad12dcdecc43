"""Power take-off force law and generator power."""

from __future__ import annotations

import numpy as np

from . import kernels
from .geometry import PtoConfig


def pto_force(pto: PtoConfig, f_gen_cmd: float, extension: float, extension_rate: float = 0.0,
              leg: int = 0) -> tuple[float, float, float]:
    """(F_pto, F_gen_applied, tension) for one leg.

    ``extension_rate`` does not enter the force law (the generator command is
    the controller's job); it is accepted so the call mirrors the simulator's.
    """
    if not extension > 0:
        raise ValueError("extension must be > 0")
    f_pto, f_gen, tension, _ = kernels.pto_clamp(
        float(f_gen_cmd), float(extension), pto.spring_stiffness[leg], pto.rest_extension[leg],
        pto.gen_force_max, pto.tension_min, pto.tension_max)
    return f_pto, f_gen, tension


def instantaneous_power(f_gen_applied, extension_rate):
    """Mechanical power captured by a generator; positive when it resists extension."""
    return -np.asarray(f_gen_applied) * np.asarray(extension_rate)


def electrical_power(mechanical, efficiency: float):
    """Constant-efficiency conversion: losses in both generating and motoring mode."""
    p = np.asarray(mechanical, dtype=float)
    if efficiency == 1.0:
        return p
    return np.where(p >= 0, p * efficiency, p / efficiency)
