"""Spring-damper baseline controller and its resonance tuning."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .wec.geometry import HEAVE, WecGeometry


class TuningError(ValueError):
    pass


@dataclass(frozen=True)
class SpringDamperParams:
    damping: np.ndarray  # N s/m per leg

    def __post_init__(self):
        c = np.broadcast_to(np.asarray(self.damping, dtype=float), (3,)).copy()
        if np.any(c < 0) or not np.all(np.isfinite(c)):
            raise ValueError("damping must be finite and >= 0")
        object.__setattr__(self, "damping", c)


def sd_action(extension_rate, params: SpringDamperParams) -> np.ndarray:
    """Generator commands ``-c_k * gdot_k``; saturation is left to the simulator."""
    return -params.damping * np.asarray(extension_rate, dtype=float)


def heave_mode(geometry: WecGeometry) -> tuple[float, float, float, float]:
    """(mass incl. added, stiffness without PTO springs, radiation damping, sum of squared leg projections).

    The stiffness includes the geometric term from the tether pretension.
    """
    m = geometry.mass_matrix[HEAVE, HEAVE]
    k = geometry.hydrostatic_stiffness[HEAVE, HEAVE] + geometry.geometric_heave_stiffness
    b = geometry.radiation_damping[HEAVE, HEAVE]
    proj = geometry.heave_projection
    return m, k, b, float(proj @ proj)


def tune_for_resonance(geometry: WecGeometry, peak_period: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-leg spring stiffness putting the heave mode at resonance, and matched damping.

    The PTO springs add ``k_s * sum(cos^2 beta)`` to the heave stiffness (on top of
    hydrostatics and the pretension term) and the dampers add ``c * sum(cos^2 beta)`` to the heave damping; ``c`` is chosen so the
    latter equals the radiation damping (impedance matching).
    """
    if not (math.isfinite(peak_period) and peak_period > 0):
        raise TuningError(f"peak period must be > 0, got {peak_period}")
    m, k_hydro, b_rad, proj2 = heave_mode(geometry)
    omega = 2.0 * math.pi / peak_period
    k_s = (m * omega**2 - k_hydro) / proj2
    if k_s < 0:
        raise TuningError(
            f"Tp={peak_period} s is below the heave natural frequency without springs; "
            "no non-negative spring stiffness reaches resonance")
    return np.full(3, k_s), np.full(3, b_rad / proj2)


def heave_excitation_amplitude(geometry: WecGeometry, wave_amplitude: float, period: float) -> float:
    """|F_exc| in heave for a regular wave of the given amplitude and period."""
    w = 2.0 * math.pi / period
    g0, g1, g2 = geometry.excitation_gain[HEAVE]
    return wave_amplitude * abs(complex(g0 - g2 * w * w, g1 * w))


def max_absorbed_power(geometry: WecGeometry, wave_amplitude: float, period: float) -> float:
    """Impedance-matching bound ``|F_exc|^2 / (8 B_rad)`` for the heave mode."""
    f = heave_excitation_amplitude(geometry, wave_amplitude, period)
    return f * f / (8.0 * geometry.radiation_damping[HEAVE, HEAVE])


class SpringDamperController:
    """Linear damper on every leg.

    With ``damping=None`` the per-sea-state tuned damping supplied by the
    environment view is used, so the baseline is retuned for each period.
    """

    name = "sd"

    def __init__(self, damping=None):
        self.params = None if damping is None else SpringDamperParams(damping)

    def __call__(self, view) -> np.ndarray:
        c = view.sd_damping if self.params is None else self.params.damping
        return -c * view.state.extension_rate
