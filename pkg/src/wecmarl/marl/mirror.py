"""Reflection of observations about the x-z symmetry plane."""

from __future__ import annotations

import numpy as np

from ..wec.geometry import ConfigError
from ..wec.observation import ObservationLayout


def mirror_observation(obs, layout: ObservationLayout) -> np.ndarray:
    """Negate sway/roll/yaw terms and swap the two back legs in every leg block.

    Front-leg and wave entries are unchanged; applying it twice is the identity.
    """
    obs = np.asarray(obs, dtype=float)
    if obs.shape[-1] != layout.dim:
        raise ConfigError(f"observation of width {obs.shape[-1]} does not match layout dim {layout.dim}")
    perm, sign = layout.mirror_maps
    return obs[..., perm] * sign


def leg_view(obs, layout: ObservationLayout, leg: int) -> np.ndarray:
    """Observation as seen by the shared back-leg agent when driving ``leg``.

    Leg 1 sees the raw observation; leg 2 sees the reflected one, in which
    it occupies leg 1's slot.  The front leg sees the raw observation.
    """
    return mirror_observation(obs, layout) if leg == 2 else np.asarray(obs, dtype=float)
