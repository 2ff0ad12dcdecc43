"""Team-coefficient reward shaping."""

from __future__ import annotations

import math

import numpy as np


def check_eta(eta: float) -> float:
    eta = float(eta)
    if not math.isfinite(eta) or not -1.0 <= eta <= 1.0:
        raise ValueError(f"team coefficient must lie in [-1, 1], got {eta}")
    return eta


def shaped_reward(p_own: float, p_others: float, eta: float) -> float:
    """``P_own + eta * P_others``: positive eta rewards the team, negative penalises it."""
    if not (math.isfinite(p_own) and math.isfinite(p_others)):
        raise ValueError("powers must be finite")
    return p_own + check_eta(eta) * p_others


def leg_rewards(leg_power, legs, eta: float) -> np.ndarray:
    """Reward for each leg in ``legs`` treating the other two legs as the others."""
    leg_power = np.asarray(leg_power, dtype=float)
    total = float(leg_power.sum())
    return np.array([shaped_reward(leg_power[k], total - leg_power[k], eta) for k in legs])
