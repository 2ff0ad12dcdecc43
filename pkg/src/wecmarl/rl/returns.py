"""n-step discounted returns over a trajectory segment."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class TrajectorySegment:
    """Rows ``(s_i, u_i, r_{i+1})`` for one stream; ``terminal`` means no bootstrap."""

    obs: np.ndarray  # (n, d_in)
    u: np.ndarray  # (n, d_out) pre-squash samples
    rewards: np.ndarray  # (n,)
    terminal: bool
    last_obs: np.ndarray | None = None  # state after the last step, for bootstrapping

    def __len__(self) -> int:
        return len(self.rewards)


def n_step_returns(rewards, gamma: float, bootstrap: float = 0.0) -> np.ndarray:
    """``R <- r_i + gamma R`` backwards from ``R = bootstrap`` (0 at a terminal state)."""
    rewards = np.asarray(rewards, dtype=float)
    if rewards.size == 0:
        raise ValueError("segment is empty")
    out = np.empty_like(rewards)
    r = float(bootstrap)
    for i in range(len(rewards) - 1, -1, -1):
        r = rewards[i] + gamma * r
        out[i] = r
    return out
