"""Actor-critic parameters, tanh-squashed Gaussian policy, loss and gradients.

One agent owns a policy network (mean head, linear), a state-independent
log standard deviation per output, and a separate value network.  All
three live in one flat fp64 vector::

    [ policy MLP | log_std | value MLP ]
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from . import mlp

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


class TrainingFault(RuntimeError):
    """Non-finite loss or gradient; the segment is discarded."""


@dataclass(frozen=True)
class AgentSpec:
    d_in: int
    d_out: int
    f_max: float  # action bound, N
    hidden: tuple = (256, 256)
    init_log_std: float = -0.5

    @property
    def policy_sizes(self) -> tuple:
        return (self.d_in, *self.hidden, self.d_out)

    @property
    def value_sizes(self) -> tuple:
        return (self.d_in, *self.hidden, 1)

    @property
    def n_policy(self) -> int:
        return mlp.n_params(self.policy_sizes)

    @property
    def n_params(self) -> int:
        return self.n_policy + self.d_out + mlp.n_params(self.value_sizes)

    def split(self, flat: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(policy, log_std, value) views into a flat parameter or gradient vector."""
        a, b = self.n_policy, self.n_policy + self.d_out
        return flat[:a], flat[a:b], flat[b:]

    def to_dict(self) -> dict:
        return {"d_in": self.d_in, "d_out": self.d_out, "f_max": self.f_max,
                "hidden": list(self.hidden), "init_log_std": self.init_log_std}


@dataclass
class AgentParams:
    spec: AgentSpec
    flat: np.ndarray
    version: int = 0

    def __post_init__(self):
        if self.flat.shape != (self.spec.n_params,):
            raise mlp.ShapeError(f"parameter vector {self.flat.shape} does not match spec ({self.spec.n_params},)")

    @property
    def policy(self) -> np.ndarray:
        return self.spec.split(self.flat)[0]

    @property
    def log_std(self) -> np.ndarray:
        return self.spec.split(self.flat)[1]

    @property
    def value(self) -> np.ndarray:
        return self.spec.split(self.flat)[2]

    def copy(self) -> "AgentParams":
        return AgentParams(self.spec, self.flat.copy(), self.version)

    def digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.flat, dtype="<f8").tobytes()).hexdigest()


def init_agent(spec: AgentSpec, rng: np.random.Generator) -> AgentParams:
    flat = np.empty(spec.n_params)
    pol, ls, val = spec.split(flat)
    pol[:] = mlp.init_mlp(spec.policy_sizes, rng, out_scale=0.01).flat
    ls[:] = spec.init_log_std
    val[:] = mlp.init_mlp(spec.value_sizes, rng, out_scale=1.0).flat
    return AgentParams(spec, flat)


def forward(params: AgentParams, obs) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(mean (n, d_out), log_std (d_out,), value (n,)) for a batch or a single observation."""
    obs = np.asarray(obs, dtype=float)
    single = obs.ndim == 1
    x = obs[None, :] if single else obs
    spec = params.spec
    mean, _ = mlp.forward(params.policy, spec.policy_sizes, x)
    value, _ = mlp.forward(params.value, spec.value_sizes, x)
    log_std = np.clip(params.log_std, LOG_STD_MIN, LOG_STD_MAX)
    if single:
        return mean[0], log_std, value[0, 0]
    return mean, log_std, value[:, 0]


def policy_mean(params: AgentParams, obs) -> np.ndarray:
    spec = params.spec
    x = np.atleast_2d(np.asarray(obs, dtype=float))
    mean, _ = mlp.forward(params.policy, spec.policy_sizes, x)
    return mean


def value_of(params: AgentParams, obs) -> np.ndarray:
    spec = params.spec
    x = np.atleast_2d(np.asarray(obs, dtype=float))
    v, _ = mlp.forward(params.value, spec.value_sizes, x)
    return v[:, 0]


def _log1m_tanh2(u):
    # log(1 - tanh(u)^2) without cancellation
    return 2.0 * (math.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))


def gaussian_log_prob(u, mean, log_std) -> np.ndarray:
    """Log density of the pre-squash sample, summed over outputs."""
    z = (u - mean) * np.exp(-log_std)
    return np.sum(-0.5 * z * z - log_std - _HALF_LOG_2PI, axis=-1)


def squashed_log_prob(u, mean, log_std, f_max: float) -> np.ndarray:
    """Log density of ``a = f_max * tanh(u)`` in action units (change of variables)."""
    return gaussian_log_prob(u, mean, log_std) - np.sum(_log1m_tanh2(u) + math.log(f_max), axis=-1)


def squash(u, f_max: float) -> np.ndarray:
    return f_max * np.tanh(u)


def sample_action(mean, log_std, rng: np.random.Generator, f_max: float):
    """Returns (action, pre-squash u, log-prob of the action)."""
    mean = np.asarray(mean, dtype=float)
    u = mean + np.exp(log_std) * rng.standard_normal(mean.shape)
    return squash(u, f_max), u, squashed_log_prob(u, mean, log_std, f_max)


def entropy(log_std) -> float:
    """Entropy of the pre-squash Gaussian (the squashed one has no closed form)."""
    return float(np.sum(log_std + 0.5 + _HALF_LOG_2PI))


@dataclass
class LossTerms:
    policy: float
    value: float
    entropy: float
    grad_norm_policy: float = 0.0
    grad_norm_value: float = 0.0
    extras: dict = field(default_factory=dict)


def segment_loss(params: AgentParams, obs, u, returns, advantages, entropy_coef: float) -> float:
    """Surrogate whose gradient ``compute_gradients`` returns (advantages held constant)."""
    mean, log_std, value = forward(params, obs)
    logp = gaussian_log_prob(u, mean, log_std)
    n = len(returns)
    return float(-np.sum(advantages * logp) - entropy_coef * n * entropy(log_std)
                 + np.sum((returns - value) ** 2))


def compute_gradients(params: AgentParams, obs, u, returns, entropy_coef: float,
                      clip_norm: float | None = None) -> tuple[np.ndarray, LossTerms]:
    """Gradient of ``-sum A log pi - beta * sum H + sum (R - V)^2``.

    ``A = R - V(s)`` uses the value from the same parameter snapshot and is
    treated as a constant.  The tanh correction of the log-prob does not
    depend on the parameters, so the Gaussian part is differentiated.
    Policy (with log-std) and value gradients are clipped separately to
    ``clip_norm`` global norm.
    """
    spec = params.spec
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    u = np.asarray(u, dtype=float).reshape(len(obs), spec.d_out)
    returns = np.asarray(returns, dtype=float)
    n = len(obs)
    mean, acts_p = mlp.forward(params.policy, spec.policy_sizes, obs)
    v, acts_v = mlp.forward(params.value, spec.value_sizes, obs)
    v = v[:, 0]
    raw_ls = params.log_std
    log_std = np.clip(raw_ls, LOG_STD_MIN, LOG_STD_MAX)
    inside = (raw_ls >= LOG_STD_MIN) & (raw_ls <= LOG_STD_MAX)
    adv = returns - v
    inv_var = np.exp(-2.0 * log_std)
    diff = u - mean
    logp = gaussian_log_prob(u, mean, log_std)
    # d(-sum A logp)/d mean and /d log_std
    g_mean = -adv[:, None] * diff * inv_var
    g_ls = -np.sum(adv[:, None] * (diff * diff * inv_var - 1.0), axis=0) - entropy_coef * n
    g_ls = g_ls * inside
    g_v = -2.0 * adv[:, None]

    grad = np.zeros(spec.n_params)
    gp, gl, gv = spec.split(grad)
    gp[:] = mlp.backward(params.policy, spec.policy_sizes, acts_p, g_mean)
    gl[:] = g_ls
    gv[:] = mlp.backward(params.value, spec.value_sizes, acts_v, g_v)
    if not np.all(np.isfinite(grad)):
        raise TrainingFault("non-finite gradient")
    pol_norm = float(np.sqrt(np.sum(gp * gp) + np.sum(gl * gl)))
    val_norm = float(np.sqrt(np.sum(gv * gv)))
    if clip_norm is not None and clip_norm > 0:
        if pol_norm > clip_norm:
            gp *= clip_norm / pol_norm
            gl *= clip_norm / pol_norm
        if val_norm > clip_norm:
            gv *= clip_norm / val_norm
    terms = LossTerms(float(-np.sum(adv * logp)), float(np.sum(adv * adv)), entropy(log_std),
                      pol_norm, val_norm)
    return grad, terms
