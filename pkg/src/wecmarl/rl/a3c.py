"""Asynchronous advantage actor-critic: global parameter stores and workers.

A worker owns a private environment and repeatedly

1. snapshots the current global parameters of every trainable agent,
2. rolls at most ``t_max`` control steps with sampled actions,
3. computes n-step returns and gradients per agent,
4. applies them to that agent's global store.

Environments follow a small multi-stream protocol so one worker can feed
several agents at once (and an agent can drive several legs)::

    reset() -> {agent: obs (n_streams, d_in)}
    step({agent: actions (n_streams, d_out)}) -> StreamStep

Single-worker runs are bit-reproducible for a given seed.  With several
workers the interleaving of applies is up to the scheduler.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import asdict, dataclass, field

import numpy as np
from numba import njit

from . import policy as pol
from .returns import n_step_returns

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class A3cConfig:
    gamma: float = 0.99
    lr: float = 1e-4
    t_max: int = 20
    entropy_coef: float = 0.01
    workers: int = 1
    clip_norm: float = 40.0
    total_steps: int = 100_000
    optimizer: str = "sgd"  # or "adam"
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    reward_scale: float = 1e-4
    unsafe_async: bool = False

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must be in [0, 1), got {self.gamma}")
        if not self.lr > 0:
            raise ValueError("learning rate must be > 0")
        if int(self.t_max) < 1:
            raise ValueError("t_max must be >= 1")
        if int(self.workers) < 1:
            raise ValueError("workers must be >= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.entropy_coef < 0 or self.total_steps < 0:
            raise ValueError("entropy_coef and total_steps must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["adam_betas"] = list(self.adam_betas)
        return d


@njit(cache=True, fastmath=True)
def _adam(flat, m, v, grad, lr, b1, b2, eps, t):
    # bias corrections folded into the step size
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    step = lr * np.sqrt(c2) / c1
    eps_hat = eps * np.sqrt(c2)
    for i in range(flat.size):
        g = grad[i]
        m[i] = b1 * m[i] + (1.0 - b1) * g
        v[i] = b2 * v[i] + (1.0 - b2) * g * g
        flat[i] -= step * m[i] / (np.sqrt(v[i]) + eps_hat)


class GlobalStore:
    """Shared parameters of one agent.

    Snapshots copy the whole vector under the lock, so a reader never
    mixes weights from two versions; applies are serialised and bump the
    version by one.  ``unsafe_async`` drops the lock on apply (Hogwild).
    """

    def __init__(self, params: pol.AgentParams, config: A3cConfig):
        self.spec = params.spec
        self._flat = params.flat.copy()
        self.version = params.version
        self.config = config
        self._lock = threading.Lock()
        self._m = np.zeros_like(self._flat)
        self._v = np.zeros_like(self._flat)
        self._t = 0
        _, ls, _ = self.spec.split(self._flat)
        np.clip(ls, pol.LOG_STD_MIN, pol.LOG_STD_MAX, out=ls)

    def snapshot(self) -> pol.AgentParams:
        with self._lock:
            return pol.AgentParams(self.spec, self._flat.copy(), self.version)

    @property
    def params(self) -> pol.AgentParams:
        return self.snapshot()

    def load(self, params: pol.AgentParams) -> None:
        with self._lock:
            self._flat[:] = params.flat
            self.version = params.version

    def optimizer_state(self) -> dict:
        with self._lock:
            return {"m": self._m.copy(), "v": self._v.copy(), "t": self._t}

    def load_optimizer_state(self, state: dict) -> None:
        with self._lock:
            self._m[:] = state["m"]
            self._v[:] = state["v"]
            self._t = int(state["t"])

    def apply(self, grad: np.ndarray, lr: float | None = None) -> int:
        """Descend along ``grad``; returns the new version."""
        if not np.all(np.isfinite(grad)):
            raise pol.TrainingFault("refusing to apply a non-finite gradient")
        lr = self.config.lr if lr is None else lr
        if self.config.unsafe_async:
            self._step(grad, lr)
            self.version += 1
            return self.version
        with self._lock:
            self._step(grad, lr)
            self.version += 1
            return self.version

    def _step(self, grad, lr):
        if self.config.optimizer == "sgd":
            self._flat -= lr * grad
        else:
            b1, b2 = self.config.adam_betas
            self._t += 1
            _adam(self._flat, self._m, self._v, grad, lr, b1, b2, self.config.adam_eps, self._t)
        _, ls, _ = self.spec.split(self._flat)
        np.clip(ls, pol.LOG_STD_MIN, pol.LOG_STD_MAX, out=ls)


class StepBudget:
    """Global control-step counter shared by the workers of one run."""

    def __init__(self, total: int):
        self.total = int(total)
        self.used = 0
        self._lock = threading.Lock()

    def take(self, n: int) -> int:
        with self._lock:
            k = max(0, min(int(n), self.total - self.used))
            self.used += k
            return k

    def release(self, n: int) -> None:
        """Return steps taken but not used (an episode ended early)."""
        with self._lock:
            self.used -= int(n)

    @property
    def remaining(self) -> int:
        return self.total - self.used


@dataclass
class StreamStep:
    obs: dict  # agent -> (n_streams, d_in)
    rewards: dict  # agent -> (n_streams,)
    done: bool
    terminal: bool  # fault or true terminal state: no bootstrap
    info: dict = field(default_factory=dict)


@dataclass
class WorkerStats:
    steps: int = 0
    updates: int = 0
    faults: int = 0
    env_faults: int = 0
    episodes: int = 0
    last_terms: dict = field(default_factory=dict)


class Worker:
    """One actor-learner thread's state; episodes continue across ``run`` calls."""

    def __init__(self, env, stores: dict, config: A3cConfig, rng: np.random.Generator):
        self.env = env
        self.stores = stores
        self.config = config
        self.rng = rng
        self.obs = None
        self.stats = WorkerStats()

    def _act(self, snaps: dict) -> tuple[dict, dict]:
        actions, us = {}, {}
        for a, p in snaps.items():
            mean = pol.policy_mean(p, self.obs[a])
            u = mean + np.exp(np.clip(p.log_std, pol.LOG_STD_MIN, pol.LOG_STD_MAX)) * self.rng.standard_normal(mean.shape)
            us[a] = u
            actions[a] = pol.squash(u, p.spec.f_max)
        return actions, us

    def run(self, budget: StepBudget, n_steps: int | None = None) -> int:
        """Consume up to ``n_steps`` (or the whole remaining budget); returns steps used."""
        cfg = self.config
        used = 0
        limit = budget.remaining if n_steps is None else n_steps
        while used < limit:
            want = budget.take(min(cfg.t_max, limit - used))
            if want == 0:
                break
            if self.obs is None:
                self.obs = self.env.reset()
                self.stats.episodes += 1
            snaps = {a: s.snapshot() for a, s in self.stores.items()}
            obs_buf = {a: [] for a in snaps}
            u_buf = {a: [] for a in snaps}
            r_buf = {a: [] for a in snaps}
            done = terminal = False
            n = 0
            while n < want:
                actions, us = self._act(snaps)
                res = self.env.step(actions)
                for a in snaps:
                    obs_buf[a].append(self.obs[a])
                    u_buf[a].append(us[a])
                    r_buf[a].append(np.asarray(res.rewards[a], dtype=float) * cfg.reward_scale)
                self.obs = res.obs
                n += 1
                if res.done:
                    done, terminal = True, res.terminal
                    if res.info.get("fault"):
                        self.stats.env_faults += 1
                        log.info("environment fault %s; restarting episode", res.info.get("fault"))
                    break
            if n < want:
                budget.release(want - n)
            used += n
            self.stats.steps += n
            for a, p in snaps.items():
                self._update(a, p, obs_buf[a], u_buf[a], r_buf[a], terminal)
            if done:
                self.obs = None
        return used

    def _update(self, agent, params, obs_rows, u_rows, r_rows, terminal):
        cfg = self.config
        obs = np.stack(obs_rows)  # (n, streams, d_in)
        u = np.stack(u_rows)
        r = np.stack(r_rows)  # (n, streams)
        n, k = r.shape
        if terminal:
            boot = np.zeros(k)
        else:
            boot = pol.value_of(params, self.obs[agent])
        rets = np.stack([n_step_returns(r[:, j], cfg.gamma, boot[j]) for j in range(k)], axis=1)
        flat_obs = obs.transpose(1, 0, 2).reshape(n * k, -1)
        flat_u = u.transpose(1, 0, 2).reshape(n * k, -1)
        flat_r = rets.T.reshape(-1)
        try:
            grad, terms = pol.compute_gradients(params, flat_obs, flat_u, flat_r, cfg.entropy_coef, cfg.clip_norm)
        except pol.TrainingFault as exc:
            self.stats.faults += 1
            log.warning("agent %s: %s; segment discarded", agent, exc)
            return
        self.stores[agent].apply(grad)
        self.stats.updates += 1
        self.stats.last_terms[agent] = terms


def run_workers(workers: list[Worker], budget: StepBudget, n_steps: int) -> int:
    """Advance all workers by ``n_steps`` in total (split evenly); threads if more than one."""
    if len(workers) == 1:
        return workers[0].run(budget, n_steps)
    shares = [n_steps // len(workers) + (i < n_steps % len(workers)) for i in range(len(workers))]
    used = [0] * len(workers)

    def target(i):
        used[i] = workers[i].run(budget, shares[i])

    threads = [threading.Thread(target=target, args=(i,), daemon=True) for i in range(len(workers))]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    return sum(used)


def worker_loop(env_factory, stores: dict, config: A3cConfig, seed: int = 0) -> int:
    """Train until the global budget ``config.total_steps`` is spent; returns steps consumed."""
    budget = StepBudget(config.total_steps)
    seeds = np.random.SeedSequence(seed).spawn(config.workers)
    workers = [Worker(env_factory(i), stores, config, np.random.default_rng(s)) for i, s in enumerate(seeds)]
    return run_workers(workers, budget, config.total_steps)
