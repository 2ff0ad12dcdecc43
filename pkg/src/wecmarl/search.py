"""Sequential hyperparameter search with a random or surrogate (expected improvement) strategy.

The surrogate is a Gaussian-kernel (RBF) regressor on the unit-scaled
space.  Its length scale is picked from a small grid by marginal
likelihood; expected improvement is maximised over random candidates plus
local perturbations of the incumbent.  Every trial draws its randomness
from ``SeedSequence([seed, trial_id])``, so a search resumed from a
truncated history replays the remaining trials exactly.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from .wec.geometry import ConfigError

log = logging.getLogger(__name__)

STRATEGIES = ("random", "surrogate")


@dataclass(frozen=True)
class Dimension:
    name: str
    low: float
    high: float
    scale: str = "linear"  # or "log"

    def __post_init__(self):
        if self.scale not in ("linear", "log"):
            raise ConfigError(f"dimension {self.name!r}: scale must be 'linear' or 'log'")
        if not (math.isfinite(self.low) and math.isfinite(self.high)):
            raise ConfigError(f"dimension {self.name!r}: bounds must be finite")
        if self.low > self.high:
            raise ConfigError(f"dimension {self.name!r}: low > high")
        if self.scale == "log" and self.low <= 0:
            raise ConfigError(f"dimension {self.name!r}: log scale needs positive bounds")

    def _t(self, x):
        return np.log10(x) if self.scale == "log" else np.asarray(x, dtype=float)

    def to_unit(self, x) -> np.ndarray:
        lo, hi = self._t(self.low), self._t(self.high)
        if hi == lo:
            return np.zeros_like(np.asarray(x, dtype=float))
        return (self._t(x) - lo) / (hi - lo)

    def from_unit(self, u) -> np.ndarray:
        lo, hi = self._t(self.low), self._t(self.high)
        v = lo + np.clip(u, 0.0, 1.0) * (hi - lo)
        x = 10.0**v if self.scale == "log" else v
        return np.clip(x, self.low, self.high)


@dataclass(frozen=True)
class SearchSpace:
    dims: tuple

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(self.dims))
        if not self.dims:
            raise ConfigError("search space has no dimensions")
        names = [d.name for d in self.dims]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate dimension names")

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.dims]

    def to_unit(self, point: dict) -> np.ndarray:
        return np.array([float(d.to_unit(point[d.name])) for d in self.dims])

    def from_unit(self, u) -> dict:
        return {d.name: float(d.from_unit(u[i])) for i, d in enumerate(self.dims)}

    def contains(self, point: dict) -> bool:
        return all(d.low <= point[d.name] <= d.high for d in self.dims)


LR_GAMMA = SearchSpace((Dimension("lr", 1e-6, 1e-2, "log"), Dimension("gamma", 0.8, 0.999)))
ETA = SearchSpace((Dimension("eta_front", -1.0, 1.0), Dimension("eta_back", -1.0, 1.0)))
SPACES = {"lr-gamma": LR_GAMMA, "eta": ETA}


@dataclass
class Trial:
    id: int
    point: dict
    objective: float = float("nan")
    status: str = "pending"  # complete | failed
    seed: int = 0
    message: str = ""


# --- surrogate -------------------------------------------------------------------------

def _rbf(a, b, ell):
    d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(-1)
    return np.exp(-0.5 * d2 / ell**2)


@dataclass
class KernelRegressor:
    """Zero-mean GP regression with an RBF kernel on standardised targets."""

    x: np.ndarray
    y: np.ndarray
    noise: float = 1e-4
    ell_grid: tuple = (0.05, 0.1, 0.2, 0.3, 0.5, 1.0)
    ell: float = field(init=False)

    def __post_init__(self):
        self.mu = float(self.y.mean())
        self.sd = float(self.y.std()) or 1.0
        z = (self.y - self.mu) / self.sd
        best = None
        for ell in self.ell_grid:
            k = _rbf(self.x, self.x, ell) + self.noise * np.eye(len(self.x))
            try:
                c = np.linalg.cholesky(k)
            except np.linalg.LinAlgError:
                continue
            alpha = np.linalg.solve(c.T, np.linalg.solve(c, z))
            lml = -0.5 * z @ alpha - np.log(np.diag(c)).sum()
            if best is None or lml > best[0]:
                best = (lml, ell, c, alpha)
        if best is None:
            raise np.linalg.LinAlgError("kernel matrix is not positive definite")
        _, self.ell, self._chol, self._alpha = best

    def predict(self, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        ks = _rbf(xs, self.x, self.ell)
        mean = ks @ self._alpha
        v = np.linalg.solve(self._chol, ks.T)
        var = np.maximum(1.0 + self.noise - (v * v).sum(0), 1e-12)
        return self.mu + self.sd * mean, self.sd * np.sqrt(var)


def expected_improvement(mean, std, best: float, xi: float = 0.0) -> np.ndarray:
    """EI for maximisation; ``xi`` is the minimum improvement worth counting."""
    imp = mean - best - xi
    z = imp / std
    return imp * ndtr(z) + std * np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)


def suggest(history, space: SearchSpace, strategy: str, rng: np.random.Generator,
            n_init: int = 5, n_candidates: int = 2048) -> dict:
    """Next point to evaluate (maximisation).

    ``random`` samples uniformly in the scaled space.  ``surrogate`` does the
    same for its first ``n_init`` completed trials, then maximises expected
    improvement of the kernel regressor.
    """
    if not isinstance(space, SearchSpace) or not space.dims:
        raise ConfigError("empty search space")
    if strategy not in STRATEGIES:
        raise ConfigError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
    d = len(space.dims)
    done = [t for t in history if t.status == "complete" and math.isfinite(t.objective)]
    if strategy == "random" or len(done) < n_init:
        return space.from_unit(rng.random(d))
    x = np.array([space.to_unit(t.point) for t in done])
    y = np.array([t.objective for t in done])
    model = KernelRegressor(x, y)
    inc = x[np.argmax(y)]
    cands = np.vstack([rng.random((n_candidates, d)),
                       np.clip(inc + rng.normal(0.0, 0.05, (n_candidates // 4, d)), 0.0, 1.0)])
    mean, std = model.predict(cands)
    ei = expected_improvement(mean, std, float(y.max()), xi=0.01 * model.sd)
    return space.from_unit(cands[int(np.argmax(ei))])


# --- driver ----------------------------------------------------------------------------

def _columns(space: SearchSpace) -> list[str]:
    return ["trial", *space.names, "objective", "seed", "status", "message"]


def write_history(path, space: SearchSpace, trials) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_columns(space))
        for t in trials:
            w.writerow([t.id, *(repr(float(t.point[n])) for n in space.names), repr(float(t.objective)),
                        t.seed, t.status, t.message])
    tmp.replace(path)


def read_history(path, space: SearchSpace) -> list[Trial]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != _columns(space):
        raise ConfigError(f"{path}: history columns do not match the search space")
    out = []
    for r in rows[1:]:
        pt = {n: float(v) for n, v in zip(space.names, r[1:1 + len(space.names)])}
        k = 1 + len(space.names)
        out.append(Trial(int(r[0]), pt, float(r[k]), r[k + 2], int(r[k + 1]), r[k + 3]))
    return out


@dataclass
class SearchResult:
    best: Trial | None
    trials: list


def trial_seed(seed: int, idx: int) -> tuple[np.random.Generator, int]:
    ss = np.random.SeedSequence([int(seed), int(idx)])
    return np.random.default_rng(ss), int(ss.generate_state(1)[0])


def run_search(space: SearchSpace, objective, budget: int, strategy: str = "surrogate", seed: int = 0,
               history_path=None, resume: bool = False) -> SearchResult:
    """Evaluate ``budget`` trials in sequence, maximising ``objective(point, seed)``.

    The history CSV is rewritten after every trial.  With ``resume`` the
    trials already in the file are kept and the search continues after them.
    A trial whose objective raises or returns a non-finite value is marked
    failed and the search moves on.
    """
    if int(budget) < 1:
        raise ConfigError("search budget must be >= 1")
    if strategy not in STRATEGIES:
        raise ConfigError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
    trials: list[Trial] = []
    if resume and history_path is not None and Path(history_path).exists():
        trials = read_history(history_path, space)
    for idx in range(len(trials), int(budget)):
        rng, tseed = trial_seed(seed, idx)
        point = suggest(trials, space, strategy, rng)
        trial = Trial(idx, point, seed=tseed)
        try:
            val = float(objective(point, tseed))
            if not math.isfinite(val):
                raise ValueError(f"objective returned {val}")
            trial.objective, trial.status = val, "complete"
        except Exception as exc:  # a failed run must not end the search
            trial.status, trial.message = "failed", f"{type(exc).__name__}: {exc}"
            log.warning("trial %d failed: %s", idx, trial.message)
        trials.append(trial)
        if history_path is not None:
            write_history(history_path, space, trials)
    done = [t for t in trials if t.status == "complete"]
    best = max(done, key=lambda t: t.objective) if done else None
    return SearchResult(best, trials)


def synthetic_objective(point: dict, seed: int = 0) -> float:
    """Quadratic bowl with its optimum at lr = 1e-4, gamma = 0.97."""
    return -(math.log10(point["lr"]) + 4.0) ** 2 - 100.0 * (point["gamma"] - 0.97) ** 2


def load_space(spec) -> SearchSpace:
    """A preset name or a mapping ``{name: {low, high, scale}}``."""
    if isinstance(spec, SearchSpace):
        return spec
    if isinstance(spec, str):
        if spec not in SPACES:
            raise ConfigError(f"unknown search space {spec!r}; choose from {sorted(SPACES)}")
        return SPACES[spec]
    try:
        return SearchSpace(tuple(Dimension(n, float(v["low"]), float(v["high"]), v.get("scale", "linear"))
                                 for n, v in spec.items()))
    except (KeyError, TypeError, AttributeError) as exc:
        raise ConfigError(f"bad search space description: {exc}") from exc
