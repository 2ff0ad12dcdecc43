"""JONSWAP wave synthesis.

Episodes are a superposition of cosine components on an equally spaced
frequency grid with deterministic amplitudes ``sqrt(2 S(f) df)`` and
uniform random phases.  The spectrum is normalised numerically so that
``4 * sqrt(m0) == Hs`` over ``(0, inf)``.
"""

from __future__ import annotations

import ast
import functools
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate

TWO_PI = 2.0 * math.pi


class DomainError(ValueError):
    """Argument outside the domain of a wave-model operation."""


@dataclass(frozen=True)
class WaveSpectrumParams:
    """Sea state: significant height (m), peak period (s), peak enhancement.

    ``freq_band`` defaults to ``[0.4/Tp, 4/Tp]`` Hz.  ``n_components=1`` with a
    band centred on ``1/Tp`` gives a monochromatic wave.
    """

    significant_height: float = 2.0
    peak_period: float = 10.0
    gamma: float = 3.3
    n_components: int = 256
    freq_band: tuple[float, float] | None = None

    def __post_init__(self):
        if not (np.isfinite(self.significant_height) and self.significant_height > 0):
            raise DomainError(f"significant_height must be > 0, got {self.significant_height}")
        if not (np.isfinite(self.peak_period) and self.peak_period > 0):
            raise DomainError(f"peak_period must be > 0, got {self.peak_period}")
        if not self.gamma >= 1.0:
            raise DomainError(f"gamma must be >= 1, got {self.gamma}")
        if int(self.n_components) != self.n_components or self.n_components < 1:
            raise DomainError(f"n_components must be a positive integer, got {self.n_components}")
        if self.freq_band is None:
            object.__setattr__(self, "freq_band", (0.4 / self.peak_period, 4.0 / self.peak_period))
        lo, hi = (float(x) for x in self.freq_band)
        object.__setattr__(self, "freq_band", (lo, hi))
        if not 0.0 < lo < self.peak_frequency < hi:
            raise DomainError(f"need 0 < f_min < 1/Tp < f_max, got band {self.freq_band} with Tp={self.peak_period}")

    @property
    def peak_frequency(self) -> float:
        return 1.0 / self.peak_period

    @classmethod
    def monochromatic(cls, significant_height: float, peak_period: float, rel_halfwidth: float = 0.05):
        """Single component at exactly ``1/Tp``."""
        fp = 1.0 / peak_period
        return cls(significant_height, peak_period, gamma=1.0, n_components=1,
                   freq_band=(fp * (1 - rel_halfwidth), fp * (1 + rel_halfwidth)))

    def grid(self) -> tuple[np.ndarray, float]:
        """Bin-centre frequencies and bin width."""
        lo, hi = self.freq_band
        df = (hi - lo) / self.n_components
        return lo + (np.arange(self.n_components) + 0.5) * df, df


def _shape(f, fp, gamma):
    # un-normalised JONSWAP shape: PM envelope times peak enhancement
    f = np.asarray(f, dtype=float)
    sigma = np.where(f <= fp, 0.07, 0.09)
    r = np.exp(-((f - fp) ** 2) / (2.0 * sigma**2 * fp**2))
    return fp**4 * f**-5.0 * np.exp(-1.25 * (fp / f) ** 4) * gamma**r


@functools.lru_cache(maxsize=256)
def _shape_integral(fp: float, gamma: float) -> float:
    fn = lambda f: float(_shape(f, fp, gamma))  # noqa: E731
    lo = integrate.quad(fn, 1e-6 * fp, fp, limit=400, epsabs=0, epsrel=1e-12)[0]
    hi = integrate.quad(fn, fp, np.inf, limit=400, epsabs=0, epsrel=1e-12)[0]
    return lo + hi


def jonswap_density(f, params: WaveSpectrumParams):
    """Spectral density S(f) in m^2 s, normalised so 4*sqrt(int S df) = Hs."""
    f_arr = np.asarray(f, dtype=float)
    if np.any(~np.isfinite(f_arr)) or np.any(f_arr <= 0):
        raise DomainError("jonswap_density requires f > 0")
    fp = params.peak_frequency
    scale = params.significant_height**2 / (16.0 * _shape_integral(fp, float(params.gamma)))
    out = scale * _shape(f_arr, fp, params.gamma)
    return float(out) if np.ndim(f) == 0 else out


def band_energy(params: WaveSpectrumParams) -> float:
    """Integral of S over the synthesis band (quadrature, independent of the grid)."""
    lo, hi = params.freq_band
    fn = lambda f: jonswap_density(f, params)  # noqa: E731
    pts = [params.peak_frequency] if lo < params.peak_frequency < hi else None
    return integrate.quad(fn, lo, hi, points=pts, limit=400, epsabs=0, epsrel=1e-12)[0]


@dataclass(frozen=True)
class WaveEpisode:
    """Immutable component table plus the sea state and seed that produced it."""

    params: WaveSpectrumParams
    seed: int
    frequencies: np.ndarray
    amplitudes: np.ndarray
    phases: np.ndarray
    duration: float
    dt_sample: float = 0.2
    _omega: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("frequencies", "amplitudes", "phases"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (len(self.frequencies) == len(self.amplitudes) == len(self.phases)):
            raise DomainError("component table columns differ in length")
        if np.any(self.amplitudes < 0):
            raise DomainError("amplitudes must be >= 0")
        if np.any((self.phases < 0) | (self.phases >= TWO_PI)):
            raise DomainError("phases must lie in [0, 2pi)")
        if np.any(np.diff(self.frequencies) <= 0):
            raise DomainError("frequencies must be strictly increasing")
        if not self.duration > 0:
            raise DomainError("duration must be > 0")
        object.__setattr__(self, "_omega", TWO_PI * self.frequencies)

    def sample(self, t) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Elevation, rate and acceleration at times ``t`` (no range check)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out_z = np.empty_like(t)
        out_zd = np.empty_like(t)
        out_zdd = np.empty_like(t)
        w, a, ph = self._omega, self.amplitudes, self.phases
        step = max(1, 2_000_000 // max(len(w), 1))
        for s in range(0, len(t), step):
            arg = np.outer(t[s:s + step], w) + ph
            c, sn = np.cos(arg), np.sin(arg)
            out_z[s:s + step] = c @ a
            out_zd[s:s + step] = -(sn @ (a * w))
            out_zdd[s:s + step] = -(c @ (a * w * w))
        return out_z, out_zd, out_zdd

    def elevation(self, t: float) -> tuple[float, float, float]:
        if not 0.0 <= t <= self.duration:
            raise DomainError(f"t={t} outside [0, {self.duration}]")
        z, zd, zdd = self.sample(t)
        return float(z[0]), float(zd[0]), float(zdd[0])

    def empirical_hs(self, dt: float | None = None) -> float:
        """Four times the standard deviation of elevation sampled over the episode."""
        dt = self.dt_sample if dt is None else dt
        t = np.arange(0.0, self.duration, dt)
        return 4.0 * float(np.std(self.sample(t)[0]))

    # -- serialisation -------------------------------------------------------

    def header(self) -> dict:
        p = self.params
        return {
            "Hs": p.significant_height, "Tp": p.peak_period, "gamma": p.gamma,
            "n_components": p.n_components, "f_min": p.freq_band[0], "f_max": p.freq_band[1],
            "seed": self.seed, "duration": self.duration, "dt_sample": self.dt_sample,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# wecmarl wave episode\n")
        buf.write("# " + " ".join(f"{k}={v!r}" for k, v in self.header().items()) + "\n")
        buf.write("frequency_hz,amplitude_m,phase_rad\n")
        for row in zip(self.frequencies, self.amplitudes, self.phases):
            buf.write(",".join(repr(float(x)) for x in row) + "\n")
        return buf.getvalue()

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def read_csv(cls, path) -> "WaveEpisode":
        lines = Path(path).read_text().splitlines()
        if not lines or not lines[0].startswith("# wecmarl wave episode"):
            raise DomainError(f"{path}: not a wave episode file")
        meta = dict(item.split("=", 1) for item in lines[1][2:].split())
        meta = {k: ast.literal_eval(v) for k, v in meta.items()}
        params = WaveSpectrumParams(meta["Hs"], meta["Tp"], meta["gamma"], int(meta["n_components"]),
                                    (meta["f_min"], meta["f_max"]))
        table = np.loadtxt(lines[3:], delimiter=",", ndmin=2)
        return cls(params, int(meta["seed"]), table[:, 0], table[:, 1], table[:, 2],
                   meta["duration"], meta["dt_sample"])


def synthesize_episode(params: WaveSpectrumParams, seed: int, duration: float,
                       dt_sample: float = 0.2) -> WaveEpisode:
    """Random-phase realisation of ``params``; bit-identical for equal inputs."""
    if not (np.isfinite(duration) and duration > 0):
        raise DomainError(f"duration must be > 0, got {duration}")
    freqs, df = params.grid()
    amps = np.sqrt(2.0 * np.asarray(jonswap_density(freqs, params)).reshape(-1) * df)
    rng = np.random.default_rng(seed)
    phases = np.mod(rng.uniform(0.0, TWO_PI, size=len(freqs)), TWO_PI)
    return WaveEpisode(params, int(seed), freqs, amps, phases, float(duration), dt_sample)


def regular_wave(height: float, period: float, duration: float, phase: float = 0.0) -> WaveEpisode:
    """Monochromatic episode with amplitude ``height / 2`` at exactly ``1/period``."""
    params = WaveSpectrumParams.monochromatic(height, period)
    return WaveEpisode(params, 0, [1.0 / period], [height / 2.0], [phase % TWO_PI], float(duration))
