"""Fast self-checks of the core invariants, used by ``wecmarl check``.

Each check returns a :class:`CheckResult` naming the measured value and
the tolerance it was held to.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .baseline import SpringDamperController
from .waves import WaveSpectrumParams, band_energy, synthesize_episode
from .wec.env import SeaConfig, WecEnv
from .wec.geometry import SimConfig, default_geometry, default_pto


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""

    def __post_init__(self):
        self.passed, self.value, self.tolerance = bool(self.passed), float(self.value), float(self.tolerance)

    def to_dict(self) -> dict:
        return asdict(self)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag}  {self.name:<18} value={self.value:.3e}  tolerance={self.tolerance:.1e}  {self.detail}"


def parseval_check(tol: float = 1e-3) -> CheckResult:
    """Component variance sum(a^2)/2 against the band integral of the spectrum."""
    params = WaveSpectrumParams(2.0, 10.0, 3.3, 256)
    ep = synthesize_episode(params, 0, 200.0)
    m0 = band_energy(params)
    err = abs(0.5 * float(np.sum(ep.amplitudes**2)) - m0) / m0
    return CheckResult("parseval", err < tol, err, tol, "Hs=2 m, Tp=10 s, 256 components")


def gradient_check(tol: float = 1e-4, trials: int = 5, seed: int = 0) -> CheckResult:
    """Analytic loss gradient against central differences on small random networks."""
    from .rl import policy as pol

    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        spec = pol.AgentSpec(int(rng.integers(2, 6)), int(rng.integers(1, 3)), 2.0, (6, 5), -0.3)
        params = pol.init_agent(spec, rng)
        params.flat[:] += 0.3 * rng.standard_normal(spec.n_params)
        n = int(rng.integers(2, 7))
        obs = rng.standard_normal((n, spec.d_in))
        u = rng.standard_normal((n, spec.d_out))
        ret = rng.standard_normal(n)
        grad, _ = pol.compute_gradients(params, obs, u, ret, 0.05, clip_norm=None)
        adv = ret - pol.value_of(params, obs)
        fd = np.empty_like(grad)
        h = 1e-6
        for i in range(spec.n_params):
            p = params.copy()
            p.flat[i] += h
            up = pol.segment_loss(p, obs, u, ret, adv, 0.05)
            p.flat[i] -= 2 * h
            dn = pol.segment_loss(p, obs, u, ret, adv, 0.05)
            fd[i] = (up - dn) / (2 * h)
        err = np.linalg.norm(grad - fd) / max(np.linalg.norm(fd), 1e-12)
        worst = max(worst, float(err))
    return CheckResult("gradient", worst < tol, worst, tol, f"{trials} random nets, central differences")


def energy_check(sim: SimConfig | None = None, duration: float = 40.0, tol: float = 1e-3,
                 dt_sim: float | None = None, tier: str = "coupled") -> CheckResult:
    """Energy balance residual over a spring-damper trajectory in irregular waves.

    ``dt_sim`` overrides the integrator step; the control interval is then
    rounded up to a whole number of integrator steps.
    """
    sim = sim or SimConfig()
    if dt_sim is not None:
        n = max(1, round(sim.dt_control / dt_sim))
        sim = replace(sim, dt_sim=float(dt_sim), dt_control=n * float(dt_sim))
    geom = default_geometry(tier)
    env = WecEnv(geom, default_pto(geom), sim, sea=SeaConfig(periods=(10.0,), duration=duration))
    view = env.reset(10.0, 1)
    start = view.state
    ctrl = SpringDamperController()
    while True:
        res = env.step(ctrl(view))
        view = res.view
        if res.done:
            break
    resid, scale = env.model.energy_residual(start, view.state)
    rel = abs(resid) / scale if math.isfinite(resid) and scale > 0 else math.inf
    faults = ",".join(view.state.fault_names) or "none"
    return CheckResult("energy", rel < tol, rel, tol,
                       f"dt_sim={sim.dt_sim} s, {duration:g} s SD trajectory, faults: {faults}")


def mirror_check(tol: float = 1e-12, seed: int = 0) -> CheckResult:
    """Involution on random vectors and agreement with the physically reflected state."""
    from .marl.mirror import mirror_observation
    from .wec.observation import ObservationLayout, observation

    rng = np.random.default_rng(seed)
    layout = ObservationLayout()
    x = rng.standard_normal((16, layout.dim))
    err = float(np.max(np.abs(mirror_observation(mirror_observation(x, layout), layout) - x)))
    env = WecEnv(sea=SeaConfig(periods=(10.0,), duration=20.0))
    view = env.reset(10.0, 3)
    ctrl = SpringDamperController()
    for _ in range(40):
        cmd = ctrl(view) + np.array([0.0, 2e4, -2e4])  # break the symmetry
        view = env.step(cmd).view
    reflected = observation(view.state.mirrored(), view.wave, layout, env.geometry.nominal_lengths)
    scale = max(1.0, float(np.max(np.abs(reflected))))
    err = max(err, float(np.max(np.abs(mirror_observation(view.vector, layout) - reflected))) / scale)
    return CheckResult("mirror", err < tol, err, tol, "involution and reflected-state agreement")


def freeze_check(steps: int = 400, seed: int = 0) -> CheckResult:
    """A short skip stage must leave the frozen agent's checkpoint bytes unchanged."""
    import tempfile

    from .evaluation import EvalProtocol
    from .marl.schedule import TrainingSchedule, hybrid_init, skip
    from .marl.trainer import TrainConfig, run_schedule
    from .rl.a3c import A3cConfig

    stages = [hybrid_init("back", steps=steps // 2, eval_every=steps // 2),
              skip("front", steps=steps, eval_every=steps // 2)]
    sched = TrainingSchedule(stages, name="freeze-check")
    cfg = TrainConfig(hidden=(16, 16), seed=seed, a3c=A3cConfig(lr=1e-3, optimizer="adam", reward_scale=1e-5),
                      sea=SeaConfig(duration=40.0),
                      eval=EvalProtocol(periods=(10.0,), episodes=1, duration=20.0, warmup=0.0, seed_base=5))
    with tempfile.TemporaryDirectory() as tmp:
        rep = run_schedule(sched, cfg, tmp).stages[-1]
    same = rep.frozen_before == rep.frozen_after and bool(rep.frozen_before)
    return CheckResult("freeze", same, 0.0 if same else 1.0, 0.0,
                       f"skip stage of {rep.steps} steps, frozen: {sorted(rep.frozen_before)}")


CHECKS = {
    "parseval": parseval_check,
    "gradient": gradient_check,
    "energy": energy_check,
    "mirror": mirror_check,
    "freeze": freeze_check,
}


def run_checks(names=None, dt_sim: float | None = None) -> list[CheckResult]:
    out = []
    for name in names or CHECKS:
        if name == "energy":
            out.append(energy_check(dt_sim=dt_sim))
        else:
            out.append(CHECKS[name]())
    return out
