import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wecmarl.checks import energy_check
from wecmarl.waves import WaveEpisode, WaveSpectrumParams, regular_wave
from wecmarl.wec import kernels
from wecmarl.wec.dynamics import WecModel, step
from wecmarl.wec.env import SeaConfig, WecEnv
from wecmarl.wec.geometry import (MIRROR_DOF, MIRROR_LEGS, ConfigError, PtoConfig, SimConfig,
                                  default_geometry, default_pto)
from wecmarl.wec.kinematics import tether_extension, tether_jacobian
from wecmarl.wec.observation import ObservationLayout, observation
from wecmarl.wec.pto import instantaneous_power, pto_force

INCLINATION = math.radians(35.0)
LEG_LENGTH = 30.0 / math.cos(INCLINATION)  # 30 m drop at 35 degrees from vertical


@pytest.fixture(scope="module")
def geom():
    return default_geometry()


def calm(duration=20.0):
    return WaveEpisode(WaveSpectrumParams.monochromatic(2.0, 10.0), 0, [0.1], [0.0], [0.0], duration)


# --- kinematics ------------------------------------------------------------------------

def test_rest_lengths(geom):
    np.testing.assert_allclose(tether_extension(geom, np.zeros(6)), LEG_LENGTH, rtol=1e-12)


def test_heave_lengthens_all_legs_equally(geom):
    g0 = tether_extension(geom, np.zeros(6))
    g = tether_extension(geom, [0, 0, 0.1, 0, 0, 0])
    d = g - g0
    assert np.all(d > 0)
    np.testing.assert_allclose(d, d[0], rtol=1e-12)


def test_sway_swaps_back_legs(geom):
    gp = tether_extension(geom, [0, 0.1, 0, 0, 0, 0])
    gm = tether_extension(geom, [0, -0.1, 0, 0, 0, 0])
    assert gp[1] != pytest.approx(gp[2])
    assert gp[1] == pytest.approx(gm[2], rel=1e-14)
    assert gp[2] == pytest.approx(gm[1], rel=1e-14)
    assert gp[0] == pytest.approx(gm[0], rel=1e-14)


def test_jacobian_heave_column_is_leg_cosine(geom):
    jac = tether_jacobian(geom, np.zeros(6))
    np.testing.assert_allclose(jac[:, 2], math.cos(INCLINATION), rtol=1e-12)


def test_rotation_outside_regime_rejected(geom):
    with pytest.raises(ValueError):
        tether_extension(geom, [0, 0, 0, 0.6, 0, 0])


pose_st = st.lists(st.floats(-1.0, 1.0), min_size=6, max_size=6).map(
    lambda v: np.array(v) * np.array([1, 1, 1, 0.3, 0.3, 0.3]))


@settings(max_examples=40, deadline=None)
@given(pose=pose_st)
def test_jacobian_matches_finite_differences(pose):
    geom = default_geometry()
    jac = tether_jacobian(geom, pose)
    h = 1e-6
    fd = np.empty((3, 6))
    for i in range(6):
        d = np.zeros(6)
        d[i] = h
        fd[:, i] = (tether_extension(geom, pose + d) - tether_extension(geom, pose - d)) / (2 * h)
    assert np.linalg.norm(jac - fd) / np.linalg.norm(fd) < 1e-6


@settings(max_examples=40, deadline=None)
@given(pose=pose_st)
def test_jacobian_mirror_symmetry(pose):
    geom = default_geometry()
    jac = tether_jacobian(geom, pose)
    jm = tether_jacobian(geom, pose * MIRROR_DOF)
    np.testing.assert_allclose(jm, jac[MIRROR_LEGS] * MIRROR_DOF, atol=1e-12)


# --- PTO -------------------------------------------------------------------------------

def test_rest_pto():
    pto = PtoConfig(1e5, 30.0)
    assert pto_force(pto, 0.0, 30.0) == (0.0, 0.0, 0.0)
    f_pto, f_gen, t = pto_force(replace(pto, tension_min=1000.0), 0.0, 30.0)
    assert t == 1000.0 and f_gen == -1000.0 and f_pto == -1000.0


def test_generator_saturation():
    pto = PtoConfig(1e5, 30.0, gen_force_max=2e5)
    assert pto_force(pto, 4e5, 30.0)[1] == 2e5
    assert pto_force(pto, -4e5, 30.0)[1] == -2e5


def test_tension_floor_solved_by_hand():
    # spring force -1e5 N; command +2e5 N would leave T = -1e5 N below the -5e4 N floor,
    # so the generator backs off to 1.5e5 N and T sits exactly on the floor
    pto = PtoConfig(1e5, 30.0, gen_force_max=2e5, tension_min=-5e4, tension_max=1e6)
    f_pto, f_gen, t = pto_force(pto, 2e5, 31.0)
    assert t == -5e4
    assert f_gen == 1.5e5
    assert f_pto == 5e4


@settings(max_examples=200, deadline=None)
@given(cmd=st.floats(-1e6, 1e6), stretch=st.floats(-5.0, 5.0), k=st.floats(0.0, 5e5))
def test_clamp_safety(cmd, stretch, k):
    f_max, t_min, t_max = 2e5, -1.5e6, 1e6
    f_pto, f_gen, t, bad = kernels.pto_clamp(cmd, 30.0 + stretch, k, 30.0, f_max, t_min, t_max)
    assert t_min <= t <= t_max
    assert t == pytest.approx(-f_pto, abs=1e-6)
    if not bad:
        assert abs(f_gen) <= f_max
    else:  # tension clamp wins over the rating
        assert t in (t_min, t_max)


def test_pto_config_validation():
    with pytest.raises(ConfigError):
        PtoConfig(-1.0, 30.0)
    with pytest.raises(ConfigError):
        PtoConfig(1.0, 30.0, tension_min=1.0, tension_max=0.0)
    with pytest.raises(ConfigError):
        SimConfig(dt_sim=0.03, dt_control=0.2)


# --- power -----------------------------------------------------------------------------

def test_power_sign_convention():
    assert instantaneous_power(0.0, 3.0) == 0.0
    assert instantaneous_power(-1000.0, 0.5) == 500.0


def test_damper_average_power():
    c, amp, w = 2000.0, 0.7, 2 * np.pi / 10.0
    t = np.linspace(0.0, 100.0, 200001)[:-1]
    gd = amp * np.sin(w * t)
    p = instantaneous_power(-c * gd, gd)
    assert np.mean(p) == pytest.approx(c * amp**2 / 2, rel=1e-9)


# --- step ------------------------------------------------------------------------------

def test_equilibrium_is_fixed_point(geom):
    pto, sim = default_pto(geom), SimConfig()
    model = WecModel(geom, pto, sim)
    s = model.equilibrium()
    ep = calm()
    for _ in range(20):
        s, energy = step(s, np.zeros(3), ep, sim, geom, pto)
        assert np.all(energy == 0.0)
    np.testing.assert_allclose(s.pose, 0.0, atol=1e-12)
    np.testing.assert_allclose(s.velocity, 0.0, atol=1e-12)


def test_free_decay_energy_non_increasing(geom):
    pto, sim = default_pto(geom), SimConfig()
    model = WecModel(geom, pto, sim)
    s = model.initial_state([0.3, -0.2, 0.5, 0.02, -0.03, 0.01], np.zeros(6))
    ep = calm(60.0)
    energies = [model.stored_energy(s)]
    for _ in range(250):
        s, _ = step(s, np.zeros(3), ep, sim, geom, pto)
        energies.append(model.stored_energy(s))
    e = np.array(energies)
    assert np.all(np.diff(e) <= 1e-9 * abs(e[0]))
    assert e[-1] < 0.5 * e[0]


@settings(max_examples=15, deadline=None)
@given(pose=pose_st, vel=pose_st, cmd=st.lists(st.floats(-2e5, 2e5), min_size=3, max_size=3))
def test_step_commutes_with_mirror(pose, vel, cmd):
    geom = default_geometry()
    pto, sim = default_pto(geom), SimConfig()
    model = WecModel(geom, pto, sim)
    ep = regular_wave(2.0, 10.0, 20.0, phase=1.0)
    cmd = np.array(cmd)
    a = model.initial_state(0.2 * pose, 0.2 * vel)
    b = model.initial_state(0.2 * pose * MIRROR_DOF, 0.2 * vel * MIRROR_DOF)
    na, ea = step(a, cmd, ep, sim, geom, pto)
    nb, eb = step(b, cmd[MIRROR_LEGS], ep, sim, geom, pto)
    ma = na.mirrored()
    for x, y in ((ma.pose, nb.pose), (ma.velocity, nb.velocity), (ma.extension, nb.extension),
                 (ma.tension, nb.tension), (ea[MIRROR_LEGS], eb)):
        assert np.max(np.abs(x - y)) <= 1e-10 * max(1.0, np.max(np.abs(y)))


def test_step_past_episode_end(geom):
    pto, sim = default_pto(geom), SimConfig()
    s = WecModel(geom, pto, sim).equilibrium(time=19.9)
    with pytest.raises(ValueError):
        step(s, np.zeros(3), calm(20.0), sim, geom, pto)


@pytest.mark.parametrize("dt_sim,tol", [(0.05, 1e-3), (0.005, 1e-5)])
def test_energy_accounting(dt_sim, tol):
    res = energy_check(duration=200.0, dt_sim=dt_sim, tol=tol)
    assert res.passed, res.line()


def test_semi_implicit_euler_energy_accounting_improves_with_dt():
    coarse = energy_check(SimConfig(integrator="semi-implicit-euler"), duration=40.0)
    fine = energy_check(SimConfig(dt_sim=0.005, integrator="semi-implicit-euler"), duration=40.0)
    assert fine.value < coarse.value / 5


def _trajectory(dt_sim, integrator, seconds=10.0):
    geom = default_geometry()
    sim = SimConfig(dt_sim=dt_sim, dt_control=0.2, integrator=integrator)
    env = WecEnv(geom, sim=sim, sea=SeaConfig(periods=(10.0,), duration=seconds, monochromatic=True))
    view = env.reset(10.0, 0)
    out = []
    for k in range(int(round(seconds / 0.2))):
        cmd = 5e4 * np.array([math.sin(0.3 * k), math.cos(0.2 * k), 0.5])
        view = env.step(cmd).view
        out.append(np.concatenate([view.state.pose, view.state.velocity]))
    return np.array(out)


@pytest.mark.parametrize("integrator,low,high", [("rk4", 10.0, 24.0), ("semi-implicit-euler", 1.6, 2.6)])
def test_convergence_order(integrator, low, high):
    ref = _trajectory(0.0005, "rk4")
    e1 = np.max(np.abs(_trajectory(0.05, integrator) - ref))
    e2 = np.max(np.abs(_trajectory(0.025, integrator) - ref))
    assert low < e1 / e2 < high


# --- observation -----------------------------------------------------------------------

@pytest.mark.parametrize("preset,dim", [("step1", 14), ("step2", 17), ("step3", 27), ("step4", 30), ("full", 33)])
def test_layout_dims(preset, dim):
    assert ObservationLayout.preset(preset).dim == dim


def test_step1_blocks():
    assert [n for n, _ in ObservationLayout.preset("step1").blocks] == ["e", "de", "z", "dz"]
    assert "T" in dict(ObservationLayout.preset("step4").blocks)
    assert "T" not in dict(ObservationLayout.preset("step3").blocks)


def test_rest_observation(geom):
    layout = ObservationLayout.preset("full")
    s = WecModel(geom, default_pto(geom)).equilibrium()
    obs = observation(s, np.zeros(3), layout, geom.nominal_lengths)
    sl = layout.slices()["g"]
    np.testing.assert_allclose(obs[sl], 1.0)
    rest = np.delete(obs, np.arange(sl.start, sl.stop))
    assert np.all(rest == 0.0)


def test_unknown_preset():
    with pytest.raises(ConfigError):
        ObservationLayout.preset("step9")
