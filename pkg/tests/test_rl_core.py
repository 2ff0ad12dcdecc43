import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from wecmarl.rl import mlp
from wecmarl.rl import policy as pol
from wecmarl.rl.a3c import A3cConfig, GlobalStore, StepBudget, StreamStep, Worker, worker_loop
from wecmarl.rl.checkpoint import CheckpointError, load_checkpoint, load_state, save_checkpoint, save_state
from wecmarl.rl.returns import n_step_returns


def random_agent(rng, d_in=4, d_out=2, hidden=(2,), scale=0.5):
    spec = pol.AgentSpec(d_in, d_out, 1.0, hidden, -0.3)
    p = pol.init_agent(spec, rng)
    p.flat[:] += scale * rng.standard_normal(spec.n_params)
    return p


# --- networks --------------------------------------------------------------------------

def test_zero_network():
    spec = pol.AgentSpec(5, 2, 1.0, (8, 8))
    p = pol.AgentParams(spec, np.zeros(spec.n_params))
    mean, log_std, v = pol.forward(p, np.random.default_rng(0).standard_normal((7, 5)))
    assert np.all(mean == 0) and np.all(v == 0)


def test_forward_matches_matrix_chain(rng):
    sizes = (6, 5, 4, 3)
    params = mlp.init_mlp(sizes, rng)
    params.flat[:] += 0.1 * rng.standard_normal(params.flat.size)
    x = rng.standard_normal((9, 6))
    # independent recomputation from the documented flat layout: per layer W (in x out) then b
    off, h = 0, x
    for k, (i, o) in enumerate(zip(sizes[:-1], sizes[1:])):
        w = params.flat[off:off + i * o].reshape(i, o)
        b = params.flat[off + i * o:off + i * o + o]
        off += i * o + o
        h = h @ w + b
        if k < 2:
            h = np.where(h > 0, h, 0.0)
    out, _ = mlp.forward(params.flat, sizes, x)
    np.testing.assert_allclose(out, h, rtol=1e-14, atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), lam=st.floats(0.01, 100.0))
def test_positive_homogeneity_without_biases(seed, lam):
    rng = np.random.default_rng(seed)
    sizes = (4, 7, 7, 2)
    params = mlp.init_mlp(sizes, rng)
    for _, b in mlp.views(params.flat, sizes):
        b[:] = 0.0
    x = rng.standard_normal((5, 4))
    y1, _ = mlp.forward(params.flat, sizes, lam * x)
    y0, _ = mlp.forward(params.flat, sizes, x)
    np.testing.assert_allclose(y1, lam * y0, rtol=1e-10, atol=1e-12)


def test_shape_mismatch():
    spec = pol.AgentSpec(5, 1, 1.0, (4,))
    p = pol.init_agent(spec, np.random.default_rng(0))
    with pytest.raises(mlp.ShapeError):
        pol.forward(p, np.zeros(6))
    with pytest.raises(mlp.ShapeError):
        pol.AgentParams(spec, np.zeros(3))


# --- action distribution ---------------------------------------------------------------

def test_near_deterministic_zero_mean(rng):
    a, _, _ = pol.sample_action(np.zeros(3), np.full(3, -5.0), rng, 2e5)
    assert np.all(np.abs(a) < 0.05 * 2e5)


def test_saturation(rng):
    a, _, _ = pol.sample_action(np.full(2, 50.0), np.zeros(2), rng, 2e5)
    np.testing.assert_allclose(a, 2e5)


def test_log_prob_against_histogram():
    # bin frequencies of 10^6 samples against the log-prob density integrated over each bin
    rng = np.random.default_rng(2024)
    f_max, mean, log_std = 3.0, np.array([0.4]), np.array([-0.2])
    a, _, _ = pol.sample_action(np.tile(mean, (1_000_000, 1)), log_std, rng, f_max)
    counts, edges = np.histogram(a[:, 0], bins=30, range=(-f_max, f_max))

    def density(x):
        return float(np.exp(pol.squashed_log_prob(np.array([[np.arctanh(x / f_max)]]), mean, log_std, f_max))[0])

    prob = np.array([quad(density, lo, hi)[0] for lo, hi in zip(edges[:-1], edges[1:])])
    core = prob > 0.01
    assert np.max(np.abs(counts[core] / len(a) / prob[core] - 1.0)) < 0.02


def test_deterministic_mode_variance():
    rng = np.random.default_rng(1)
    f_max = 2e5
    a, _, _ = pol.sample_action(np.zeros((20000, 1)), np.array([pol.LOG_STD_MIN]), rng, f_max)
    assert np.var(a) < 1e-3 * f_max**2


def test_log_std_clamped_in_forward():
    spec = pol.AgentSpec(2, 1, 1.0, (3,), init_log_std=-9.0)
    p = pol.init_agent(spec, np.random.default_rng(0))
    assert pol.forward(p, np.zeros(2))[1][0] == pol.LOG_STD_MIN


# --- returns ---------------------------------------------------------------------------

def test_returns_examples():
    np.testing.assert_allclose(n_step_returns([1.0, 2.0, 3.0], 0.0, 99.0), [1.0, 2.0, 3.0])
    np.testing.assert_allclose(n_step_returns([1.0, 1.0, 1.0], 0.9), [2.71, 1.9, 1.0])
    assert n_step_returns([0.0], 0.5, 10.0)[0] == 5.0
    with pytest.raises(ValueError):
        n_step_returns([], 0.9)


@settings(max_examples=50, deadline=None)
@given(r=st.lists(st.floats(-10, 10), min_size=1, max_size=30), g=st.floats(0, 0.999), b=st.floats(-50, 50))
def test_returns_recursion(r, g, b):
    out = n_step_returns(r, g, b)
    expect = [sum(g**j * r[i + j] for j in range(len(r) - i)) + g ** (len(r) - i) * b for i in range(len(r))]
    np.testing.assert_allclose(out, expect, rtol=1e-9, atol=1e-9)


# --- gradients -------------------------------------------------------------------------

def fd_gradient(params, obs, u, ret, ent, h=1e-6):
    adv = ret - pol.value_of(params, obs)
    out = np.empty(params.spec.n_params)
    for i in range(params.spec.n_params):
        p = params.copy()
        p.flat[i] += h
        up = pol.segment_loss(p, obs, u, ret, adv, ent)
        p.flat[i] -= 2 * h
        dn = pol.segment_loss(p, obs, u, ret, adv, ent)
        out[i] = (up - dn) / (2 * h)
    return out


def test_gradient_toy_4_2_2(rng):
    p = random_agent(rng)
    obs, u, ret = rng.standard_normal((5, 4)), rng.standard_normal((5, 2)), rng.standard_normal(5)
    g, _ = pol.compute_gradients(p, obs, u, ret, 0.01)
    fd = fd_gradient(p, obs, u, ret, 0.01)
    assert np.linalg.norm(g - fd) / np.linalg.norm(fd) < 1e-4


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), d_in=st.integers(1, 6), d_out=st.integers(1, 3),
       h1=st.integers(1, 6), h2=st.integers(1, 6), n=st.integers(1, 8))
def test_gradient_oracle_random_nets(seed, d_in, d_out, h1, h2, n):
    rng = np.random.default_rng(seed)
    p = random_agent(rng, d_in, d_out, (h1, h2), scale=0.3)
    obs, u, ret = rng.standard_normal((n, d_in)), rng.standard_normal((n, d_out)), rng.standard_normal(n)
    g, _ = pol.compute_gradients(p, obs, u, ret, 0.05)
    fd = fd_gradient(p, obs, u, ret, 0.05)
    assert np.linalg.norm(g - fd) <= 1e-4 * max(np.linalg.norm(fd), 1e-8)


def test_zero_advantage_leaves_entropy_term_only(rng):
    p = random_agent(rng, hidden=(5, 5))
    obs, u = rng.standard_normal((6, 4)), rng.standard_normal((6, 2))
    ret = pol.value_of(p, obs)
    g, _ = pol.compute_gradients(p, obs, u, ret, 0.2)
    gp, gl, gv = p.spec.split(g)
    assert np.all(gp == 0) and np.all(gv == 0)
    np.testing.assert_allclose(gl, -0.2 * 6)


def test_doubling_advantages_doubles_gradient(rng):
    p = random_agent(rng, hidden=(5, 5))
    obs, u, ret = rng.standard_normal((6, 4)), rng.standard_normal((6, 2)), rng.standard_normal(6)
    v = pol.value_of(p, obs)
    g1, _ = pol.compute_gradients(p, obs, u, ret, 0.0)
    g2, _ = pol.compute_gradients(p, obs, u, v + 2 * (ret - v), 0.0)
    np.testing.assert_allclose(g2, 2 * g1, rtol=1e-10, atol=1e-12)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_gradient_is_a_fault(rng):
    p = random_agent(rng)
    with pytest.raises(pol.TrainingFault):
        pol.compute_gradients(p, np.zeros((2, 4)), np.zeros((2, 2)), np.array([np.inf, 0.0]), 0.0)


def test_clipping_bounds_norm(rng):
    p = random_agent(rng, hidden=(5, 5))
    obs, u, ret = rng.standard_normal((6, 4)), rng.standard_normal((6, 2)), 1e4 * rng.standard_normal(6)
    g, terms = pol.compute_gradients(p, obs, u, ret, 0.0, clip_norm=1.0)
    gp, gl, gv = p.spec.split(g)
    assert np.sqrt(np.sum(gp**2) + np.sum(gl**2)) <= 1.0 + 1e-12
    assert np.linalg.norm(gv) <= 1.0 + 1e-12
    assert terms.grad_norm_policy > 1.0


# --- global store ----------------------------------------------------------------------

def make_store(n=10, lr=0.5, optimizer="sgd"):
    spec = pol.AgentSpec(1, 1, 1.0, (2,), 0.0)
    params = pol.AgentParams(spec, np.zeros(spec.n_params))
    return GlobalStore(params, A3cConfig(lr=lr, optimizer=optimizer))


def test_two_applies_sum_exactly():
    store = make_store()
    g = np.arange(store.spec.n_params, dtype=float) - 4.0
    g[store.spec.n_policy] = 0.0  # keep log-std inside its clamp
    before = store.snapshot().flat
    store.apply(g)
    assert store.apply(g) == 2
    np.testing.assert_array_equal(store.snapshot().flat - before, -2 * 0.5 * g)


def test_concurrent_applies_commute():
    rng = np.random.default_rng(3)
    grads = [0.01 * rng.standard_normal(make_store().spec.n_params) for _ in range(8)]
    seq = make_store(lr=1e-2)
    for g in grads:
        seq.apply(g)
    par = make_store(lr=1e-2)
    threads = [threading.Thread(target=par.apply, args=(g,)) for g in grads]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert par.version == 8
    np.testing.assert_allclose(par.snapshot().flat, seq.snapshot().flat, rtol=0, atol=1e-15)


def test_snapshots_are_consistent():
    store = make_store(lr=1.0)
    ones = np.ones(store.spec.n_params)
    ones[store.spec.n_policy] = 0.0
    stop = threading.Event()

    def writer():
        while not stop.is_set():
            store.apply(1e-3 * ones)

    t = threading.Thread(target=writer)
    t.start()
    try:
        for _ in range(2000):
            s = store.snapshot()
            # every entry moved by exactly version * 1e-3
            np.testing.assert_allclose(s.flat[ones > 0], -1e-3 * s.version, rtol=1e-9, atol=1e-15)
    finally:
        stop.set()
        t.join()


def test_store_rejects_non_finite():
    store = make_store()
    with pytest.raises(pol.TrainingFault):
        store.apply(np.full(store.spec.n_params, np.nan))


# --- workers on toy problems -----------------------------------------------------------

class Bandit:
    """One-step episodes with reward -(a - 0.3)^2 and a constant observation."""

    def reset(self):
        return {"a": np.ones((1, 1))}

    def step(self, actions):
        a = float(actions["a"][0, 0])
        return StreamStep({"a": np.ones((1, 1))}, {"a": np.array([-(a - 0.3) ** 2])}, True, True)


class ConstantReward:
    """Never-ending episode paying 1 per step."""

    def reset(self):
        return {"a": np.ones((1, 1))}

    def step(self, actions):
        return StreamStep({"a": np.ones((1, 1))}, {"a": np.ones(1)}, False, False)


def test_bandit_converges():
    spec = pol.AgentSpec(1, 1, 1.0, (16, 16), -1.0)
    cfg = A3cConfig(lr=3e-3, optimizer="adam", t_max=20, entropy_coef=0.0, reward_scale=1.0, total_steps=50_000)
    store = GlobalStore(pol.init_agent(spec, np.random.default_rng(0)), cfg)
    used = worker_loop(lambda i: Bandit(), {"a": store}, cfg, seed=0)
    assert used == 50_000
    mean_action = float(np.tanh(pol.policy_mean(store.snapshot(), np.ones((1, 1)))[0, 0]))
    assert abs(mean_action - 0.3) < 0.05


def test_constant_reward_value():
    spec = pol.AgentSpec(1, 1, 1.0, (16, 16), -1.0)
    cfg = A3cConfig(gamma=0.9, lr=1e-3, optimizer="adam", t_max=20, reward_scale=1.0, total_steps=30_000)
    store = GlobalStore(pol.init_agent(spec, np.random.default_rng(0)), cfg)
    worker_loop(lambda i: ConstantReward(), {"a": store}, cfg, seed=0)
    v = float(pol.value_of(store.snapshot(), np.ones((1, 1)))[0])
    assert v == pytest.approx(10.0, rel=0.01)


def test_empty_budget_changes_nothing():
    spec = pol.AgentSpec(1, 1, 1.0, (4,), -1.0)
    cfg = A3cConfig(total_steps=0)
    store = GlobalStore(pol.init_agent(spec, np.random.default_rng(0)), cfg)
    before = store.snapshot()
    assert worker_loop(lambda i: Bandit(), {"a": store}, cfg) == 0
    assert store.version == 0
    np.testing.assert_array_equal(store.snapshot().flat, before.flat)


def test_single_worker_bit_reproducible():
    spec = pol.AgentSpec(1, 1, 1.0, (8,), -1.0)
    cfg = A3cConfig(lr=1e-3, total_steps=3000, reward_scale=1.0)
    digests = []
    for _ in range(2):
        store = GlobalStore(pol.init_agent(spec, np.random.default_rng(5)), cfg)
        worker_loop(lambda i: Bandit(), {"a": store}, cfg, seed=11)
        digests.append(store.snapshot().digest())
    assert digests[0] == digests[1]


def test_step_budget_shared():
    b = StepBudget(10)
    assert b.take(7) == 7 and b.take(7) == 3 and b.take(1) == 0
    assert b.remaining == 0


def test_worker_counts_steps():
    spec = pol.AgentSpec(1, 1, 1.0, (4,), -1.0)
    cfg = A3cConfig(t_max=5, reward_scale=1.0)
    store = GlobalStore(pol.init_agent(spec, np.random.default_rng(0)), cfg)
    w = Worker(ConstantReward(), {"a": store}, cfg, np.random.default_rng(0))
    assert w.run(StepBudget(23)) == 23
    assert w.stats.updates == 5 and store.version == 5


@pytest.mark.parametrize("bad", [dict(gamma=1.0), dict(lr=0.0), dict(t_max=0), dict(optimizer="rmsprop")])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        A3cConfig(**bad)


# --- checkpoints -----------------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path, rng):
    p = random_agent(rng, hidden=(6, 6))
    p.version = 17
    h1 = save_checkpoint(tmp_path / "a.ckpt", p, "front", "cfg", rng_state=[1, 2])
    h2 = save_checkpoint(tmp_path / "b.ckpt", p, "front", "cfg", rng_state=[1, 2])
    assert h1 == h2
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
    back, header = load_checkpoint(tmp_path / "a.ckpt")
    assert back.version == 17 and header["config_hash"] == "cfg" and header["rng_state"] == [1, 2]
    assert header["policy_sizes"] == [4, 6, 6, 2]
    np.testing.assert_array_equal(back.flat, p.flat.astype(np.float32).astype(float))


def test_state_round_trip_is_exact(tmp_path, rng):
    p = random_agent(rng, hidden=(6,))
    opt = {"m": rng.standard_normal(p.spec.n_params), "v": rng.random(p.spec.n_params), "t": 9}
    save_state(tmp_path / "a.state", p, "back", opt)
    back, o = load_state(tmp_path / "a.state")
    np.testing.assert_array_equal(back.flat, p.flat)
    np.testing.assert_array_equal(o["m"], opt["m"])
    assert o["t"] == 9


def test_checkpoint_errors(tmp_path, rng):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.ckpt")
    (tmp_path / "junk.ckpt").write_bytes(b"hello")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "junk.ckpt")
    p = random_agent(rng)
    save_checkpoint(tmp_path / "t.ckpt", p, "x")
    data = (tmp_path / "t.ckpt").read_bytes()
    (tmp_path / "t.ckpt").write_bytes(data[:-4])
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "t.ckpt")
