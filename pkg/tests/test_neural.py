import math

import numpy as np
import pytest
from scipy import stats

from scopesim.neural import (
    AdamState,
    Conv2d,
    Dense,
    Flatten,
    NetworkSpec,
    ParamLayout,
    PolicyNetwork,
    ReLU,
    RewardNetwork,
    StateActionNetwork,
    Tanh,
    adam_step,
    entropy,
    load_checkpoint,
    log_prob,
    log_prob_grads,
    log_prob_pre_squash,
    sample,
    save_checkpoint,
    unsquash,
)
from scopesim.neural.nets import log_squash_jacobian

SMALL = NetworkSpec(input_shape=(2, 9, 11), conv=((3, 3, 2), (4, 3, 1)), dense=(7,), action_dim=3)


def rel_err(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(a) + np.abs(b), 1e-6)))


def numeric_grad(f, x, h=1e-6, idx=None):
    """Central differences of scalar ``f`` with respect to ``x`` (optionally on a subset of indices)."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in idx if idx is not None else range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        gf[i] = (fp - fm) / (2 * h)
    return g


def check_layer(layer, in_shape, rng, n=2):
    p = {k: rng.normal(size=s) for k, s in layer.param_shapes().items()}
    x = rng.normal(size=(n, *in_shape))
    out_shape = layer.out_shape(in_shape)
    w = rng.normal(size=(n, *out_shape))

    def loss():
        return float(np.sum(layer.forward(p, x)[0] * w))

    y, cache = layer.forward(p, x)
    assert y.shape == (n, *out_shape)
    g = {k: np.zeros_like(v) for k, v in p.items()}
    dx = layer.backward(p, cache, w, g)
    assert rel_err(dx, numeric_grad(loss, x)) < 1e-3
    for k in p:
        assert rel_err(g[k], numeric_grad(loss, p[k])) < 1e-3


@pytest.mark.parametrize("k,s", [(3, 1), (3, 2), (5, 2), (1, 1)])
def test_conv_gradients(k, s):
    check_layer(Conv2d(3, 4, k, s), (7, 8, 3), np.random.default_rng(k * 10 + s))


def test_conv_forward_matches_direct_loop():
    rng = np.random.default_rng(0)
    conv = Conv2d(2, 3, 3, 2)
    p = {k: rng.normal(size=s) for k, s in conv.param_shapes().items()}
    x = rng.normal(size=(1, 6, 7, 2))
    y, _ = conv.forward(p, x)
    w = p["w"].reshape(3, 3, 2, 3)
    xp = np.pad(x[0], ((1, 1), (1, 1), (0, 0)))
    for i in range(y.shape[1]):
        for j in range(y.shape[2]):
            patch = xp[2 * i : 2 * i + 3, 2 * j : 2 * j + 3, :]
            ref = np.einsum("abc,abco->o", patch, w) + p["b"]
            assert np.allclose(y[0, i, j], ref, atol=1e-12)


def test_dense_and_activation_gradients():
    rng = np.random.default_rng(1)
    check_layer(Dense(5, 4), (5,), rng, n=3)
    check_layer(Tanh(), (6,), rng, n=3)
    check_layer(Flatten(), (2, 3, 4), rng)
    # keep inputs away from the kink for the finite difference
    relu = ReLU()
    x = rng.normal(size=(4, 5))
    x[np.abs(x) < 0.1] = 0.5
    y, mask = relu.forward({}, x)
    w = rng.normal(size=x.shape)
    dx = relu.backward({}, mask, w, {})
    assert rel_err(dx, numeric_grad(lambda: float(np.sum(relu.forward({}, x)[0] * w)), x)) < 1e-3


def test_layer_shape_errors():
    with pytest.raises(ValueError):
        Conv2d(3, 4).out_shape((5, 5, 2))
    with pytest.raises(ValueError):
        Conv2d(1, 1, 3, 4).out_shape((0, 0, 1))
    with pytest.raises(ValueError):
        Dense(3, 2).out_shape((4,))
    with pytest.raises(ValueError):
        ParamLayout([("a", (2,)), ("a", (3,))])


@pytest.mark.parametrize("state_std", [False, True])
def test_policy_network_gradients(state_std):
    from dataclasses import replace

    spec = replace(SMALL, state_dependent_std=state_std, log_std_init=-0.3)
    net = PolicyNetwork(spec, dtype=np.float64)
    rng = np.random.default_rng(2)
    params = net.init_params(rng) + rng.normal(0, 0.05, net.layout.size)
    obs = rng.normal(size=(3, *spec.input_shape))
    wm, ws, wv = rng.normal(size=(3, 3)), rng.normal(size=(3, 3)), rng.normal(size=3)

    def loss():
        out, _ = net.forward(params, obs)
        return float(np.sum(out.mean * wm) + np.sum(out.log_std * ws) + np.sum(out.value * wv))

    out, cache = net.forward(params, obs)
    g = net.backward(params, cache, wm, ws, wv)
    idx = rng.choice(net.layout.size, 120, replace=False)
    num = numeric_grad(loss, params, idx=idx)
    assert rel_err(g[idx], num[idx]) < 1e-3
    # every log_std entry, the smallest parameter group
    for name, sl in net.layout.slices().items():
        if name in ("log_std", "pi.b", "v.b"):
            r = range(sl.start, sl.stop)
            assert rel_err(g[sl], numeric_grad(loss, params, idx=r)[sl]) < 1e-3


def test_policy_log_std_clamp_blocks_gradient():
    net = PolicyNetwork(SMALL, dtype=np.float64)
    params = net.init_params(np.random.default_rng(0))
    sl = net.layout.slices()["log_std"]
    params[sl] = [-9.0, 0.0, 3.0]
    out, cache = net.forward(params, np.zeros((2, *SMALL.input_shape)))
    assert np.allclose(out.log_std[0], [-5.0, 0.0, 2.0])
    g = net.backward(params, cache, d_log_std=np.ones((2, 3)))
    assert np.allclose(g[sl], [0.0, 2.0, 0.0])


def test_reward_and_state_action_gradients():
    rng = np.random.default_rng(3)
    spec = NetworkSpec(input_shape=(2, 9, 11), conv=((3, 5, 4), (4, 3, 2)), dense=(5, 5), action_dim=3)
    obs = rng.normal(size=(3, *spec.input_shape))
    acts = rng.uniform(-1, 1, (3, 3))
    w = rng.normal(size=3)
    r = RewardNetwork(spec, dtype=np.float64, prefix="h_")
    p = r.init_params(rng)
    y, c = r.forward(p, obs)
    g = r.backward(p, c, w)
    assert rel_err(g, numeric_grad(lambda: float(r.forward(p, obs)[0] @ w), p)) < 1e-3
    assert all(n.startswith("h_") for n, *_ in r.layout.entries)
    sa = StateActionNetwork(spec, dtype=np.float64)
    q = sa.init_params(rng)
    y, c = sa.forward(q, obs, acts)
    g = sa.backward(q, c, w)
    assert rel_err(g, numeric_grad(lambda: float(sa.forward(q, obs, acts)[0] @ w), q)) < 1e-3


def test_observation_shape_mismatch():
    net = PolicyNetwork(SMALL)
    with pytest.raises(ValueError):
        net.forward(net.init_params(np.random.default_rng(0)), np.zeros((1, 2, 10, 11)))


# --- distributions ---------------------------------------------------------------------

def _out(mean, log_std):
    from scopesim.neural import GaussianPolicyOutput

    return GaussianPolicyOutput(np.asarray(mean, float), np.asarray(log_std, float), np.zeros(len(mean)))


def test_log_prob_matches_scipy_change_of_variables():
    rng = np.random.default_rng(4)
    mean, ls = rng.normal(size=(5, 3)), rng.uniform(-1, 0.5, (5, 3))
    out = _out(mean, ls)
    u = rng.normal(size=(5, 3))
    ref = stats.norm.logpdf(u, mean, np.exp(ls)).sum(axis=1) - np.log(1 - np.tanh(u) ** 2).sum(axis=1)
    assert np.allclose(log_prob_pre_squash(out, u), ref, atol=1e-10)
    assert np.allclose(log_prob(out, np.tanh(u)), ref, atol=1e-6)
    assert np.allclose(entropy(out), stats.norm.entropy(0, np.exp(ls)).sum(axis=1), atol=1e-12)


def test_squash_jacobian_stable_for_large_u():
    u = np.array([0.0, 1.0, 10.0, 30.0, -30.0])
    ref = np.log(1 - np.tanh(u[:2]) ** 2)
    j = log_squash_jacobian(u)
    assert np.allclose(j[:2], ref, atol=1e-12)
    assert np.all(np.isfinite(j)) and j[3] == pytest.approx(math.log(4) - 60, abs=1e-9)
    assert np.all(np.isfinite(unsquash(np.array([-1.0, 1.0]))))


def test_log_prob_grads_match_finite_differences():
    rng = np.random.default_rng(5)
    mean, ls = rng.normal(size=(1, 3)), rng.uniform(-1, 0, (1, 3))
    u = rng.normal(size=(1, 3))
    dm, dls = log_prob_grads(_out(mean, ls), u)
    f = lambda: float(log_prob_pre_squash(_out(mean, ls), u)[0])  # noqa: E731
    assert rel_err(dm, numeric_grad(f, mean)) < 1e-6
    assert rel_err(dls, numeric_grad(f, ls)) < 1e-6


def test_sampling_statistics():
    out = _out(np.full((20_000, 1), 0.3), np.full((20_000, 1), math.log(0.2)))
    a, u, lp = sample(out, np.random.default_rng(6))
    assert np.all(np.abs(a) < 1)
    assert abs(u.mean() - 0.3) < 0.01 and abs(u.std() - 0.2) < 0.01
    assert np.allclose(lp, log_prob_pre_squash(out, u))


# --- Adam -------------------------------------------------------------------------------

def adam_scalar_oracle(x0, grad_fn, lr, steps, b1=0.9, b2=0.999, eps=1e-8):
    x, m, v = x0, 0.0, 0.0
    xs = []
    for t in range(1, steps + 1):
        g = grad_fn(x)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x = x - lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
        xs.append(x)
    return xs


def test_adam_matches_scalar_recursion():
    grad = lambda x: 2 * (x - 3.0) + math.cos(x)  # noqa: E731
    ref = adam_scalar_oracle(0.5, grad, 0.05, 300)
    p = np.array([0.5])
    st = AdamState.zeros_like(p)
    for t in range(300):
        adam_step(p, np.array([grad(p[0])]), st, 0.05)
        assert p[0] == pytest.approx(ref[t], abs=1e-12)
    assert st.t == 300


def test_adam_first_step_is_lr_sign():
    p = np.array([1.0, -2.0, 0.0])
    adam_step(p, np.array([0.3, -5.0, 0.0]), AdamState.zeros_like(p), 0.1)
    assert np.allclose(p, [0.9, -1.9, 0.0], atol=1e-6)


def test_adam_skips_nonfinite_and_clips():
    p = np.array([1.0, 1.0])
    st = AdamState.zeros_like(p)
    assert not adam_step(p, np.array([np.nan, 0.0]), st, 0.1)
    assert st.t == 0 and st.skipped == 1 and np.array_equal(p, [1.0, 1.0])
    assert adam_step(p, np.array([0.0, 0.0]), st, 0.1)
    assert st.t == 1 and np.array_equal(p, [1.0, 1.0])
    q = np.array([0.0, 0.0])
    sq = AdamState.zeros_like(q)
    adam_step(q, np.array([30.0, 40.0]), sq, 0.1, max_grad_norm=5.0)
    assert np.allclose(sq.m, 0.1 * np.array([3.0, 4.0]))
    with pytest.raises(ValueError):
        adam_step(q, np.zeros(3), sq, 0.1)


# --- checkpoints -------------------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    net = PolicyNetwork(SMALL)
    params = net.init_params(np.random.default_rng(7))
    path = save_checkpoint(tmp_path / "ck", {"policy": params, "extra": np.arange(3.0)}, {"kind": "policy", "spec": SMALL.to_dict()})
    arrays, meta = load_checkpoint(path)
    assert np.array_equal(arrays["policy"], params) and arrays["policy"].dtype == np.float32
    assert NetworkSpec.from_dict(meta["spec"]) == SMALL
    obs = np.random.default_rng(8).normal(size=(2, *SMALL.input_shape))
    assert np.array_equal(net.forward(arrays["policy"], obs)[0].mean, net.forward(params, obs)[0].mean)
    blob = tmp_path / "ck.bin"
    data = bytearray(blob.read_bytes())
    data[0] ^= 1
    blob.write_bytes(bytes(data))
    with pytest.raises(ValueError):
        load_checkpoint(path)
