import math

import numpy as np
import pytest

from dfrelay.nets import (STD_FLOOR, AdamState, CheckpointError, Mlp,
                          clip_grad_norm, gaussian_logp, gaussian_logp_grads,
                          gaussian_sample, head_upstream, load_networks,
                          log_prob_and_sample, save_networks, split_head)
from dfrelay.seeding import stream


def rel_err(a, b, floor=1e-3):
    return abs(a - b) / max(floor, abs(a), abs(b))


def fd_param_grads(loss_fn, params, h=1e-5):
    """Central finite differences of a scalar loss w.r.t. every parameter."""
    grads = []
    for p in params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + h
            up = loss_fn()
            p[idx] = orig - h
            down = loss_fn()
            p[idx] = orig
            g[idx] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def assert_grads_close(analytic, numeric, tol=1e-4):
    for a, f in zip(analytic, numeric):
        worst = np.max(np.abs(a - f) / np.maximum(1e-3, np.maximum(np.abs(a),
                                                                   np.abs(f))))
        assert worst < tol, f"gradient mismatch: {worst}"


# --- forward -----------------------------------------------------------------

def test_forward_zero_net():
    net = Mlp((3, 4, 2))
    assert np.array_equal(net.forward(np.ones(3)), np.zeros(2))


def test_forward_identity_single_layer():
    net = Mlp((3, 3))
    for i in range(3):
        net.weights[0][i, i] = 1.0
    x = np.array([0.3, -1.2, 2.0])
    assert np.array_equal(net.forward(x), x)


def test_forward_matches_hand_computation():
    net = Mlp((2, 2, 1))
    net.weights[0] = np.array([[0.1, -0.3], [0.5, 0.2]])
    net.biases[0] = np.array([0.05, -0.1])
    net.weights[1] = np.array([[1.5], [-0.7]])
    net.biases[1] = np.array([0.25])
    x = np.array([0.4, -0.8])
    h1 = math.tanh(0.4 * 0.1 + (-0.8) * 0.5 + 0.05)
    h2 = math.tanh(0.4 * (-0.3) + (-0.8) * 0.2 - 0.1)
    expected = 1.5 * h1 - 0.7 * h2 + 0.25
    assert abs(net.forward(x)[0] - expected) < 1e-12


def test_forward_is_pure():
    net = Mlp((3, 20, 20, 2), stream(1, "pure"))
    x = stream(2).standard_normal((5, 3))
    assert np.array_equal(net.forward(x), net.forward(x))


def test_forward_hidden_bounded():
    net = Mlp.standard(4, 2, stream(3))
    _, cache = net.forward(stream(4).standard_normal((10, 4)) * 3, cache=True)
    for act in cache.activations[1:-1]:
        assert np.all(np.abs(act) < 1.0)


def test_forward_size_mismatch():
    net = Mlp((3, 2))
    with pytest.raises(ValueError):
        net.forward(np.ones(4))


# --- backward ----------------------------------------------------------------

def test_backward_linear_single_weight():
    net = Mlp((1, 1))
    net.weights[0][0, 0] = 2.0
    x = np.array([3.0])
    _, cache = net.forward(x, cache=True)
    grads, input_grad = net.backward(cache, np.array([1.0]))
    assert grads[0][0, 0] == 3.0   # dy/dw = x
    assert input_grad[0] == 2.0    # dy/dx = w


def test_backward_zero_upstream():
    net = Mlp((2, 5, 2), stream(5))
    _, cache = net.forward(np.ones(2), cache=True)
    grads, _ = net.backward(cache, np.zeros(2))
    assert all(np.all(g == 0) for g in grads)


def test_backward_stale_cache_rejected():
    net = Mlp((2, 3), stream(6))
    _, cache = net.forward(np.ones((4, 2)), cache=True)
    with pytest.raises(ValueError, match="stale"):
        net.backward(cache, np.ones((3, 3)))


def test_backward_matches_finite_differences():
    rng = stream(7, "fd")
    net = Mlp((3, 4, 4, 2), rng)
    x = rng.standard_normal((5, 3))
    upstream = rng.standard_normal((5, 2))

    def loss():
        return float(np.sum(net.forward(x) * upstream))

    _, cache = net.forward(x, cache=True)
    analytic, input_grad = net.backward(cache, upstream)
    assert_grads_close(analytic, fd_param_grads(loss, net.params))

    # input gradient against finite differences too
    fd_in = np.zeros_like(x)
    h = 1e-5
    for idx in np.ndindex(*x.shape):
        orig = x[idx]
        x[idx] = orig + h
        up = loss()
        x[idx] = orig - h
        down = loss()
        x[idx] = orig
        fd_in[idx] = (up - down) / (2 * h)
    assert_grads_close([input_grad], [fd_in])


# --- Adam ----------------------------------------------------------------------

def test_adam_first_step_magnitude_is_lr():
    params = [np.array([1.0, -2.0]), np.array([[0.5]])]
    grads = [np.array([0.3, -7.0]), np.array([[1e-4]])]
    state = AdamState(params, lr=0.01)
    before = [p.copy() for p in params]
    state.step(params, grads)
    for b, p, g in zip(before, params, grads):
        steps = np.abs(p - b)
        # |step| = lr * |g| / (|g| + eps) ~= lr for any non-tiny gradient
        expected = 0.01 * np.abs(g) / (np.abs(g) + 1e-8)
        assert np.allclose(steps, expected, rtol=1e-12)
        assert np.all(np.sign(b - p) == np.sign(g))


def test_adam_zero_gradient_is_noop():
    params = [np.array([1.0, 2.0])]
    state = AdamState(params, lr=0.1)
    for _ in range(10):
        state.step(params, [np.zeros(2)])
    assert np.array_equal(params[0], np.array([1.0, 2.0]))


def reference_adam_quadratic(lr, steps, x0=1.0, b1=0.9, b2=0.999, eps=1e-8):
    """Independent scripted Adam recurrence on f(x) = x^2."""
    x, m, v = x0, 0.0, 0.0
    for t in range(1, steps + 1):
        g = 2.0 * x
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x -= lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
    return x


def test_adam_quadratic_matches_reference():
    params = [np.array([1.0])]
    state = AdamState(params, lr=0.1)
    for _ in range(200):
        state.step(params, [2.0 * params[0]])
    expected = reference_adam_quadratic(0.1, 200)
    assert abs(params[0][0] - expected) < 1e-12
    assert abs(params[0][0]) < 0.05


def test_adam_rejects_non_finite():
    params = [np.array([1.0])]
    state = AdamState(params, lr=0.1)
    with pytest.raises(FloatingPointError):
        state.step(params, [np.array([float("nan")])])


def test_clip_grad_norm():
    grads = [np.array([3.0]), np.array([4.0])]
    clipped = clip_grad_norm(grads, 1.0)
    total = math.sqrt(sum(float(np.sum(g * g)) for g in clipped))
    assert abs(total - 1.0) < 1e-12
    small = [np.array([0.1])]
    assert clip_grad_norm(small, 1.0)[0] is small[0]


# --- Gaussian head ---------------------------------------------------------------

def test_gaussian_logp_standard_normal_at_mean():
    logp = gaussian_logp(np.zeros((1, 1)), np.zeros((1, 1)), np.ones((1, 1)))
    assert abs(logp[0] - (-0.5 * math.log(2 * math.pi))) < 1e-12


def test_gaussian_logp_concentrates_as_std_shrinks():
    x = mean = np.zeros((1, 2))
    values = [gaussian_logp(x, mean, np.full((1, 2), s))[0]
              for s in (1.0, 0.5, 0.1, 0.01)]
    assert all(a < b for a, b in zip(values, values[1:]))


def test_gaussian_sample_moments():
    rng = stream(12, "gauss")
    mean = np.array([0.7, -1.2])
    std = np.array([0.5, 2.0])
    z = rng.standard_normal((10**5, 2))
    x = gaussian_sample(mean, std, z)
    assert np.all(np.abs(x.mean(axis=0) - mean) < 0.01 * np.maximum(1, np.abs(mean)) + 0.01)
    assert np.all(np.abs(x.std(axis=0) - std) / std < 0.01)


def test_log_prob_and_sample_consistent():
    rng = stream(13)
    out = np.array([[0.2, -0.1, 0.0, 0.3]])
    x, logp = log_prob_and_sample(out, rng)
    mean, std = split_head(out)
    assert np.allclose(logp, gaussian_logp(x, mean, std))


def test_split_head_floor_and_calibration():
    out = np.array([[0.0, 0.0, -500.0, 0.0]])
    mean, std = split_head(out)
    assert std[0, 0] == STD_FLOOR
    mean_c, std_c = split_head(out, min_std=np.array([0.1, 0.02]),
                               center=np.array([2.0, 0.05]),
                               scale=np.array([1.5, 0.05]))
    assert np.allclose(mean_c, [2.0, 0.05])
    assert std_c[0, 0] == 0.1          # floored
    assert abs(std_c[0, 1] - 0.05) < 1e-12  # scale * exp(0)


def test_copying_actor_makes_ratio_one():
    rng = stream(14)
    actor = Mlp.standard(6, 4, rng)
    old = actor.clone()
    obs = rng.standard_normal((20, 6))
    raw = rng.standard_normal((20, 2))
    mean_a, std_a = split_head(actor.forward(obs))
    mean_o, std_o = split_head(old.forward(obs))
    ratio = np.exp(gaussian_logp(raw, mean_a, std_a)
                   - gaussian_logp(raw, mean_o, std_o))
    assert np.allclose(ratio, 1.0, atol=1e-10)


def test_head_upstream_matches_finite_differences():
    rng = stream(15, "head-fd")
    net = Mlp((3, 5, 4), rng)
    obs = rng.standard_normal((6, 3))
    x = rng.standard_normal((6, 2))
    weight = rng.standard_normal(6)
    center = np.array([2.5, 0.05])
    scale = np.array([1.5, 0.05])
    min_std = np.array([0.01, 0.005])

    def loss():
        mean, std = split_head(net.forward(obs), min_std, center, scale)
        return float(np.sum(weight * gaussian_logp(x, mean, std)))

    out, cache = net.forward(obs, cache=True)
    mean, std = split_head(out, min_std, center, scale)
    upstream = head_upstream(x, mean, std, weight, min_std, scale)
    analytic, _ = net.backward(cache, upstream)
    assert_grads_close(analytic, fd_param_grads(loss, net.params))


def test_gaussian_logp_grads_values():
    x = np.array([[1.0]])
    mean = np.array([[0.0]])
    std = np.array([[2.0]])
    dmean, dstd = gaussian_logp_grads(x, mean, std)
    assert abs(dmean[0, 0] - 1.0 / 4.0) < 1e-15       # z / std
    assert abs(dstd[0, 0] - (0.25 - 1.0) / 2.0) < 1e-15  # (z^2 - 1) / std


# --- checkpoint text format -----------------------------------------------------

def test_networks_roundtrip(tmp_path):
    rng = stream(16)
    nets = {"actor": Mlp.standard(6, 4, rng), "critic": Mlp.standard(9, 1, rng)}
    path = tmp_path / "nets.txt"
    save_networks(nets, path)
    again = load_networks(path)
    assert set(again) == {"actor", "critic"}
    for name in nets:
        for a, b in zip(nets[name].params, again[name].params):
            assert np.array_equal(a, b)


def test_networks_version_error(tmp_path):
    path = tmp_path / "nets.txt"
    path.write_text("wrong-format-v2\n")
    with pytest.raises(CheckpointError, match="format"):
        load_networks(path)


def test_networks_corrupt_field_named(tmp_path):
    nets = {"actor": Mlp((2, 3), stream(17))}
    path = tmp_path / "nets.txt"
    save_networks(nets, path)
    text = path.read_text().replace("W0 1 ", "W0 1 oops ", 1)
    path.write_text(text)
    with pytest.raises(CheckpointError, match="W0 row 1"):
        load_networks(path)
