import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relu_laplace.errors import DimensionMismatch, RegionBoundary, Unstable
from relu_laplace.network import (
    Layer,
    Mlp,
    activation_pattern,
    affine_region,
    certified_region,
    features,
    forward,
    grad_input,
    grad_params,
    param_jacobian,
    region_jacobian,
    region_stability_scale,
)

from _oracles import fd_gradient, naive_forward, random_net


def linear(w, b=None):
    return Mlp([Layer(np.atleast_2d(w), None if b is None else np.atleast_1d(b))])


def test_forward_examples(rng):
    assert forward(linear([1.0, 2.0]), np.array([3.0, 4.0]))[0] == 11.0
    net = Mlp([Layer([[-1.0]]), Layer([[2.0]])])
    assert forward(net, np.array([5.0]))[0] == 0.0
    for _ in range(10):
        net = random_net(rng, [3, 5, 2])
        x = rng.standard_normal(3)
        np.testing.assert_allclose(forward(net, x), naive_forward(net, x), atol=1e-12)


def test_forward_batch_matches_rows(rng):
    net = random_net(rng, [4, 6, 6, 3])
    X = rng.standard_normal((7, 4))
    np.testing.assert_allclose(forward(net, X), np.stack([forward(net, x) for x in X]))


def test_dimension_checks():
    with pytest.raises(DimensionMismatch):
        forward(linear([1.0, 2.0]), np.ones(3))
    with pytest.raises(DimensionMismatch):
        Mlp([Layer(np.ones((3, 2))), Layer(np.ones((1, 4)))])
    with pytest.raises(ValueError):
        Mlp([Layer(np.ones((3, 2)), np.zeros(3)), Layer(np.ones((1, 3)))])
    with pytest.raises(ValueError):
        Mlp([Layer(np.array([[np.inf]]))])
    with pytest.raises(DimensionMismatch):
        features(linear([1.0]), np.ones(1))


def test_features_examples(rng):
    W1 = np.array([[1.0, 0.0], [0.5, 2.0]])
    net = Mlp([Layer(W1), Layer([[1.0, 1.0]])])
    x = np.array([0.3, 1.2])
    np.testing.assert_allclose(features(net, x), W1 @ x)
    np.testing.assert_array_equal(features(net, -x), 0.0)
    net = random_net(rng, [3, 8, 6, 2])
    x = rng.standard_normal(3)
    last = net.layers[-1]
    np.testing.assert_allclose(last.weight @ features(net, x) + last.bias, forward(net, x), atol=1e-12)


def test_param_order_is_layer_major_row_major_then_bias():
    net = Mlp([Layer([[1.0, 2.0], [3.0, 4.0]], [5.0, 6.0]), Layer([[7.0, 8.0]], [9.0])])
    np.testing.assert_array_equal(net.params(), np.arange(1.0, 10.0))
    assert net.with_params(net.params()) == net


def test_grad_params_examples(rng):
    x = np.array([0.5, -1.5, 2.0])
    np.testing.assert_array_equal(grad_params(linear([1.0, 1.0, 1.0]), x), x)
    net = Mlp([Layer([[1.0], [-1.0]]), Layer([[1.0, 1.0]])])
    g = grad_params(net, np.array([2.0]))
    assert g[1] == 0.0  # incoming weight of the inactive unit


@pytest.mark.parametrize("trial", range(50))
def test_grad_params_finite_differences(trial):
    rng = np.random.default_rng(trial)
    sizes = [int(rng.integers(1, 5))] + [int(rng.integers(2, 7)) for _ in range(int(rng.integers(1, 3)))] + [int(rng.integers(1, 4))]
    net = random_net(rng, sizes, bias=bool(trial % 2))
    x = rng.standard_normal(sizes[0])
    j = int(rng.integers(0, sizes[-1]))
    theta = net.params()
    fd = fd_gradient(lambda t: forward(net.with_params(t), x)[j], theta)
    g = grad_params(net, x, j)
    assert np.linalg.norm(g - fd) <= 1e-5 * max(np.linalg.norm(fd), 1e-3)


def test_param_jacobian_rows_are_grad_params(rng):
    net = random_net(rng, [3, 5, 4])
    X = rng.standard_normal((6, 3))
    J = param_jacobian(net, X)
    for i, x in enumerate(X):
        for j in range(4):
            np.testing.assert_allclose(J[i, j], grad_params(net, x, j))


def test_grad_input_examples(rng):
    w = np.array([0.5, -2.0])
    np.testing.assert_array_equal(grad_input(linear(w, 1.0), np.array([3.0, 1.0])), w)
    net = Mlp([Layer([[1.0, 1.0], [2.0, 1.0]]), Layer([[1.0, -1.0]])])
    np.testing.assert_array_equal(grad_input(net, np.array([-1.0, -1.0])), 0.0)
    net = random_net(rng, [3, 10, 10, 1])
    x, v = rng.standard_normal(3), rng.standard_normal(3)
    eps = 1e-7
    assert np.array_equal(activation_pattern(net, x), activation_pattern(net, x + eps * v))
    diff = (forward(net, x + eps * v) - forward(net, x))[0]
    assert diff == pytest.approx(eps * grad_input(net, x) @ v, rel=1e-5)


def test_affine_region_examples(rng):
    r = affine_region(linear([2.0, -1.0], 0.5), np.array([1.0, 1.0]))
    np.testing.assert_allclose(r.u, [2.0, -1.0])
    assert r.c_scalar == pytest.approx(0.5)
    net = random_net(rng, [3, 8, 8, 1], bias=False)
    assert abs(affine_region(net, rng.standard_normal(3)).c_scalar) < 1e-9
    net = random_net(rng, [3, 8, 8, 1])
    x = rng.standard_normal(3)
    r = affine_region(net, x)
    hits = 0
    for _ in range(200):
        xp = x + 1e-3 * rng.standard_normal(3)
        if np.array_equal(activation_pattern(net, xp), activation_pattern(net, x)):
            assert r.u @ xp + r.c_scalar == pytest.approx(forward(net, xp)[0], abs=1e-9)
            hits += 1
        if hits == 10:
            break
    assert hits == 10


def test_activation_pattern_examples(rng):
    net = Mlp([Layer(np.eye(3)), Layer(np.ones((1, 3)))])
    assert activation_pattern(net, np.ones(3)).all()
    net = random_net(rng, [3, 6, 6, 1], bias=False)
    assert not activation_pattern(net, np.zeros(3)).any()
    x = rng.standard_normal(3)
    assert np.array_equal(activation_pattern(net, x), activation_pattern(net, 2 * x))
    assert activation_pattern(net, x).size == net.n_hidden_units


def test_pattern_region_consistency(rng):
    net = random_net(rng, [2, 6, 6, 1])
    X = rng.uniform(-1, 1, (300, 2))
    P = activation_pattern(net, X)
    seen = {}
    for x, p in zip(X, P):
        key = p.tobytes()
        u = affine_region(net, x).u
        if key in seen:
            np.testing.assert_allclose(u, seen[key], atol=1e-9)
        seen[key] = u


def test_region_stability_scale(rng):
    grid = np.logspace(0, 6, 13)
    assert region_stability_scale(linear([1.0, 1.0]), np.ones(2), grid) == grid[0]
    net = Mlp([Layer([[1.0, 1.0]]), Layer([[1.0]])])
    assert region_stability_scale(net, np.array([1.0, 2.0]), grid) == grid[0]
    net = random_net(rng, [3, 20, 20, 20, 1])
    x = rng.standard_normal(3)
    region_stability_scale(net, x, grid)
    assert np.array_equal(activation_pattern(net, 1e5 * x), activation_pattern(net, 1e6 * x))
    with pytest.raises(ValueError):
        region_stability_scale(net, x, [2.0, 1.0])


def test_region_stability_unstable():
    # unit 1 switches on only beyond delta = 1000
    net = Mlp([Layer([[1.0], [1.0]], [0.0, -1000.0]), Layer([[1.0, 1.0]], [0.0])])
    with pytest.raises(Unstable):
        region_stability_scale(net, np.array([1.0]), [1.0, 10.0, 100.0, 2000.0])
    assert region_stability_scale(net, np.array([1.0]), [1.0, 10.0, 2000.0, 4000.0]) == 2000.0


def test_region_affine_on_ray(rng):
    net = random_net(rng, [3, 10, 10, 1])
    x = rng.standard_normal(3)
    grid = np.logspace(0, 6, 25)
    r = certified_region(net, x, grid)
    for d in grid[grid >= r.stable_from_delta]:
        f = forward(net, d * x)[0]
        assert f == pytest.approx(d * (r.u @ x) + r.c_scalar, rel=1e-6, abs=1e-9)


def test_region_jacobian_linear_model():
    net = linear([1.5, -0.5, 2.0])
    J = region_jacobian(net, np.array([1.0, 2.0, 3.0]))
    np.testing.assert_allclose(J, np.eye(3), atol=1e-9)


def test_region_jacobian_inactive_units_zero():
    net = Mlp([Layer([[1.0, 0.0], [-1.0, 0.0]], [0.0, 0.0]), Layer([[1.0, 1.0]], [0.0])])
    J = region_jacobian(net, np.array([2.0, 1.0]))
    # parameters 2, 3 (incoming weights of the inactive unit), 5 (its bias), 7 (its outgoing weight)
    np.testing.assert_allclose(J[:, [2, 3, 5, 7]], 0.0, atol=1e-9)


def test_region_jacobian_matches_scaled_gradient(rng):
    net = random_net(rng, [3, 5, 5, 1], bias=False)
    assert net.n_params <= 60
    x = rng.standard_normal(3)
    J = region_jacobian(net, x)
    delta = 1e4
    np.testing.assert_allclose(delta * (J.T @ x), grad_params(net, delta * x), rtol=1e-4, atol=1e-6 * delta)


def test_region_jacobian_boundary():
    net = Mlp([Layer([[1.0, -1.0]], [0.0]), Layer([[1.0]], [0.0])])
    with pytest.raises(RegionBoundary):
        region_jacobian(net, np.array([1.0, 1.0]))


def test_serialization_roundtrip(tmp_path, rng):
    net = random_net(rng, [3, 4, 2])
    path = tmp_path / "m.json"
    net.save(path)
    assert Mlp.load(path) == net
    doc = json.loads(path.read_text())
    assert doc["activation"] == "relu" and len(doc["layers"]) == 2
    nb = random_net(rng, [2, 3, 1], bias=False)
    nb.save(path)
    assert json.loads(path.read_text())["layers"][0]["bias"] is None
    assert Mlp.load(path) == nb


def test_init_is_glorot_and_seeded():
    a, b = Mlp.init([5, 7, 3], seed=4), Mlp.init([5, 7, 3], seed=4)
    assert a == b
    lim = np.sqrt(6.0 / 12)
    assert np.abs(a.layers[0].weight).max() <= lim
    np.testing.assert_array_equal(a.layers[0].bias, 0.0)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), delta=st.floats(1e-3, 1e3))
def test_positive_homogeneity_bias_free(seed, delta):
    r = np.random.default_rng(seed)
    net = random_net(r, [3, 6, 5, 2], bias=False)
    x = r.standard_normal(3)
    np.testing.assert_allclose(forward(net, delta * x), delta * forward(net, x), rtol=1e-10, atol=1e-12)
