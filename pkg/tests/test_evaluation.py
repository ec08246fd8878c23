import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relu_laplace.data import toy_binary
from relu_laplace.errors import EmptyInput, LengthMismatch
from relu_laplace.evaluation import (
    MetricsReport,
    auroc,
    brier,
    ece,
    make_noise_ood,
    mmc,
    ood_report,
    pgd_confidence_attack,
)
from relu_laplace.laplace import LaplaceConfig, fit_llla_binary
from relu_laplace.network import Layer, Mlp
from relu_laplace.predictive import PredictiveOutput, predict, predict_map

from _oracles import brute_auroc, random_net


def test_mmc_examples():
    assert mmc([0.7, 0.6]) == pytest.approx(65.0)
    assert mmc(np.ones(10)) == 100.0
    assert mmc(np.full(4, 0.5)) == 50.0
    with pytest.raises(EmptyInput):
        mmc([])


def test_auroc_examples():
    assert auroc([0.9, 0.8], [0.7, 0.6]) == 100.0
    assert auroc([0.9, 0.6], [0.8, 0.7]) == 50.0
    assert auroc(np.full(5, 0.3), np.full(7, 0.3)) == 50.0
    with pytest.raises(EmptyInput):
        auroc([], [0.1])


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), na=st.integers(1, 200), nb=st.integers(1, 200), levels=st.integers(2, 12))
def test_auroc_matches_brute_force_with_ties(seed, na, nb, levels):
    r = np.random.default_rng(seed)
    a = r.integers(0, levels, na) / levels
    b = r.integers(0, levels, nb) / levels
    assert auroc(a, b) == brute_auroc(a, b)
    assert auroc(a, b) + auroc(b, a) == pytest.approx(100.0, abs=1e-12)


def test_ece_examples():
    assert ece(np.ones(5), np.ones(5, bool)) == 0.0
    assert ece(np.ones(5), np.zeros(5, bool)) == 100.0
    conf = np.array([0.6, 0.6, 0.9, 0.9])
    hit = np.array([True, False, True, True])
    assert ece(conf, hit) == pytest.approx(10.0, abs=1e-12)
    with pytest.raises(LengthMismatch):
        ece(conf, hit[:3])
    with pytest.raises(ValueError):
        ece(conf, hit, n_bins=0)


def test_ece_bins_start_at_one_over_k():
    # with k = 4 the bins span [0.25, 1]; 0.3 and 0.28 share the first bin
    conf = np.array([0.28, 0.3])
    assert ece(conf, [True, False], n_bins=15, k=4) == pytest.approx(100 * abs(0.5 - 0.29))


def test_brier_examples(rng):
    assert brier(np.eye(3), [0, 1, 2]) == 0.0
    assert brier(np.full((4, 2), 0.5), [0, 1, 1, 0]) == 0.5
    assert brier(np.array([0.5, 0.5]), [0, 1]) == 0.5
    P = rng.dirichlet(np.ones(4), 30)
    y = rng.integers(0, 4, 30)
    naive = 0.0
    for p, label in zip(P, y):
        naive += sum((p[j] - (1.0 if j == label else 0.0)) ** 2 for j in range(4))
    assert brier(P, y) == pytest.approx(naive / 30, abs=1e-12)
    with pytest.raises(LengthMismatch):
        brier(P, y[:5])


def test_noise_ood():
    X = make_noise_ood(50, 3, 1.0, seed=0)
    assert X.shape == (50, 3) and X.min() >= 0 and X.max() <= 1
    Y = make_noise_ood(50, 3, 100.0, seed=0)
    assert Y.max() <= 100 and Y.max() > 1
    np.testing.assert_array_equal(Y, make_noise_ood(50, 3, 100.0, seed=0))
    with pytest.raises(ValueError):
        make_noise_ood(5, 3, 0.0, seed=0)


def test_pgd_zero_epsilon(rng):
    net = random_net(rng, [3, 6, 2])
    x0 = rng.standard_normal((8, 3))
    np.testing.assert_array_equal(pgd_confidence_attack(net, x0, epsilon=0.0), x0)


def test_pgd_single_step_linear_binary():
    w = np.array([0.5, -2.0, 0.0001])
    net = Mlp([Layer(w[None, :])])
    x0 = np.array([[1.0, -1.0, 0.0]])
    out = pgd_confidence_attack(net, x0, epsilon=0.3, steps=1, step_size=0.1)
    np.testing.assert_allclose(out, x0 + 0.1 * np.sign(w))


def test_pgd_stays_in_ball_and_box(rng):
    net = random_net(rng, [4, 10, 3])
    x0 = rng.random((30, 4))
    out = pgd_confidence_attack(net, x0, epsilon=0.3, steps=10, step_size=0.2)
    assert np.abs(out - x0).max() <= 0.3 + 1e-9
    out = pgd_confidence_attack(net, x0, epsilon=0.3, steps=10, step_size=0.2, clamp_unit_box=True)
    assert out.min() >= 0 and out.max() <= 1 and np.abs(out - x0).max() <= 0.3 + 1e-9


def test_pgd_raises_map_confidence(rng):
    for sizes in ([4, 10, 3], [4, 10, 1]):
        net = random_net(rng, sizes)
        x0 = rng.random((100, 4))
        out = pgd_confidence_attack(net, x0)
        before, after = predict_map(net, x0).confidence, predict_map(net, out).confidence
        assert np.all(after >= before)
        assert np.mean(after > before) >= 0.9


def test_pgd_uses_posterior_mean(rng):
    net = random_net(rng, [2, 6, 1])
    data = toy_binary(20, seed=0)
    post = fit_llla_binary(net, data, LaplaceConfig())
    x0 = rng.random((5, 2))
    np.testing.assert_array_equal(pgd_confidence_attack(net, x0, post=post), pgd_confidence_attack(net, x0))


def test_probit_mmc_at_least_half(rng):
    data = toy_binary(20, seed=0)
    net = random_net(rng, [2, 6, 1])
    post = fit_llla_binary(net, data, LaplaceConfig(sigma0_sq=1e6))
    X = make_noise_ood(200, 2, 1000.0, seed=1)
    assert mmc(predict(net, post, X).confidence) >= 50.0


def test_report():
    out_in = PredictiveOutput(np.array([0.9, 0.2, 0.8]), np.array([0.9, 0.8, 0.8]))
    out_out = PredictiveOutput(np.array([0.6, 0.5]), np.array([0.6, 0.5]))
    r = ood_report(out_in, out_out, labels_in=[1, 0, 0])
    assert r.mmc_in == pytest.approx(100 * 2.5 / 3)
    assert r.mmc_out == pytest.approx(55.0)
    assert r.aur == 100.0 and (r.n_in, r.n_out) == (3, 2)
    assert r.brier == pytest.approx(brier(out_in.class_probs, [1, 0, 0]))
    assert ood_report(out_in, out_out).ece is None
    with pytest.raises(ValueError):
        MetricsReport(120.0, 50.0, 50.0, 1, 1)
