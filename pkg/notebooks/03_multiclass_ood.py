# ---
# jupyter:
#   jupytext:
#     text_representation:
#       extension: .py
#       format_name: percent
#       format_version: '1.3'
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# %% [markdown]
# # Out-of-distribution detection with four classes
#
# Four Gaussian clusters in ten dimensions, far-away uniform noise as the
# out-of-distribution set. The table compares the MAP network, temperature
# scaling and four Laplace variants, each with its prior variance tuned on a
# validation split.

# %%
import numpy as np

from relu_laplace.data import toy_multiclass, train_val_split
from relu_laplace.evaluation import make_noise_ood, ood_report
from relu_laplace.laplace import LaplaceConfig, fit_dla, fit_kfla, fit_llla_kron, fit_llla_multiclass_exact
from relu_laplace.network import Mlp, forward
from relu_laplace.predictive import PredictiveConfig, predict, predict_temperature
from relu_laplace.train import TrainConfig, fit_temperature, train_map
from relu_laplace.tune import TuneConfig, default_grid, optimize_prior_variance, tuning_noise

train = toy_multiclass(250, 0.7, seed=0, dim=10)
test, val = train_val_split(toy_multiclass(250, 0.7, seed=1, dim=10), 50, seed=0)
net = train_map(Mlp.init([10, 50, 50, 4], seed=0), train, TrainConfig(epochs=100, batch_size=32, learning_rate=0.05))

pc = PredictiveConfig(mode="mc", n_samples=100, seed=0)
ood_tune = tuning_noise(train.inputs, len(val), seed=0)
full = LaplaceConfig(batch_size=10**6)

methods = {"map": lambda X: predict(net, None, X)}
T = fit_temperature(forward(net, val.inputs), val.labels)
methods["temperature"] = lambda X: predict_temperature(net, T, X)
for name, fit in (("llla", fit_llla_multiclass_exact), ("llla-kron", fit_llla_kron), ("dla", fit_dla), ("kfla", fit_kfla)):
    post = fit(net, train, full)
    s2, _ = optimize_prior_variance(net, post, val, ood_tune, TuneConfig(0.25, default_grid()), pc)
    methods[name] = lambda X, p=post.with_prior(s2): predict(net, p, X, pc)
    print(f"{name}: tuned sigma0^2 = {s2:.4g}")

# %%
print(f"{'method':12s} {'delta':>6s} {'MMC in':>7s} {'MMC out':>8s} {'AUR':>6s} {'ECE':>6s}")
for delta in (10.0, 100.0, 2000.0):
    noise = make_noise_ood(2000, 10, delta, seed=2)
    for name, fn in methods.items():
        r = ood_report(fn(test.inputs), fn(noise), test.labels)
        print(f"{name:12s} {delta:6g} {r.mmc_in:7.1f} {r.mmc_out:8.1f} {r.aur:6.1f} {r.ece:6.2f}")
