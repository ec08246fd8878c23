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
# # The prior variance
#
# The prior variance is the only free knob of a Laplace approximation. Growing
# it can only lower the confidence at a fixed input, and the confidence cannot
# fall below a cap set by the data curvature. Picking it trades validation
# likelihood against entropy on out-of-distribution inputs.

# %%
import numpy as np

from relu_laplace.data import toy_binary, train_val_split
from relu_laplace.evaluation import auroc, make_noise_ood, mmc
from relu_laplace.laplace import LaplaceConfig, fit_llla_binary
from relu_laplace.network import Mlp
from relu_laplace.predictive import predict
from relu_laplace.theory import verify_sigma0_monotonicity
from relu_laplace.train import TrainConfig, train_map
from relu_laplace.tune import TuneConfig, default_grid, entropy, optimize_prior_variance, tuning_noise

train = toy_binary(250, 0.6, seed=0)
test, val = train_val_split(toy_binary(250, 0.6, seed=7), 50, seed=0)
net = train_map(Mlp.init([2, 50, 50, 1], seed=0), train, TrainConfig(epochs=100, batch_size=32, learning_rate=0.05))
post = fit_llla_binary(net, train, LaplaceConfig(batch_size=10**6))

# %% [markdown]
# ## Confidence along the prior-variance grid

# %%
grid = np.logspace(-4, 4, 9)
for x in test.inputs[:4]:
    r = verify_sigma0_monotonicity(net, post, x, grid)
    print(np.round(r.confidences, 4), f"MAP {r.map_confidence:.4f}, cap {r.upper_limit:.4f}")

# %% [markdown]
# ## Tuning
#
# The objective is the validation NLL minus lambda times the mean predictive
# entropy on uniform noise over the training bounding box.

# %%
ood = tuning_noise(train.inputs, len(val), seed=0)
noise = make_noise_ood(2000, 2, 100.0, seed=1)
for lam in (0.0, 0.25, 1.0):
    s2, table = optimize_prior_variance(net, post, val, ood, TuneConfig(lam, default_grid()))
    tuned = post.with_prior(s2)
    c_in = predict(net, tuned, test.inputs).confidence
    c_out = predict(net, tuned, noise).confidence
    h = entropy(predict(net, tuned, ood).class_probs).mean()
    print(f"lambda={lam:4}: sigma0^2={s2:9.4g}  OOD entropy {h:.3f}  "
          f"noise MMC {mmc(c_out):5.1f}  AUR {auroc(c_in, c_out):5.1f}")
