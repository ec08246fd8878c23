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
# # Far-away confidence on a binary toy problem
#
# A ReLU network trained by MAP becomes arbitrarily confident as an input is
# scaled away from the data. A Gaussian over the last layer alone bounds that
# confidence. This script trains a small net on two Gaussian clusters, fits the
# last-layer Laplace approximation and compares both along rays.

# %%
from pathlib import Path

import numpy as np

from relu_laplace.data import toy_binary
from relu_laplace.laplace import LaplaceConfig, fit_llla_binary
from relu_laplace.network import Mlp, certified_region
from relu_laplace.plots import boundary_fields, confidence_grid, heatmap_svg
from relu_laplace.predictive import predict
from relu_laplace.theory import DEFAULT_DELTA_GRID, asymptotic_z_last_layer, random_rays, softened_z, thm24_bound
from relu_laplace.train import TrainConfig, train_map

FIG = Path("figures")
FIG.mkdir(exist_ok=True)

train = toy_binary(250, 0.6, seed=0)
test = toy_binary(250, 0.6, seed=7)
net = train_map(Mlp.init([2, 50, 50, 1], seed=0), train, TrainConfig(epochs=100, batch_size=32, learning_rate=0.05))
acc = np.mean(predict(net, None, test.inputs).predicted == test.labels)
print(f"test accuracy {acc:.3f}")

# %% [markdown]
# Fit the Gaussian with a broad prior; the covariance is rebuilt from the
# stored curvature for any other prior variance.

# %%
post = fit_llla_binary(net, train, LaplaceConfig(sigma0_sq=1e4, batch_size=10**6))

# %% [markdown]
# ## Confidence as the inputs are scaled by delta

# %%
print(f"{'delta':>8} {'MAP conf':>9} {'LLLA conf':>10} {'LLLA |z|':>9}")
for delta in (1, 10, 100, 1e3, 1e4, 1e6):
    X = delta * test.inputs
    c_map = predict(net, None, X).confidence.mean()
    c_la = predict(net, post, X).confidence.mean()
    z = np.abs(softened_z(net, post, X)).mean()
    print(f"{delta:8g} {c_map:9.4f} {c_la:10.4f} {z:9.4f}")

# %% [markdown]
# The softened logit converges along every ray. The limit has a closed form
# once the ray has entered its final linear region, and every limit sits below
# a bound that depends only on the posterior mean and the smallest eigenvalue
# of the covariance.

# %%
bound = thm24_bound(post)
for x in random_rays(5, 2, seed=1):
    region = certified_region(net, x, DEFAULT_DELTA_GRID)
    limit = asymptotic_z_last_layer(net, post, x)
    far = abs(softened_z(net, post, 1e6 * x))
    print(f"ray {np.round(x, 3)}: alpha={region.stable_from_delta:8.3g} "
          f"|z(1e6 x)|={far:.4f} closed form={limit:.4f} bound={bound:.4f}")

# %% [markdown]
# ## Heatmaps
#
# Confidence over the plane, with the decision boundary. The zoomed-out view
# spans a hundred times the radius of the data.

# %%
for tag, p in (("map", None), ("llla", post)):
    for radius in (6.0, 600.0):
        t, _, out = confidence_grid(net, p, radius, 81)
        svg = heatmap_svg(t, out.confidence, boundary_fields(out.probs), 2, train.inputs, train.labels)
        (FIG / f"binary_{tag}_r{radius:g}.svg").write_text(svg)
        print(f"{tag:5s} radius {radius:5g}: mean confidence {out.confidence.mean():.3f}")
