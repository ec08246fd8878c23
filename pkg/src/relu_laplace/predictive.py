"""Predictive distributions under a Gaussian posterior over network weights.

Binary heads use the probit approximation of the Gaussian-sigmoid integral in
closed form. Everything else is Monte Carlo. Random streams are keyed by
``(seed, bytes of the input point)`` for function-space draws and
``(seed, sample index)`` for weight-space draws, so results do not depend on
how a batch is ordered or split.
"""
from dataclasses import dataclass
import math

import numpy as np

from ._numerics import class_probs, sigmoid
from .errors import DimensionMismatch, NegativeVariance
from .laplace import (
    DiagonalAllLayers,
    FullAllLayers,
    KronAllLayers,
    LastLayerFull,
    LastLayerKron,
)
from .linalg import cholesky
from .network import Layer, Mlp, features, forward, grad_params

PROBIT_SCALE_SQ = math.pi / 8.0


@dataclass(frozen=True)
class PredictiveConfig:
    mode: str = "probit"
    n_samples: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("probit", "mc"):
            raise ValueError("mode must be 'probit' or 'mc'")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")


@dataclass(frozen=True)
class PredictiveOutput:
    """Batch predictions.

    ``probs`` is p(y=1) with shape (m,) for a binary head and a (m, k) matrix
    otherwise; ``z`` is the softened logit on the binary probit path.
    """

    probs: np.ndarray
    confidence: np.ndarray
    z: np.ndarray | None = None

    @property
    def class_probs(self):
        if self.probs.ndim == 1:
            return np.stack([1.0 - self.probs, self.probs], axis=1)
        return self.probs

    @property
    def predicted(self):
        if self.probs.ndim == 1:
            return (self.probs > 0.5).astype(int)
        return self.probs.argmax(axis=1)


def _rng(*key):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in key])))


def _point_rng(seed, x):
    words = np.frombuffer(np.ascontiguousarray(x, dtype=np.float64).tobytes(), dtype=np.uint32)
    return _rng(seed, x.size, *words.tolist())


def _batch(x):
    x = np.asarray(x, dtype=float)
    return (x[None, :], True) if x.ndim == 1 else (x, False)


def confidence(probs):
    """Maximum predictive probability; a scalar is read as binary p(y=1)."""
    p = np.asarray(probs, dtype=float)
    if p.ndim == 0:
        return float(max(p, 1.0 - p))
    return float(p.max())


def binary_output(p1, z=None):
    return PredictiveOutput(p1, np.maximum(p1, 1.0 - p1), z)


def multiclass_output(P):
    return PredictiveOutput(P, P.max(axis=1))


def softened_logit(m, v):
    """m / sqrt(1 + pi/8 * v)."""
    m = np.asarray(m, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any(v < 0):
        raise NegativeVariance("variance must be non-negative")
    return m / np.sqrt(1.0 + PROBIT_SCALE_SQ * v)


def probit_sigmoid_approx(m, v):
    """Approximate E[sigmoid(a)] for a ~ N(m, v)."""
    z = softened_logit(m, v)
    return float(sigmoid(z)) if z.ndim == 0 else sigmoid(z)


# ---------------------------------------------------------------------------
# binary closed forms


def _last_layer_bias(net, post, bias_post):
    """(mean, variance) contribution of the last-layer bias."""
    b = bias_post if bias_post is not None else post.bias
    if b is not None:
        return b.mean, b.cov
    last = net.layers[-1].bias
    if last is None:
        return 0.0, None
    return last, None


def binary_last_layer_moments(net, post, x, bias_post=None):
    """Mean and variance of the logit under a last-layer Gaussian."""
    if net.output_dim != 1 or post.output_dim != 1:
        raise DimensionMismatch("binary prediction needs a single-output network and posterior")
    X, _ = _batch(x)
    phi = features(net, X)
    if phi.shape[1] != post.mean.shape[0]:
        raise DimensionMismatch("feature dimension does not match the posterior")
    b_mean, b_cov = _last_layer_bias(net, post, bias_post)
    m = phi @ post.mean + float(np.sum(b_mean))
    v = np.einsum("mi,ij,mj->m", phi, post.cov, phi)
    if b_cov is not None:
        v = v + b_cov[0, 0]
    return m, np.maximum(v, 0.0)


def predict_binary_last_layer(net, post, x, bias_post=None):
    X, single = _batch(x)
    m, v = binary_last_layer_moments(net, post, X, bias_post)
    z = softened_logit(m, v)
    out = binary_output(sigmoid(z), z)
    return _squeeze(out) if single else out


def binary_all_layer_moments(net, post, x):
    """Linearised logit mean f_mu(x) and variance d^T Sigma d."""
    if net.output_dim != 1:
        raise DimensionMismatch("binary prediction needs a single-output network")
    if post.mean.shape[0] != net.n_params:
        raise DimensionMismatch("posterior dimension does not match the network")
    X, _ = _batch(x)
    mean_net = net.with_params(post.mean)
    D = grad_params(mean_net, X)
    m = forward(mean_net, X)[:, 0]
    v = np.einsum("mi,ij,mj->m", D, post.cov, D)
    return m, np.maximum(v, 0.0)


def predict_binary_all_layer(net, post, x):
    X, single = _batch(x)
    m, v = binary_all_layer_moments(net, post, X)
    z = softened_logit(m, v)
    out = binary_output(sigmoid(z), z)
    return _squeeze(out) if single else out


def _squeeze(out):
    return PredictiveOutput(out.probs[0], out.confidence[0], None if out.z is None else out.z[0])


# ---------------------------------------------------------------------------
# function-space Gaussians for last-layer posteriors


def function_space_gaussian(net, post, x, bias_post=None):
    """Mean (m, k) and covariance (m, k, k) of the logits under a last-layer posterior."""
    X, single = _batch(x)
    phi = features(net, X)
    b = bias_post if bias_post is not None else post.bias
    if isinstance(post, LastLayerKron):
        M = post.mean_matrix
        s = np.einsum("mi,ij,mj->m", phi, post.V, phi)
        cov = s[:, None, None] * post.U[None, :, :]
    elif isinstance(post, LastLayerFull):
        M = post.mean_matrix
        k, d = M.shape
        S = post.cov.reshape(k, d, k, d)
        cov = np.einsum("mb,abce,me->mac", phi, S, phi)
    else:
        raise TypeError("function_space_gaussian needs a last-layer posterior")
    mean = phi @ M.T
    if b is not None:
        mean = mean + b.mean
        cov = cov + b.cov
    elif net.layers[-1].bias is not None:
        mean = mean + net.layers[-1].bias
    cov = 0.5 * (cov + np.swapaxes(cov, 1, 2))
    return (mean[0], cov[0]) if single else (mean, cov)


def _sqrt_factor(M):
    """Cholesky factor, with the all-zero matrix mapped to zero."""
    if not np.any(M):
        return np.zeros_like(M)
    return cholesky(M)


# ---------------------------------------------------------------------------
# weight-space sampling


def sample_network(net, post, rng):
    """One network drawn from an all-layer posterior."""
    if isinstance(post, DiagonalAllLayers):
        theta = post.mean + np.sqrt(post.variance) * rng.standard_normal(post.mean.shape)
        return net.with_params(theta)
    if isinstance(post, FullAllLayers):
        L = _sqrt_factor(post.cov)
        return net.with_params(post.mean + L @ rng.standard_normal(post.mean.shape))
    if isinstance(post, KronAllLayers):
        layers = []
        for l in post.layers:
            LU, LV = _sqrt_factor(l.U), _sqrt_factor(l.V)
            W = l.mean_matrix + LU @ rng.standard_normal(l.mean_matrix.shape) @ LV.T
            b = None
            if l.bias is not None:
                b = l.bias.mean + _sqrt_factor(l.bias.cov) @ rng.standard_normal(l.bias.mean.shape)
            layers.append(Layer(W, b))
        return Mlp(layers)
    raise TypeError(f"cannot sample networks from {type(post).__name__}")


def _mc_function_space(net, post, X, cfg):
    mean, cov = function_space_gaussian(net, post, X)
    k = mean.shape[1]
    P = np.empty_like(mean)
    for i in range(X.shape[0]):
        L = _sqrt_factor(cov[i])
        E = _point_rng(cfg.seed, X[i]).standard_normal((cfg.n_samples, k))
        P[i] = class_probs(mean[i] + E @ L.T).mean(axis=0)
    return multiclass_output(P)


def _mc_binary_last_layer(net, post, X, cfg):
    m, v = binary_last_layer_moments(net, post, X)
    p1 = np.empty_like(m)
    for i in range(X.shape[0]):
        a = m[i] + math.sqrt(v[i]) * _point_rng(cfg.seed, X[i]).standard_normal(cfg.n_samples)
        p1[i] = sigmoid(a).mean()
    return binary_output(p1)


def _mc_weight_space(net, post, X, cfg):
    total = None
    for j in range(cfg.n_samples):
        P = class_probs(forward(sample_network(net, post, _rng(cfg.seed, j)), X))
        total = P if total is None else total + P
    P = total / cfg.n_samples
    return binary_output(P[:, 1]) if net.output_dim == 1 else multiclass_output(P)


def mc_predict(net, post, x, cfg=None):
    """Monte Carlo predictive for any posterior variant."""
    cfg = cfg or PredictiveConfig(mode="mc")
    X, single = _batch(x)
    if isinstance(post, LastLayerKron):
        out = _mc_function_space(net, post, X, cfg)
    elif isinstance(post, LastLayerFull):
        out = _mc_binary_last_layer(net, post, X, cfg) if post.output_dim == 1 else _mc_function_space(net, post, X, cfg)
    else:
        out = _mc_weight_space(net, post, X, cfg)
    return _squeeze(out) if single else out


# ---------------------------------------------------------------------------
# dispatch


def predict_map(net, x):
    X, single = _batch(x)
    logits = forward(net, X)
    out = binary_output(sigmoid(logits[:, 0]), logits[:, 0]) if net.output_dim == 1 \
        else multiclass_output(class_probs(logits))
    return _squeeze(out) if single else out


def predict_temperature(net, T, x):
    X, single = _batch(x)
    t = getattr(T, "t", T)
    logits = forward(net, X) / t
    out = binary_output(sigmoid(logits[:, 0]), logits[:, 0]) if net.output_dim == 1 \
        else multiclass_output(class_probs(logits))
    return _squeeze(out) if single else out


def predict(net, post, x, cfg=None):
    """Default predictive: probit for binary last-layer / full posteriors, MC otherwise.

    ``post=None`` gives the plain MAP prediction.
    """
    cfg = cfg or PredictiveConfig()
    if post is None:
        return predict_map(net, x)
    if cfg.mode == "probit" and net.output_dim == 1:
        if isinstance(post, LastLayerFull):
            return predict_binary_last_layer(net, post, x)
        if isinstance(post, FullAllLayers):
            return predict_binary_all_layer(net, post, x)
    return mc_predict(net, post, x, cfg)

