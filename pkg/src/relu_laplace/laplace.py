"""Laplace approximations around a MAP-trained ReLU network.

Every posterior keeps the data curvature it was built from (already scaled by
the number of training points), so a different prior variance can be applied
later with ``with_prior`` without touching the data again.

Flattening of a weight matrix W (rows = outputs) is row-major, matching the
network's parameter order. In that order a Kronecker-factored covariance over
the last layer is ``kron(U, V)`` (U over outputs, V over inputs), which is the
same distribution as the column-major ``V (x) U`` of the matrix-normal
convention.
"""
from dataclasses import dataclass, field, replace
import json
import math

import numpy as np

from ._numerics import class_probs
from .errors import DimensionTooLarge, DimensionMismatch
from .linalg import cholesky, eigvalsh_desc, spd_inverse
from .network import (
    Layer,
    Mlp,
    _backward,
    _forward_trace,
    dumps_exact,
    features,
    forward,
    param_jacobian,
    per_example_param_grads,
)

DEFAULT_MAX_LAST_LAYER_DIM = 4096
DEFAULT_MAX_PARAMS = 2000


@dataclass(frozen=True)
class LaplaceConfig:
    sigma0_sq: float = 1.0
    rho: float = 0.9
    batch_size: int = 128
    seed: int = 0
    n_label_samples: int = 1
    max_last_layer_dim: int = DEFAULT_MAX_LAST_LAYER_DIM
    max_params: int = DEFAULT_MAX_PARAMS

    def __post_init__(self):
        if not self.sigma0_sq > 0:
            raise ValueError("sigma0_sq must be positive")
        if not 0 <= self.rho < 1:
            raise ValueError("rho must lie in [0, 1)")
        if self.batch_size < 1 or self.n_label_samples < 1:
            raise ValueError("batch_size and n_label_samples must be >= 1")

    @property
    def tau0(self):
        return 1.0 / self.sigma0_sq


def _prior_inverse(curvature, sigma0_sq):
    """(curvature + I / sigma0^2)^-1."""
    return spd_inverse(curvature + np.eye(curvature.shape[0]) / sigma0_sq)


def _kron_factor_inverse(factor, n_data, sigma0_sq):
    """(sqrt(N) * factor + sqrt(tau0) * I)^-1."""
    return spd_inverse(math.sqrt(n_data) * factor + math.sqrt(1.0 / sigma0_sq) * np.eye(factor.shape[0]))


# ---------------------------------------------------------------------------
# posterior containers


@dataclass(frozen=True)
class BiasGaussian:
    """Independent Gaussian over one layer's bias vector."""

    mean: np.ndarray
    cov: np.ndarray
    curvature: np.ndarray

    def with_prior(self, sigma0_sq):
        return replace(self, cov=_prior_inverse(self.curvature, sigma0_sq))

    @property
    def variance(self):
        return np.diag(self.cov)


@dataclass(frozen=True)
class LastLayerFull:
    """Full Gaussian over the last layer's weights (binary: d, multiclass: k*d)."""

    mean: np.ndarray
    cov: np.ndarray
    curvature: np.ndarray
    sigma0_sq: float
    n_data: int
    output_dim: int
    bias: BiasGaussian | None = None
    variant: str = field(default="last_layer_full", init=False)

    def with_prior(self, sigma0_sq):
        return replace(
            self,
            cov=_prior_inverse(self.curvature, sigma0_sq),
            sigma0_sq=float(sigma0_sq),
            bias=None if self.bias is None else self.bias.with_prior(sigma0_sq),
        )

    @property
    def mean_matrix(self):
        return self.mean.reshape(self.output_dim, -1)

    def factors(self):
        return {"cov": self.cov}


@dataclass(frozen=True)
class LastLayerKron:
    """Matrix-normal posterior MN(W | M, U, V) over the last layer's k x d weights."""

    mean_matrix: np.ndarray
    U: np.ndarray
    V: np.ndarray
    A: np.ndarray
    B: np.ndarray
    sigma0_sq: float
    n_data: int
    bias: BiasGaussian | None = None
    variant: str = field(default="last_layer_kron", init=False)

    def with_prior(self, sigma0_sq):
        return replace(
            self,
            U=_kron_factor_inverse(self.A, self.n_data, sigma0_sq),
            V=_kron_factor_inverse(self.B, self.n_data, sigma0_sq),
            sigma0_sq=float(sigma0_sq),
            bias=None if self.bias is None else self.bias.with_prior(sigma0_sq),
        )

    @property
    def output_dim(self):
        return self.mean_matrix.shape[0]

    def dense_cov(self):
        """Covariance of the row-major flattened weights."""
        return np.kron(self.U, self.V)

    def factors(self):
        return {"U": self.U, "V": self.V}


@dataclass(frozen=True)
class DiagonalAllLayers:
    """Independent Gaussians over every network parameter (flat order)."""

    mean: np.ndarray
    variance: np.ndarray
    fisher: np.ndarray
    sigma0_sq: float
    n_data: int
    variant: str = field(default="diag_all", init=False)

    def with_prior(self, sigma0_sq):
        return replace(self, variance=1.0 / (1.0 / sigma0_sq + self.fisher), sigma0_sq=float(sigma0_sq))

    def layer_views(self, net):
        """Per-layer (weight mean, weight variance, bias mean, bias variance)."""
        out = []
        for l, (ws, bs) in zip(net.layers, net.param_slices()):
            out.append((
                self.mean[ws].reshape(l.weight.shape), self.variance[ws].reshape(l.weight.shape),
                None if bs is None else self.mean[bs], None if bs is None else self.variance[bs],
            ))
        return out

    def factors(self):
        return {"variance": np.diag(self.variance)}


@dataclass(frozen=True)
class KronLayer:
    mean_matrix: np.ndarray
    U: np.ndarray
    V: np.ndarray
    A: np.ndarray
    B: np.ndarray
    bias: BiasGaussian | None = None


@dataclass(frozen=True)
class KronAllLayers:
    layers: tuple
    sigma0_sq: float
    n_data: int
    variant: str = field(default="kron_all", init=False)

    def with_prior(self, sigma0_sq):
        layers = tuple(
            replace(
                l,
                U=_kron_factor_inverse(l.A, self.n_data, sigma0_sq),
                V=_kron_factor_inverse(l.B, self.n_data, sigma0_sq),
                bias=None if l.bias is None else l.bias.with_prior(sigma0_sq),
            )
            for l in self.layers
        )
        return replace(self, layers=layers, sigma0_sq=float(sigma0_sq))

    def factors(self):
        out = {}
        for i, l in enumerate(self.layers):
            out[f"U{i}"], out[f"V{i}"] = l.U, l.V
        return out


@dataclass(frozen=True)
class FullAllLayers:
    """Full Gaussian over all p network parameters (flat order)."""

    mean: np.ndarray
    cov: np.ndarray
    curvature: np.ndarray
    sigma0_sq: float
    n_data: int
    variant: str = field(default="full_all", init=False)

    def with_prior(self, sigma0_sq):
        return replace(self, cov=_prior_inverse(self.curvature, sigma0_sq), sigma0_sq=float(sigma0_sq))

    def factors(self):
        return {"cov": self.cov}


def covariance_factors(post):
    """All covariance matrices held by a posterior, bias Gaussians included."""
    out = dict(post.factors())
    biases = []
    if isinstance(post, KronAllLayers):
        biases = [(f"bias{i}", l.bias) for i, l in enumerate(post.layers)]
    elif isinstance(post, (LastLayerFull, LastLayerKron)):
        biases = [("bias", post.bias)]
    for name, b in biases:
        if b is not None:
            out[name] = b.cov
    return out


def check_spd(post):
    """Raise NotPositiveDefinite if any covariance factor fails Cholesky."""
    for M in covariance_factors(post).values():
        cholesky(M)


def factor_spectra(post):
    """(lambda_min, lambda_max) of every covariance factor."""
    out = {}
    for name, M in covariance_factors(post).items():
        ev = eigvalsh_desc(M)
        out[name] = (float(ev[-1]), float(ev[0]))
    return out


# ---------------------------------------------------------------------------
# curvature helpers


def _batches(n, cfg):
    perm = np.random.default_rng(cfg.seed).permutation(n)
    return [perm[s:s + cfg.batch_size] for s in range(0, n, cfg.batch_size)]


def _running_average(items, rho):
    """rho-weighted running average; the first term initialises the average."""
    avg = None
    for item in items:
        if avg is None:
            avg = [np.array(x, dtype=float) for x in item]
        else:
            avg = [rho * a + (1.0 - rho) * x for a, x in zip(avg, item)]
    return avg


def output_hessian(logits):
    """Per-example Hessian of the NLL w.r.t. the logits: (m, k, k)."""
    logits = np.asarray(logits, dtype=float)
    if logits.shape[1] == 1:
        p = class_probs(logits)[:, 1]
        return (p * (1.0 - p))[:, None, None]
    p = class_probs(logits)
    return np.einsum("mi,ij->mij", p, np.eye(p.shape[1])) - p[:, :, None] * p[:, None, :]


def _sample_labels(logits, rng):
    P = class_probs(logits)
    u = rng.random(P.shape[0])
    return np.minimum((np.cumsum(P, axis=1) < u[:, None]).sum(axis=1), P.shape[1] - 1)


def _nll_logit_grad(logits, y):
    """d(-log p(y|x))/d(logits) for sampled labels y."""
    if logits.shape[1] == 1:
        return class_probs(logits)[:, 1:2] - y[:, None]
    G = class_probs(logits)
    G[np.arange(len(y)), y] -= 1.0
    return G


def _require_features(net):
    if len(net.layers) < 2:
        raise DimensionMismatch("last-layer Laplace needs a feature map (>= 2 layers)")


def _last_bias_gaussian(net, batches_H, n, cfg):
    b = net.layers[-1].bias
    if b is None:
        return None
    curv = n * batches_H
    return BiasGaussian(b.copy(), _prior_inverse(curv, cfg.sigma0_sq), curv)


# ---------------------------------------------------------------------------
# last-layer approximations


def fit_llla_binary(net, data, cfg):
    """Exact-Hessian last-layer Laplace for a single-logit network."""
    if net.output_dim != 1:
        raise DimensionMismatch("fit_llla_binary needs a single-output network")
    _require_features(net)
    n = len(data)

    def per_batch(idx):
        X = data.inputs[idx]
        phi = features(net, X)
        s = output_hessian(forward(net, X))[:, 0, 0]
        return (phi * s[:, None]).T @ phi / len(idx), np.array([[s.mean()]])

    Lam, Lam_b = _running_average((per_batch(i) for i in _batches(n, cfg)), cfg.rho)
    curv = n * Lam
    return LastLayerFull(
        mean=net.layers[-1].weight[0].copy(),
        cov=_prior_inverse(curv, cfg.sigma0_sq),
        curvature=curv,
        sigma0_sq=float(cfg.sigma0_sq),
        n_data=n,
        output_dim=1,
        bias=_last_bias_gaussian(net, Lam_b, n, cfg),
    )


def fit_llla_multiclass_exact(net, data, cfg):
    """Full dk x dk GGN (= exact Hessian) over the last layer of a softmax network."""
    k = net.output_dim
    if k < 2:
        raise DimensionMismatch("fit_llla_multiclass_exact needs k >= 2 outputs")
    _require_features(net)
    d = net.feature_dim
    if d * k > cfg.max_last_layer_dim:
        raise DimensionTooLarge(f"last layer has {d * k} weights, cap is {cfg.max_last_layer_dim}")
    n = len(data)

    def per_batch(idx):
        X = data.inputs[idx]
        phi = features(net, X)
        G = output_hessian(forward(net, X))
        H = np.einsum("mac,mb,me->abce", G, phi, phi).reshape(k * d, k * d) / len(idx)
        return H, G.mean(axis=0)

    Lam, Lam_b = _running_average((per_batch(i) for i in _batches(n, cfg)), cfg.rho)
    curv = n * Lam
    return LastLayerFull(
        mean=net.layers[-1].weight.ravel().copy(),
        cov=_prior_inverse(curv, cfg.sigma0_sq),
        curvature=curv,
        sigma0_sq=float(cfg.sigma0_sq),
        n_data=n,
        output_dim=k,
        bias=_last_bias_gaussian(net, Lam_b, n, cfg),
    )


def fit_llla_kron(net, data, cfg):
    """Kronecker-factored last-layer Laplace: A over outputs, B over features."""
    k = net.output_dim
    if k < 2:
        raise DimensionMismatch("fit_llla_kron needs k >= 2 outputs")
    _require_features(net)
    n = len(data)

    def per_batch(idx):
        X = data.inputs[idx]
        phi = features(net, X)
        G = output_hessian(forward(net, X)).mean(axis=0)
        return G, phi.T @ phi / len(idx)

    A, B = _running_average((per_batch(i) for i in _batches(n, cfg)), cfg.rho)
    return LastLayerKron(
        mean_matrix=net.layers[-1].weight.copy(),
        U=_kron_factor_inverse(A, n, cfg.sigma0_sq),
        V=_kron_factor_inverse(B, n, cfg.sigma0_sq),
        A=A,
        B=B,
        sigma0_sq=float(cfg.sigma0_sq),
        n_data=n,
        bias=_last_bias_gaussian(net, A, n, cfg),
    )


# ---------------------------------------------------------------------------
# all-layer approximations


def fit_dla(net, data, cfg):
    """Diagonal Laplace from the empirical-over-inputs, model-sampled-label Fisher."""
    n = len(data)
    rng = np.random.default_rng(cfg.seed)
    total = np.zeros(net.n_params)
    for idx in _batches(n, cfg):
        X = data.inputs[idx]
        logits = forward(net, X)
        for _ in range(cfg.n_label_samples):
            y = _sample_labels(logits, rng)
            g = per_example_param_grads(net, X, _nll_logit_grad(logits, y))
            total += (g * g).sum(axis=0)
    mean_fisher = total / (n * cfg.n_label_samples)
    fisher = n * mean_fisher
    mean = net.params()
    return DiagonalAllLayers(
        mean=mean,
        variance=1.0 / (1.0 / cfg.sigma0_sq + fisher),
        fisher=fisher,
        sigma0_sq=float(cfg.sigma0_sq),
        n_data=n,
    )


def fit_kfla(net, data, cfg):
    """Kronecker-factored Laplace over every layer (KFAC factors, sampled labels)."""
    n = len(data)
    rng = np.random.default_rng(cfg.seed)

    def per_batch(idx):
        X = data.inputs[idx]
        inputs, preacts = _forward_trace(net, X)
        logits = preacts[-1]
        out = []
        A_acc = [np.zeros((l.weight.shape[0],) * 2) for l in net.layers]
        for _ in range(cfg.n_label_samples):
            y = _sample_labels(logits, rng)
            deltas = _backward(net, inputs, preacts, _nll_logit_grad(logits, y))
            for acc, g in zip(A_acc, deltas):
                acc += g.T @ g / len(idx)
        for acc, a in zip(A_acc, inputs):
            out.append(acc / cfg.n_label_samples)
            out.append(a.T @ a / len(idx))
        return out

    avg = _running_average((per_batch(i) for i in _batches(n, cfg)), cfg.rho)
    layers = []
    for i, l in enumerate(net.layers):
        A, B = avg[2 * i], avg[2 * i + 1]
        bias = None
        if l.bias is not None:
            curv = n * A
            bias = BiasGaussian(l.bias.copy(), _prior_inverse(curv, cfg.sigma0_sq), curv)
        layers.append(KronLayer(
            mean_matrix=l.weight.copy(),
            U=_kron_factor_inverse(A, n, cfg.sigma0_sq),
            V=_kron_factor_inverse(B, n, cfg.sigma0_sq),
            A=A,
            B=B,
            bias=bias,
        ))
    return KronAllLayers(tuple(layers), float(cfg.sigma0_sq), n)


def ggn(net, X):
    """Mean generalized Gauss-Newton J^T Lambda J over the rows of X (p x p)."""
    J = param_jacobian(net, X)
    L = output_hessian(forward(net, X))
    return np.einsum("mkp,mkl,mlq->pq", J, L, J) / X.shape[0]


def fit_full_laplace(net, data, cfg):
    """Full-covariance Laplace over all parameters with the GGN curvature."""
    if net.n_params > cfg.max_params:
        raise DimensionTooLarge(f"network has {net.n_params} parameters, cap is {cfg.max_params}")
    n = len(data)
    (H,) = _running_average(((ggn(net, data.inputs[idx]),) for idx in _batches(n, cfg)), cfg.rho)
    curv = n * 0.5 * (H + H.T)
    return FullAllLayers(
        mean=net.params(),
        cov=_prior_inverse(curv, cfg.sigma0_sq),
        curvature=curv,
        sigma0_sq=float(cfg.sigma0_sq),
        n_data=n,
    )


def bias_jacobians(net, X):
    """Per layer, d f / d b_l for each example: list of (m, k, h_l)."""
    inputs, preacts = _forward_trace(net, X)
    m, k = X.shape[0], net.output_dim
    per_layer = [np.empty((m, k, l.weight.shape[0])) for l in net.layers]
    for j in range(k):
        G = np.zeros((m, k))
        G[:, j] = 1.0
        for J, delta in zip(per_layer, _backward(net, inputs, preacts, G)):
            J[:, j, :] = delta
    return per_layer


def fit_bias_gaussian(net, data, cfg):
    """Independent GGN-Laplace Gaussian over each layer's bias vector."""
    if not net.has_bias:
        raise ValueError("network has no biases")
    n = len(data)

    def per_batch(idx):
        X = data.inputs[idx]
        L = output_hessian(forward(net, X))
        return [np.einsum("mkh,mkl,mlg->hg", J, L, J) / len(idx) for J in bias_jacobians(net, X)]

    avg = _running_average((per_batch(i) for i in _batches(n, cfg)), cfg.rho)
    return [
        BiasGaussian(l.bias.copy(), _prior_inverse(n * H, cfg.sigma0_sq), n * H)
        for l, H in zip(net.layers, avg)
    ]


FITTERS = {
    "llla-kron": fit_llla_kron,
    "dla": fit_dla,
    "kfla": fit_kfla,
    "full": fit_full_laplace,
}


def fit_posterior(net, data, variant, cfg):
    """Dispatch by the CLI variant name."""
    if variant == "llla":
        return fit_llla_binary(net, data, cfg) if net.output_dim == 1 else fit_llla_multiclass_exact(net, data, cfg)
    try:
        return FITTERS[variant](net, data, cfg)
    except KeyError:
        raise ValueError(f"unknown variant {variant!r}") from None


# ---------------------------------------------------------------------------
# serialization


def _bias_to_dict(b):
    if b is None:
        return None
    return {"mean": b.mean.tolist(), "cov": b.cov.tolist(), "curvature": b.curvature.tolist()}


def _bias_from_dict(d):
    if d is None:
        return None
    return BiasGaussian(np.array(d["mean"], float), np.array(d["cov"], float), np.array(d["curvature"], float))


def posterior_to_dict(post):
    d = {"variant": post.variant, "sigma0_sq": float(post.sigma0_sq), "n_data": int(post.n_data)}
    if isinstance(post, LastLayerFull):
        d.update(mean=post.mean.tolist(), cov=post.cov.tolist(), curvature=post.curvature.tolist(),
                 output_dim=post.output_dim, bias=_bias_to_dict(post.bias))
    elif isinstance(post, LastLayerKron):
        d.update(mean_matrix=post.mean_matrix.tolist(), U=post.U.tolist(), V=post.V.tolist(),
                 A=post.A.tolist(), B=post.B.tolist(), bias=_bias_to_dict(post.bias))
    elif isinstance(post, DiagonalAllLayers):
        d.update(mean=post.mean.tolist(), variance=post.variance.tolist(), fisher=post.fisher.tolist())
    elif isinstance(post, KronAllLayers):
        d["layers"] = [
            {"mean_matrix": l.mean_matrix.tolist(), "U": l.U.tolist(), "V": l.V.tolist(),
             "A": l.A.tolist(), "B": l.B.tolist(), "bias": _bias_to_dict(l.bias)}
            for l in post.layers
        ]
    elif isinstance(post, FullAllLayers):
        d.update(mean=post.mean.tolist(), cov=post.cov.tolist(), curvature=post.curvature.tolist())
    else:
        raise TypeError(f"not a posterior: {type(post).__name__}")
    return d


def posterior_from_dict(d):
    a = lambda key, src=d: np.array(src[key], dtype=float)  # noqa: E731
    common = dict(sigma0_sq=float(d["sigma0_sq"]), n_data=int(d["n_data"]))
    variant = d.get("variant")
    if variant == "last_layer_full":
        return LastLayerFull(mean=a("mean"), cov=a("cov"), curvature=a("curvature"),
                             output_dim=int(d["output_dim"]), bias=_bias_from_dict(d.get("bias")), **common)
    if variant == "last_layer_kron":
        return LastLayerKron(mean_matrix=a("mean_matrix"), U=a("U"), V=a("V"), A=a("A"), B=a("B"),
                             bias=_bias_from_dict(d.get("bias")), **common)
    if variant == "diag_all":
        return DiagonalAllLayers(mean=a("mean"), variance=a("variance"), fisher=a("fisher"), **common)
    if variant == "kron_all":
        layers = tuple(
            KronLayer(a("mean_matrix", l), a("U", l), a("V", l), a("A", l), a("B", l), _bias_from_dict(l.get("bias")))
            for l in d["layers"]
        )
        return KronAllLayers(layers, **common)
    if variant == "full_all":
        return FullAllLayers(mean=a("mean"), cov=a("cov"), curvature=a("curvature"), **common)
    raise ValueError(f"unknown posterior variant {variant!r}")


def save_posterior(post, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_exact(posterior_to_dict(post)))
        fh.write("\n")


def load_posterior(path):
    with open(path, encoding="utf-8") as fh:
        return posterior_from_dict(json.load(fh))


def map_network(net, post):
    """The network whose parameters are the posterior mean (identical to the MAP)."""
    if isinstance(post, (DiagonalAllLayers, FullAllLayers)):
        return net.with_params(post.mean)
    if isinstance(post, LastLayerFull):
        return net.with_last_layer(post.mean_matrix, None if post.bias is None else post.bias.mean)
    if isinstance(post, LastLayerKron):
        return net.with_last_layer(post.mean_matrix, None if post.bias is None else post.bias.mean)
    if isinstance(post, KronAllLayers):
        return Mlp([Layer(l.mean_matrix, None if l.bias is None else l.bias.mean) for l in post.layers])
    raise TypeError(f"not a posterior: {type(post).__name__}")
