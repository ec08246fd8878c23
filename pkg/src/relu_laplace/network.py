"""Fully-connected ReLU classifiers and their piecewise-affine structure.

Parameters are flattened layer-major: each layer's weight in row-major order,
followed by that layer's bias when the network has biases. Every covariance
over "all parameters" in this package uses that order.

Inputs may be a single point of shape (n,) or a batch of shape (m, n); outputs
keep the same leading shape.
"""
from dataclasses import dataclass
import json

import numpy as np

from .errors import DimensionMismatch, RegionBoundary, Unstable

BOUNDARY_RTOL = 1e-7
FD_REL_STEP = 1e-5


@dataclass(frozen=True)
class Layer:
    weight: np.ndarray
    bias: np.ndarray | None = None

    @property
    def n_params(self):
        return self.weight.size + (0 if self.bias is None else self.bias.size)


class Mlp:
    """ReLU network: hidden layers use ReLU, the final layer is linear.

    A single output (``output_dim == 1``) encodes a binary classifier whose
    logit is passed through the sigmoid.
    """

    def __init__(self, layers):
        layers = tuple(
            Layer(
                np.array(l.weight, dtype=float),
                None if l.bias is None else np.array(l.bias, dtype=float).reshape(-1),
            )
            for l in layers
        )
        if not layers:
            raise ValueError("network needs at least one layer")
        has_bias = {l.bias is not None for l in layers}
        if len(has_bias) != 1:
            raise ValueError("either every layer has a bias or none does")
        for prev, nxt in zip(layers, layers[1:]):
            if nxt.weight.shape[1] != prev.weight.shape[0]:
                raise DimensionMismatch("consecutive layer dimensions do not chain")
        for l in layers:
            if l.weight.ndim != 2:
                raise DimensionMismatch("weights must be matrices")
            if l.bias is not None and l.bias.shape != (l.weight.shape[0],):
                raise DimensionMismatch("bias length must equal the layer's output size")
            if not np.all(np.isfinite(l.weight)) or (
                l.bias is not None and not np.all(np.isfinite(l.bias))
            ):
                raise ValueError("non-finite parameters")
            l.weight.setflags(write=False)
            if l.bias is not None:
                l.bias.setflags(write=False)
        self.layers = layers

    @classmethod
    def init(cls, sizes, bias=True, seed=0):
        """Glorot-uniform weights and zero biases for layer widths ``sizes``."""
        rng = np.random.default_rng(seed)
        layers = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            W = rng.uniform(-limit, limit, size=(fan_out, fan_in))
            layers.append(Layer(W, np.zeros(fan_out) if bias else None))
        return cls(layers)

    @property
    def input_dim(self):
        return self.layers[0].weight.shape[1]

    @property
    def output_dim(self):
        return self.layers[-1].weight.shape[0]

    @property
    def feature_dim(self):
        return self.layers[-1].weight.shape[1]

    @property
    def has_bias(self):
        return self.layers[0].bias is not None

    @property
    def n_params(self):
        return sum(l.n_params for l in self.layers)

    @property
    def n_hidden_units(self):
        return sum(l.weight.shape[0] for l in self.layers[:-1])

    @property
    def sizes(self):
        return [self.input_dim] + [l.weight.shape[0] for l in self.layers]

    def param_slices(self):
        """Per layer, (weight slice, bias slice or None) into the flat vector."""
        out, start = [], 0
        for l in self.layers:
            w = slice(start, start + l.weight.size)
            start += l.weight.size
            b = None
            if l.bias is not None:
                b = slice(start, start + l.bias.size)
                start += l.bias.size
            out.append((w, b))
        return out

    def params(self):
        parts = []
        for l in self.layers:
            parts.append(l.weight.ravel())
            if l.bias is not None:
                parts.append(l.bias)
        return np.concatenate(parts)

    def with_params(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise DimensionMismatch(f"expected {self.n_params} parameters, got {theta.shape}")
        layers = []
        for l, (ws, bs) in zip(self.layers, self.param_slices()):
            W = theta[ws].reshape(l.weight.shape)
            layers.append(Layer(W, None if bs is None else theta[bs]))
        return Mlp(layers)

    def with_last_layer(self, weight, bias=None):
        last = self.layers[-1]
        if bias is None:
            bias = last.bias
        return Mlp(self.layers[:-1] + (Layer(weight, bias),))

    def __eq__(self, other):
        if not isinstance(other, Mlp) or len(self.layers) != len(other.layers):
            return False
        return self.has_bias == other.has_bias and np.array_equal(self.params(), other.params()) \
            and self.sizes == other.sizes

    def __repr__(self):
        return f"Mlp(sizes={self.sizes}, bias={self.has_bias})"

    # serialization

    def to_dict(self):
        return {
            "activation": "relu",
            "layers": [
                {
                    "weight": l.weight.tolist(),
                    "bias": None if l.bias is None else l.bias.tolist(),
                }
                for l in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("activation", "relu") != "relu":
            raise ValueError(f"unsupported activation {d.get('activation')!r}")
        return cls([Layer(np.array(l["weight"], dtype=float), None if l.get("bias") is None
                          else np.array(l["bias"], dtype=float)) for l in d["layers"]])

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(dumps_exact(self.to_dict()))
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def dumps_exact(obj):
    """JSON text where every float carries 17 significant digits."""
    if isinstance(obj, dict):
        items = ", ".join(f"{json.dumps(str(k))}: {dumps_exact(v)}" for k, v in obj.items())
        return "{" + items + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(dumps_exact(v) for v in obj) + "]"
    if isinstance(obj, (bool, np.bool_)) or obj is None:
        return json.dumps(bool(obj) if obj is not None else None)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not np.isfinite(x):
            raise ValueError("cannot serialize non-finite number")
        return format(x, ".17g")
    return json.dumps(obj)


# ---------------------------------------------------------------------------
# forward / backward passes


def _as_batch(net, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != net.input_dim:
        raise DimensionMismatch(f"input of shape {x.shape} for a network with input dim {net.input_dim}")
    return X, single


def _forward_trace(net, X):
    """Layer inputs and pre-activations for a batch."""
    inputs, preacts = [], []
    a = X
    for i, l in enumerate(net.layers):
        inputs.append(a)
        z = a @ l.weight.T
        if l.bias is not None:
            z = z + l.bias
        preacts.append(z)
        a = np.maximum(z, 0.0) if i < len(net.layers) - 1 else z
    return inputs, preacts


def forward(net, x):
    X, single = _as_batch(net, x)
    out = _forward_trace(net, X)[1][-1]
    return out[0] if single else out


def features(net, x):
    """Post-ReLU activations feeding the final linear layer."""
    if len(net.layers) < 2:
        raise DimensionMismatch("feature map needs at least two layers")
    X, single = _as_batch(net, x)
    phi = _forward_trace(net, X)[0][-1]
    return phi[0] if single else phi


def _backward(net, inputs, preacts, G):
    """Back-propagate output cotangents G (m, k); returns per-layer deltas dL/dz_l."""
    deltas = [None] * len(net.layers)
    delta = G
    for i in range(len(net.layers) - 1, -1, -1):
        deltas[i] = delta
        if i > 0:
            delta = (delta @ net.layers[i].weight) * (preacts[i - 1] > 0)
    return deltas


def per_example_param_grads(net, X, G):
    """Rows are d(G_i . f(x_i))/d(theta) for each example, shape (m, p)."""
    X, _ = _as_batch(net, X)
    G = np.asarray(G, dtype=float).reshape(X.shape[0], net.output_dim)
    inputs, preacts = _forward_trace(net, X)
    deltas = _backward(net, inputs, preacts, G)
    parts = []
    for a, d, l in zip(inputs, deltas, net.layers):
        parts.append((d[:, :, None] * a[:, None, :]).reshape(X.shape[0], -1))
        if l.bias is not None:
            parts.append(d)
    return np.concatenate(parts, axis=1)


def summed_param_grads(net, X, G):
    """sum_i d(G_i . f(x_i))/d(theta) without materialising per-example rows."""
    X, _ = _as_batch(net, X)
    G = np.asarray(G, dtype=float).reshape(X.shape[0], net.output_dim)
    inputs, preacts = _forward_trace(net, X)
    deltas = _backward(net, inputs, preacts, G)
    parts = []
    for a, d, l in zip(inputs, deltas, net.layers):
        parts.append((d.T @ a).ravel())
        if l.bias is not None:
            parts.append(d.sum(axis=0))
    return np.concatenate(parts)


def param_jacobian(net, x):
    """d f_j(x) / d theta for every output j: shape (m, k, p), or (k, p) for one point."""
    X, single = _as_batch(net, x)
    m, k = X.shape[0], net.output_dim
    J = np.empty((m, k, net.n_params))
    for j in range(k):
        G = np.zeros((m, k))
        G[:, j] = 1.0
        J[:, j, :] = per_example_param_grads(net, X, G)
    return J[0] if single else J


def grad_params(net, x, output_index=0):
    X, single = _as_batch(net, x)
    if not 0 <= output_index < net.output_dim:
        raise IndexError(f"output_index {output_index} out of range")
    G = np.zeros((X.shape[0], net.output_dim))
    G[:, output_index] = 1.0
    d = per_example_param_grads(net, X, G)
    return d[0] if single else d


def input_vjp(net, X, G):
    """d(G_i . f(x_i))/d(x_i) for each row, shape (m, n)."""
    X, _ = _as_batch(net, X)
    G = np.asarray(G, dtype=float).reshape(X.shape[0], net.output_dim)
    inputs, preacts = _forward_trace(net, X)
    deltas = _backward(net, inputs, preacts, G)
    return deltas[0] @ net.layers[0].weight


def grad_input(net, x, output_index=0):
    X, single = _as_batch(net, x)
    G = np.zeros((X.shape[0], net.output_dim))
    G[:, output_index] = 1.0
    g = input_vjp(net, X, G)
    return g[0] if single else g


# ---------------------------------------------------------------------------
# piecewise-affine structure


@dataclass(frozen=True)
class LinearRegionAffine:
    """Local affine map f(x) = U x + c on one linear region.

    For a binary head ``U`` has a single row; ``u`` returns it as a vector.
    """

    U: np.ndarray
    c: np.ndarray
    jacobian: np.ndarray | None = None
    stable_from_delta: float | None = None

    @property
    def u(self):
        return self.U[0]

    @property
    def c_scalar(self):
        return float(self.c[0])


def activation_pattern(net, x):
    """Boolean vector over all hidden units: pre-activation strictly positive."""
    X, single = _as_batch(net, x)
    _, preacts = _forward_trace(net, X)
    bits = np.concatenate([z > 0 for z in preacts[:-1]], axis=1) if len(preacts) > 1 \
        else np.zeros((X.shape[0], 0), dtype=bool)
    return bits[0] if single else bits


def local_jacobian_input(net, x):
    """U such that f = U x + c on x's region (k x n)."""
    x = np.asarray(x, dtype=float)
    _, preacts = _forward_trace(net, x[None, :])
    U = net.layers[0].weight
    for l, z in zip(net.layers[1:], preacts[:-1]):
        U = l.weight @ ((z[0] > 0)[:, None] * U)
    return U


def affine_region(net, x):
    x = np.asarray(x, dtype=float)
    U = local_jacobian_input(net, x)
    c = np.atleast_1d(forward(net, x)) - U @ x
    return LinearRegionAffine(U, c)


def feature_affine(net, x):
    """(U, c) with phi(x') = U x' + c on x's region; U is d x n."""
    x = np.asarray(x, dtype=float)
    _, preacts = _forward_trace(net, x[None, :])
    U = np.eye(net.input_dim)
    c = np.zeros(net.input_dim)
    for l, z in zip(net.layers[:-1], preacts[:-1]):
        mask = (z[0] > 0).astype(float)
        U = mask[:, None] * (l.weight @ U)
        c = mask * (l.weight @ c + (0.0 if l.bias is None else l.bias))
    return U, c


def region_stability_scale(net, x, delta_grid):
    """Smallest grid value from which the activation pattern of delta*x stops changing."""
    grid = np.asarray(delta_grid, dtype=float)
    if grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("delta_grid must be nonempty, positive and increasing")
    x = np.asarray(x, dtype=float)
    patterns = activation_pattern(net, grid[:, None] * x[None, :])
    if grid.size >= 2 and not np.array_equal(patterns[-1], patterns[-2]):
        raise Unstable("activation pattern still changing at the end of the grid")
    i = grid.size - 1
    while i > 0 and np.array_equal(patterns[i - 1], patterns[-1]):
        i -= 1
    return float(grid[i])


def _check_interior(net, x):
    _, preacts = _forward_trace(net, x[None, :])
    tol = BOUNDARY_RTOL * (1.0 + np.linalg.norm(x))
    for z in preacts[:-1]:
        if np.any(np.abs(z) < tol):
            raise RegionBoundary("a hidden pre-activation is within tolerance of zero")


def region_jacobian(net, x):
    """J[i, j] = d u_i / d theta_j by central differences (binary heads only)."""
    if net.output_dim != 1:
        raise DimensionMismatch("region_jacobian needs a binary (single-output) network")
    x = np.asarray(x, dtype=float)
    _check_interior(net, x)
    theta = net.params()
    J = np.empty((net.input_dim, theta.size))
    for j in range(theta.size):
        h = FD_REL_STEP * (1.0 + abs(theta[j]))
        tp, tm = theta.copy(), theta.copy()
        tp[j] += h
        tm[j] -= h
        J[:, j] = (grad_input(net.with_params(tp), x) - grad_input(net.with_params(tm), x)) / (2 * h)
    return J


def certified_region(net, x, delta_grid, with_jacobian=False):
    """Region reached by the ray delta*x, certified on ``delta_grid``.

    The affine map is read off at the largest grid point; ``u`` and ``c`` are
    the same anywhere on the region.
    """
    alpha = region_stability_scale(net, x, delta_grid)
    probe = float(np.asarray(delta_grid)[-1]) * np.asarray(x, dtype=float)
    region = affine_region(net, probe)
    J = region_jacobian(net, probe) if with_jacobian else None
    return LinearRegionAffine(region.U, region.c, J, alpha)
