"""MAP training by minibatch SGD and the temperature-scaling baseline."""
from dataclasses import dataclass
import math

import numpy as np

from ._numerics import PROB_FLOOR, class_probs, log_class_probs
from .errors import Diverged
from .network import forward, summed_param_grads

LR_MILESTONES = (0.5, 0.75, 0.95)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 128
    learning_rate: float = 0.1
    weight_decay: float = 5e-4
    momentum: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")


@dataclass(frozen=True)
class Temperature:
    t: float

    def __post_init__(self):
        if not self.t > 0:
            raise ValueError("temperature must be positive")


def _onehot_residual(logits, y):
    """d(mean NLL)/d(logits) up to the 1/m factor."""
    if logits.shape[1] == 1:
        return class_probs(logits)[:, 1:2] - y[:, None]
    R = class_probs(logits)
    R[np.arange(len(y)), y] -= 1.0
    return R


def loss_and_grad(net, X, y):
    """Mean cross-entropy on (X, y) and its gradient w.r.t. the flat parameters."""
    logits = forward(net, X)
    logp = log_class_probs(logits)
    loss = -logp[np.arange(len(y)), y].mean()
    G = _onehot_residual(logits, y) / len(y)
    return float(loss), summed_param_grads(net, X, G)


def nll(net, data, temperature=1.0):
    """Mean negative log-likelihood of the MAP predictive at a given temperature."""
    return logits_nll(forward(net, data.inputs), data.labels, temperature)


def logits_nll(logits, labels, temperature=1.0):
    if not temperature > 0:
        raise ValueError("temperature must be positive")
    logits = np.asarray(logits, dtype=float)
    if logits.ndim == 1:
        logits = logits[:, None]
    logp = log_class_probs(logits / temperature)
    picked = logp[np.arange(len(labels)), np.asarray(labels)]
    return float(-np.maximum(picked, math.log(PROB_FLOOR)).mean())


def accuracy(net, data):
    logits = forward(net, data.inputs)
    pred = (logits[:, 0] > 0).astype(int) if logits.shape[1] == 1 else logits.argmax(axis=1)
    return float((pred == data.labels).mean())


def _lr_at(cfg, epoch):
    marks = [int(f * cfg.epochs) for f in LR_MILESTONES]
    return cfg.learning_rate / 10 ** sum(1 for m in marks if 0 < m <= epoch)


def train_map(net, data, cfg, history=None):
    """SGD with momentum and weight decay; returns the trained network.

    If ``history`` is a list, one ``(epoch, loss, accuracy)`` tuple per epoch is
    appended, measured on the full training set after the epoch.
    """
    if net.output_dim == 1 and data.k != 2:
        raise ValueError("a single-output network needs binary labels")
    if net.output_dim > 1 and data.k > net.output_dim:
        raise ValueError("more classes than network outputs")
    rng = np.random.default_rng(cfg.seed)
    theta = net.params()
    velocity = np.zeros_like(theta)
    X, y = data.inputs, data.labels
    n = len(data)
    for epoch in range(cfg.epochs):
        lr = _lr_at(cfg, epoch)
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            loss, grad = loss_and_grad(net, X[idx], y[idx])
            if not math.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise Diverged(f"non-finite loss at epoch {epoch}")
            grad = grad + cfg.weight_decay * theta
            velocity = cfg.momentum * velocity + grad
            theta = theta - lr * velocity
            net = net.with_params(theta)
        if history is not None:
            history.append((epoch, nll(net, data), accuracy(net, data)))
    if not math.isfinite(nll(net, data)):
        raise Diverged("non-finite loss after training")
    return net


def _golden_section(fn, lo, hi, tol):
    invphi = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fn(d)
    return 0.5 * (a + b)


def fit_temperature(logits, labels, log_t_bounds=(-3.0, 3.0), tol=1e-4):
    """Temperature minimising validation NLL, searched over log T."""
    logits = np.asarray(logits, dtype=float)
    labels = np.asarray(labels)
    if len(labels) < 1:
        raise ValueError("need at least one validation example")
    log_t = _golden_section(lambda s: logits_nll(logits, labels, math.exp(s)), *log_t_bounds, tol)
    return Temperature(math.exp(log_t))


def temperature_predict(logits, T):
    t = T.t if isinstance(T, Temperature) else float(T)
    if not t > 0:
        raise ValueError("temperature must be positive")
    logits = np.asarray(logits, dtype=float)
    if logits.ndim == 1:
        return class_probs(logits[None, :] / t)[0]
    return class_probs(logits / t)
