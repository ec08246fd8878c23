"""Independent reference implementations used as test oracles.

Everything here is deliberately naive: explicit loops, finite differences,
brute force. None of it shares code paths with the library beyond the public
Mlp container.
"""
import math

import numpy as np

from relu_laplace.network import Layer, Mlp


def naive_forward(net, x):
    a = np.asarray(x, dtype=float)
    for i, layer in enumerate(net.layers):
        z = np.zeros(layer.weight.shape[0])
        for r in range(layer.weight.shape[0]):
            s = 0.0
            for c in range(layer.weight.shape[1]):
                s += layer.weight[r, c] * a[c]
            if layer.bias is not None:
                s += layer.bias[r]
            z[r] = s
        a = np.array([max(v, 0.0) for v in z]) if i < len(net.layers) - 1 else z
    return a


def fd_gradient(fn, theta, rel_step=1e-5):
    g = np.empty_like(theta)
    for j in range(theta.size):
        h = rel_step * (1.0 + abs(theta[j]))
        tp, tm = theta.copy(), theta.copy()
        tp[j] += h
        tm[j] -= h
        g[j] = (fn(tp) - fn(tm)) / (2 * h)
    return g


def fd_hessian(fn, theta, step=1e-4):
    n = theta.size
    H = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            def at(a, b):
                t = theta.copy()
                t[i] += a
                t[j] += b
                return fn(t)
            H[i, j] = (at(step, step) - at(step, -step) - at(-step, step) + at(-step, -step)) / (4 * step * step)
    return 0.5 * (H + H.T)


def softmax_row(z):
    z = np.asarray(z, dtype=float)
    e = [math.exp(v - max(z)) for v in z]
    s = sum(e)
    return np.array([v / s for v in e])


def naive_nll(logits, labels):
    """Mean cross entropy, one row at a time; one logit column means binary."""
    total = 0.0
    for row, y in zip(np.atleast_2d(logits), labels):
        if row.size == 1:
            p1 = 1.0 / (1.0 + math.exp(-row[0]))
            p = p1 if y == 1 else 1.0 - p1
        else:
            p = softmax_row(row)[y]
        total += -math.log(p)
    return total / len(labels)


def brute_auroc(a, b):
    wins = ties = 0
    for x in a:
        for y in b:
            if x > y:
                wins += 1
            elif x == y:
                ties += 1
    return 100.0 * (wins + 0.5 * ties) / (len(a) * len(b))


def random_spd(rng, n, cond=10.0):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    ev = np.exp(rng.uniform(0, math.log(cond), n))
    return (Q * ev) @ Q.T


def logistic_gauss_mc(m, v, n, rng):
    a = m + math.sqrt(v) * rng.standard_normal(n)
    return float(np.mean(1.0 / (1.0 + np.exp(-a))))


def random_net(rng, sizes, bias=True, scale=1.0):
    layers = []
    for a, b in zip(sizes[:-1], sizes[1:]):
        W = scale * rng.standard_normal((b, a))
        layers.append(Layer(W, 0.5 * rng.standard_normal(b) if bias else None))
    return Mlp(layers)
