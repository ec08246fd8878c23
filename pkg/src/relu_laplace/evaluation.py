"""OOD-detection and calibration metrics, scaled-noise OOD sets and a PGD confidence attack."""
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from ._numerics import class_probs
from .errors import EmptyInput, LengthMismatch
from .laplace import map_network
from .network import forward, input_vjp

ECE_BINS = 15


def _nonempty(v, name):
    v = np.asarray(v, dtype=float).ravel()
    if v.size == 0:
        raise EmptyInput(f"{name} is empty")
    return v


def mmc(confidences):
    """Mean maximum confidence, in percent."""
    return 100.0 * float(_nonempty(confidences, "confidences").mean())


def auroc(in_conf, out_conf):
    """Area under the ROC curve with in-distribution as the positive class, in percent.

    Mann-Whitney form: P(in > out) + P(in = out) / 2, from average ranks.
    """
    a = _nonempty(in_conf, "in_conf")
    b = _nonempty(out_conf, "out_conf")
    ranks = rankdata(np.concatenate([a, b]), method="average")
    u = ranks[: a.size].sum() - a.size * (a.size + 1) / 2.0
    return 100.0 * float(u) / (a.size * b.size)


def ece(confidences, correct, n_bins=ECE_BINS, k=2):
    """Expected calibration error over equal-width bins on [1/k, 1], in percent."""
    conf = np.asarray(confidences, dtype=float).ravel()
    hit = np.asarray(correct, dtype=float).ravel()
    if conf.shape != hit.shape:
        raise LengthMismatch(f"{conf.size} confidences but {hit.size} correctness flags")
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    if conf.size == 0:
        raise EmptyInput("no predictions")
    lo = 1.0 / k
    idx = np.clip(np.floor((conf - lo) / (1.0 - lo) * n_bins).astype(int), 0, n_bins - 1)
    total = 0.0
    for b in range(n_bins):
        sel = idx == b
        if sel.any():
            total += sel.sum() * abs(hit[sel].mean() - conf[sel].mean())
    return 100.0 * total / conf.size


def brier(probs, labels):
    """Mean squared distance between predictive vectors and one-hot labels.

    A 1-D ``probs`` is read as p(y=1) of a binary model.
    """
    P = np.asarray(probs, dtype=float)
    if P.ndim == 1:
        P = np.stack([1.0 - P, P], axis=1)
    y = np.asarray(labels).astype(int).ravel()
    if P.shape[0] != y.size:
        raise LengthMismatch(f"{P.shape[0]} predictions but {y.size} labels")
    onehot = np.zeros_like(P)
    onehot[np.arange(y.size), y] = 1.0
    return float(((P - onehot) ** 2).sum(axis=1).mean())


def make_noise_ood(n, dim, delta, seed):
    """``n`` rows of uniform(0, 1)^dim noise scaled by ``delta``."""
    if n < 1 or dim < 1:
        raise ValueError("n and dim must be >= 1")
    if not delta > 0:
        raise ValueError("delta must be positive")
    return np.random.default_rng(seed).random((n, dim)) * delta


def _confidence_ascent_direction(net, X):
    """Input gradient of the log max-class probability (up to a positive factor per row)."""
    logits = forward(net, X)
    if logits.shape[1] == 1:
        G = np.sign(logits)
    else:
        P = class_probs(logits)
        G = -P
        G[np.arange(X.shape[0]), P.argmax(axis=1)] += 1.0
    return input_vjp(net, X, G)


def _map_confidence(net, X):
    P = class_probs(forward(net, X))
    return P.max(axis=1)


def pgd_confidence_attack(net, x0, epsilon=0.3, steps=40, step_size=0.1, clamp_unit_box=False, post=None):
    """Projected sign-gradient ascent on the model's confidence in an l-inf ball.

    Gradients come from the posterior-mean network (the MAP). Each row keeps the
    iterate with the highest confidence seen, so the attack never lowers it.
    """
    if epsilon < 0 or not step_size > 0 or steps < 0:
        raise ValueError("need epsilon >= 0, step_size > 0 and steps >= 0")
    if post is not None:
        net = map_network(net, post)
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    lo, hi = x0 - epsilon, x0 + epsilon
    if clamp_unit_box:
        lo, hi = np.clip(lo, 0.0, 1.0), np.clip(hi, 0.0, 1.0)
    x = np.clip(x0, lo, hi)
    best, best_conf = x.copy(), _map_confidence(net, x)
    for _ in range(steps):
        x = np.clip(x + step_size * np.sign(_confidence_ascent_direction(net, x)), lo, hi)
        conf = _map_confidence(net, x)
        better = conf > best_conf
        best[better], best_conf[better] = x[better], conf[better]
    return best


@dataclass(frozen=True)
class MetricsReport:
    mmc_in: float
    mmc_out: float
    aur: float
    n_in: int
    n_out: int
    ece: float | None = None
    brier: float | None = None

    def __post_init__(self):
        for name in ("mmc_in", "mmc_out", "aur", "ece"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 100.0 + 1e-9:
                raise ValueError(f"{name}={v} is not a percentage")


def ood_report(out_in, out_out, labels_in=None):
    """MetricsReport from two PredictiveOutputs; ECE and Brier need in-distribution labels."""
    e = b = None
    if labels_in is not None:
        labels_in = np.asarray(labels_in)
        k = out_in.class_probs.shape[1]
        e = ece(out_in.confidence, out_in.predicted == labels_in, k=k)
        b = brier(out_in.class_probs, labels_in)
    return MetricsReport(
        mmc_in=mmc(out_in.confidence),
        mmc_out=mmc(out_out.confidence),
        aur=auroc(out_in.confidence, out_out.confidence),
        n_in=int(out_in.confidence.size),
        n_out=int(out_out.confidence.size),
        ece=e,
        brier=b,
    )
