"""Prior-variance selection: validation NLL traded against predictive entropy on noise."""
from dataclasses import dataclass, field

import numpy as np

from ._numerics import PROB_FLOOR
from .errors import EmptyInput
from .predictive import predict

DEFAULT_LAMBDA = 0.25


def default_grid():
    return np.logspace(-4, 4, 30)


@dataclass(frozen=True)
class TuneConfig:
    lambda_tradeoff: float = DEFAULT_LAMBDA
    grid: np.ndarray = field(default_factory=default_grid)
    seed: int = 0

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float).ravel()
        if not 0.0 <= self.lambda_tradeoff <= 1.0:
            raise ValueError("lambda_tradeoff must lie in [0, 1]")
        if g.size == 0 or np.any(g <= 0) or np.any(np.diff(g) <= 0):
            raise ValueError("grid must be nonempty, positive and increasing")
        object.__setattr__(self, "grid", g)


def entropy(probs):
    """Shannon entropy in nats of a probability vector, or of each row of a matrix."""
    P = np.asarray(probs, dtype=float)
    terms = np.where(P > 0, -P * np.log(np.where(P > 0, P, 1.0)), 0.0)
    return terms.sum(axis=-1)


def tuning_noise(inputs, n, seed):
    """Uniform noise over the bounding box of ``inputs``."""
    X = np.asarray(inputs, dtype=float)
    lo, hi = X.min(axis=0), X.max(axis=0)
    return lo + (hi - lo) * np.random.default_rng(seed).random((n, X.shape[1]))


def eq7_objective(net, post, sigma0_sq, val, ood, lambda_tradeoff, pred_cfg=None):
    """Mean validation NLL minus lambda times mean predictive entropy on ``ood``.

    Only the prior variance changes; the curvature held by ``post`` is reused.
    """
    if not sigma0_sq > 0:
        raise ValueError("sigma0_sq must be positive")
    if len(val) == 0 or len(ood) == 0:
        raise EmptyInput("validation and OOD sets must be nonempty")
    p = post.with_prior(sigma0_sq)
    P_val = predict(net, p, val.inputs, pred_cfg).class_probs
    picked = P_val[np.arange(len(val)), val.labels]
    nll = -np.log(np.maximum(picked, PROB_FLOOR)).mean()
    h = entropy(predict(net, p, ood, pred_cfg).class_probs).mean()
    return float(nll - lambda_tradeoff * h)


def objective_table(net, post, val, ood, cfg=None, pred_cfg=None):
    cfg = cfg or TuneConfig()
    return [(float(s2), eq7_objective(net, post, s2, val, ood, cfg.lambda_tradeoff, pred_cfg)) for s2 in cfg.grid]


def select_from_table(table):
    """Lowest objective; exact ties go to the larger prior variance."""
    return max(table, key=lambda row: (-row[1], row[0]))[0]


def optimize_prior_variance(net, post, val, ood, cfg=None, pred_cfg=None):
    """Grid argmin of the objective; returns (sigma0_sq, table)."""
    table = objective_table(net, post, val, ood, cfg, pred_cfg)
    return select_from_table(table), table


def tuned_posterior(net, post, val, ood, cfg=None, pred_cfg=None):
    s2, _ = optimize_prior_variance(net, post, val, ood, cfg, pred_cfg)
    return post.with_prior(s2)

