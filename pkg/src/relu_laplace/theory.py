"""Numerical checks of the asymptotic-confidence results for Laplace-approximated ReLU nets.

Binary heads only. On a ray delta * x the network is eventually affine, so the
softened logit z(delta x) converges; the helpers here compute that limit in
closed form, bound it, and probe it at a large finite delta.
"""
from dataclasses import asdict, dataclass
import math

import numpy as np

from ._numerics import sigmoid
from .errors import BiasedNetwork, DimensionMismatch, RankDeficient
from .laplace import FullAllLayers, LastLayerFull
from .linalg import eigvalsh_desc, min_singular_value, quad_form
from .network import certified_region, feature_affine, features, forward, grad_params, region_stability_scale
from .predictive import (
    PROBIT_SCALE_SQ,
    binary_all_layer_moments,
    binary_last_layer_moments,
    softened_logit,
)

DEFAULT_DELTA_GRID = np.logspace(0, 6, 61)
LIMIT_RTOL = 1e-3
BOUND_SLACK = 1e-6
MONOTONE_SLACK = 1e-9
RANK_TOL = 1e-10


@dataclass(frozen=True)
class TheoremReport:
    """One ray's check. ``degenerate`` marks rays on which the limit is not defined."""

    empirical_limit: float
    closed_form_limit: float
    bound: float
    alpha: float
    monotone_ok: bool | None
    satisfied: bool
    degenerate: bool = False

    def to_dict(self):
        return asdict(self)


def softened_z(net, post, x):
    """z(x) under the binary probit path; ``post=None`` gives the MAP logit."""
    x = np.asarray(x, dtype=float)
    X = x[None, :] if x.ndim == 1 else x
    if post is None:
        z = forward(net, X)[:, 0]
    elif isinstance(post, LastLayerFull):
        z = softened_logit(*binary_last_layer_moments(net, post, X))
    elif isinstance(post, FullAllLayers):
        z = softened_logit(*binary_all_layer_moments(net, post, X))
    else:
        raise TypeError(f"no closed-form z for {type(post).__name__}")
    return float(z[0]) if x.ndim == 1 else z


def _ratio(num, quad):
    """|num| / sqrt(pi/8 * quad), with 0/0 read as 0."""
    if quad <= 0.0:
        return 0.0 if num == 0.0 else math.inf
    return abs(num) / math.sqrt(PROBIT_SCALE_SQ * quad)


def asymptotic_z_last_layer(net, post, x, delta_grid=DEFAULT_DELTA_GRID):
    """lim |z(delta x)| for a last-layer posterior: |mu^T U x| / sqrt(pi/8 (Ux)^T Sigma (Ux))."""
    region_stability_scale(net, x, delta_grid)
    probe = float(np.asarray(delta_grid)[-1]) * np.asarray(x, dtype=float)
    U, _ = feature_affine(net, probe)
    Ux = U @ np.asarray(x, dtype=float)
    return _ratio(float(post.mean @ Ux), quad_form(Ux, post.cov))


def thm24_bound(post):
    """||mu|| / sqrt(pi/8 lambda_min(Sigma)), pre-sigmoid."""
    lam_min = float(eigvalsh_desc(post.cov)[-1])
    return float(np.linalg.norm(post.mean)) / math.sqrt(PROBIT_SCALE_SQ * lam_min)


def thm23_bound(post, region):
    """||u|| / (s_min(J) sqrt(pi/8 lambda_min(Sigma))), pre-sigmoid."""
    if region.jacobian is None:
        raise ValueError("region carries no parameter Jacobian")
    n, p = region.jacobian.shape
    if p < n:
        raise DimensionMismatch(f"the bound needs at least as many parameters ({p}) as inputs ({n})")
    s_min = min_singular_value(region.jacobian.T)
    if s_min < RANK_TOL:
        raise RankDeficient(f"s_min(J) = {s_min:.3g}")
    lam_min = float(eigvalsh_desc(post.cov)[-1])
    return float(np.linalg.norm(region.u)) / (s_min * math.sqrt(PROBIT_SCALE_SQ * lam_min))


def asymptotic_z_all_layer(net, post, x, delta_grid=DEFAULT_DELTA_GRID, region=None):
    """lim |z(delta x)| for an all-layer posterior: |u^T x| / sqrt(pi/8 (J^T x)^T Sigma (J^T x))."""
    x = np.asarray(x, dtype=float)
    if region is None:
        region = certified_region(net, x, delta_grid, with_jacobian=True)
    Jx = region.jacobian.T @ x
    return _ratio(float(region.u @ x), quad_form(Jx, post.cov))


def scan_delta(net, post, x, delta_grid):
    """(delta, |z(delta x)|, confidence) for each grid point."""
    grid = np.asarray(delta_grid, dtype=float)
    if grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("delta_grid must be nonempty, positive and increasing")
    z = np.abs(softened_z(net, post, grid[:, None] * np.asarray(x, dtype=float)[None, :]))
    return np.stack([grid, z, sigmoid(z)], axis=1)


def _non_decreasing(values, slack=MONOTONE_SLACK):
    v = np.asarray(values, dtype=float)
    return bool(np.all(np.diff(v) >= -slack * (1.0 + np.abs(v[:-1]))))


def verify_delta_monotonicity(net, post, x, delta_grid):
    """True iff |z(delta x)| is non-decreasing along a grid that starts at or past the stability scale."""
    if net.has_bias:
        raise BiasedNetwork("monotonicity in delta needs a bias-free network")
    grid = np.asarray(delta_grid, dtype=float)
    alpha = region_stability_scale(net, x, grid)
    if grid[0] < alpha:
        raise ValueError(f"grid starts at {grid[0]:.3g}, below the stability scale {alpha:.3g}")
    return _non_decreasing(scan_delta(net, post, x, grid)[:, 1])


def _report(net, post, x, delta_grid, closed_form, bound, rtol):
    grid = np.asarray(delta_grid, dtype=float)
    alpha = region_stability_scale(net, x, grid)
    z_far = abs(softened_z(net, post, grid[-1] * np.asarray(x, dtype=float)))
    monotone = None
    if not net.has_bias:
        tail = grid[grid >= alpha]
        monotone = _non_decreasing(scan_delta(net, post, x, tail)[:, 1])
    degenerate = closed_form == 0.0
    close = degenerate or abs(z_far - closed_form) <= rtol * max(closed_form, 1e-300)
    satisfied = z_far <= bound + BOUND_SLACK and close and monotone is not False
    return TheoremReport(z_far, closed_form, bound, alpha, monotone, bool(satisfied), degenerate)


def check_ray_last_layer(net, post, x, delta_grid=DEFAULT_DELTA_GRID, rtol=LIMIT_RTOL):
    """Limit, bound and (bias-free nets) monotonicity for one ray under a last-layer posterior."""
    return _report(net, post, x, delta_grid, asymptotic_z_last_layer(net, post, x, delta_grid),
                   thm24_bound(post), rtol)


def check_ray_all_layer(net, post, x, delta_grid=DEFAULT_DELTA_GRID, rtol=LIMIT_RTOL):
    """As ``check_ray_last_layer`` for a full all-layer posterior."""
    region = certified_region(net, x, delta_grid, with_jacobian=True)
    closed = asymptotic_z_all_layer(net, post, x, delta_grid, region)
    return _report(net, post, x, delta_grid, closed, thm23_bound(post, region), rtol)


def random_rays(n, dim, seed):
    """``n`` unit vectors drawn uniformly on the sphere."""
    V = np.random.default_rng(seed).standard_normal((n, dim))
    return V / np.linalg.norm(V, axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# dependence on the prior variance


@dataclass(frozen=True)
class PriorVarianceReport:
    """Confidence along a prior-variance grid for one input.

    ``upper_limit`` is the large-prior cap sigma(|f| / (1 + sqrt(pi/8 lambda_max(H) ||d||^2)));
    ``eigen_limit`` is sigma(|f| / sqrt(1 + pi/8 ||d||^2 / lambda_max(H))), the cap implied
    by lambda_min(Sigma) -> 1 / lambda_max(H). H is the total data curvature and d
    the gradient of the logit w.r.t. the Gaussian's parameters.
    """

    sigma0_grid: np.ndarray
    confidences: np.ndarray
    map_confidence: float
    small_prior_confidence: float
    large_prior_confidence: float
    upper_limit: float
    eigen_limit: float
    monotone_ok: bool
    small_prior_ok: bool
    upper_limit_ok: bool
    eigen_limit_ok: bool

    @property
    def satisfied(self):
        return self.monotone_ok and self.small_prior_ok and self.upper_limit_ok


SMALL_PRIOR = 1e-8
LARGE_PRIOR = 1e8
SMALL_PRIOR_ATOL = 1e-3


def _curvature_and_gradient(net, post, x):
    """(H, d, f_mu(x)) with the last-layer bias folded in when it has its own Gaussian."""
    x = np.asarray(x, dtype=float)
    if isinstance(post, LastLayerFull):
        phi = features(net, x)
        H, d = post.curvature, phi
        if post.bias is not None:
            H = np.block([[H, np.zeros((H.shape[0], 1))], [np.zeros((1, H.shape[0])), post.bias.curvature]])
            d = np.append(phi, 1.0)
        m, _ = binary_last_layer_moments(net, post, x)
        return H, d, float(m[0])
    if isinstance(post, FullAllLayers):
        mean_net = net.with_params(post.mean)
        return post.curvature, grad_params(mean_net, x), float(forward(mean_net, x)[0])
    raise TypeError(f"prior-variance check needs a binary LastLayerFull or FullAllLayers, got {type(post).__name__}")


def verify_sigma0_monotonicity(net, post, x, sigma0_grid):
    """Rebuild the covariance for each prior variance from the stored curvature and check the limits."""
    grid = np.asarray(sigma0_grid, dtype=float)
    if grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("sigma0_grid must be nonempty, positive and increasing")

    def conf(s2):
        return float(sigmoid(abs(softened_z(net, post.with_prior(s2), x))))

    confs = np.array([conf(s2) for s2 in grid])
    H, d, f = _curvature_and_gradient(net, post, x)
    lam_max = float(eigvalsh_desc(H)[0])
    dd = float(d @ d)
    upper = float(sigmoid(abs(f) / (1.0 + math.sqrt(PROBIT_SCALE_SQ * lam_max * dd))))
    eigen = float(sigmoid(abs(f) / math.sqrt(1.0 + PROBIT_SCALE_SQ * dd / lam_max))) if lam_max > 0 else 0.5
    map_conf = float(sigmoid(abs(f)))
    small, large = conf(SMALL_PRIOR), conf(LARGE_PRIOR)
    return PriorVarianceReport(
        sigma0_grid=grid,
        confidences=confs,
        map_confidence=map_conf,
        small_prior_confidence=small,
        large_prior_confidence=large,
        upper_limit=upper,
        eigen_limit=eigen,
        monotone_ok=bool(np.all(np.diff(confs) <= MONOTONE_SLACK)),
        small_prior_ok=abs(small - map_conf) <= SMALL_PRIOR_ATOL,
        upper_limit_ok=large <= upper + MONOTONE_SLACK,
        eigen_limit_ok=large <= eigen + MONOTONE_SLACK,
    )


def decision_mismatches(net, post, X):
    """Number of inputs where the probit-path class differs from the MAP class."""
    z = softened_z(net, post, X)
    f = forward(net, X)[:, 0] if isinstance(post, LastLayerFull) or post is None \
        else forward(net.with_params(post.mean), X)[:, 0]
    return int(np.sum((z > 0) != (f > 0)))
