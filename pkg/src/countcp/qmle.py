"""Poisson quasi-maximum likelihood on a single segment.

Segments are given as 1-based inclusive index pairs ``(i, l)``. Two
conventions for the mean path on a segment are supported:

``history="full"`` (default)
    lambda_t is computed from the observed past ``y_1..y_{t-1}`` (zero before
    ``y_1``) and the segment's own parameter. The likelihood of ``(i, l)``
    then depends on ``y[:l]``, and it is additive across a split when both
    sides share the same parameter.
``history="segment"``
    the recursion restarts from a zero history at ``i``, so the likelihood
    depends on ``y[i-1:l]`` only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .errors import DomainError, SingularCovarianceError
from .models import MeanFamily, _as_counts

COND_LIMIT = 1e10
HISTORY_MODES = ("full", "segment")


@dataclass(frozen=True)
class OptimizerOptions:
    tol: float = 1e-6
    max_iter: int = 200
    # "full": optimize from every start; "best": only from the best-scoring start
    multistart: str = "full"


@dataclass(frozen=True)
class SegmentFit:
    range: tuple[int, int]
    theta_hat: np.ndarray
    loglik: float
    converged: bool
    iterations: int

    @property
    def length(self) -> int:
        return self.range[1] - self.range[0] + 1


@dataclass(frozen=True)
class CovarianceEstimate:
    j_hat: np.ndarray
    i_hat: np.ndarray
    sigma_hat: np.ndarray
    std_errors: np.ndarray
    n_seg: int


def _check_history(history: str) -> int:
    if history not in HISTORY_MODES:
        raise DomainError(f"history must be one of {HISTORY_MODES}, got {history!r}")
    return 1 if history == "full" else 0


def _bounds(y, rng) -> tuple[np.ndarray, int, int]:
    yf = _as_counts(y)
    i, l = int(rng[0]), int(rng[1])
    if not 1 <= i <= l <= yf.size:
        raise DomainError(f"invalid segment ({i}, {l}) for a series of length {yf.size}")
    return yf, i - 1, l


class _Objective:
    """Kernel inputs for one segment: representation, design and the slice of
    ``y`` the kernels read (the segment itself, or for INGARCH with full
    history the whole prefix ending at the segment)."""

    def __init__(self, family: MeanFamily, y, rng, history: str = "full"):
        hist = _check_history(history)
        yf, a, b = _bounds(y, rng)
        self.family = family
        self.yseg = np.ascontiguousarray(yf[a:b])
        self.m = b - a
        prev0 = yf[a - 1] if (hist and a > 0) else 0.0
        self.lag0 = prev0
        if family.variant in ("inarch1", "bininarch1") and max(self.yseg.max(), prev0) <= K.PAIR_MAX:
            self.kind, self.X, self.c = K.PAIRS, K.pair_table(self.yseg, int(prev0)), np.zeros(1)
            self.ys = self.yseg
        elif family.is_affine:
            pre = np.ascontiguousarray(yf[:b])
            self.kind = K.AFFINE
            self.X, self.c = K.affine_design(family.code, pre, a, family.decay(b), hist)
            self.ys = self.yseg
        else:
            self.kind, self.X, self.c = K.GARCH, np.zeros((1, 1)), np.zeros(1)
            self.ys = np.ascontiguousarray(yf[:b]) if hist else self.yseg

    def __call__(self, theta, want: int = 0):
        d = self.family.dim
        g = np.empty(d)
        H = np.empty((d, d))
        ll = K.evaluate(self.kind, np.asarray(theta, dtype=float), self.X, self.c, self.ys,
                        self.m, g, H, want)
        return ll, g, H


def quasi_log_likelihood(y, rng, theta, family: MeanFamily, history: str = "full") -> float:
    """Sum of ``y_t log lambda_t - lambda_t`` over the segment ``rng``."""
    theta = family.check_theta(theta)
    return _Objective(family, y, rng, history)(theta, 0)[0]


def quasi_score(y, rng, theta, family: MeanFamily, history: str = "full") -> np.ndarray:
    """Gradient of :func:`quasi_log_likelihood` in theta."""
    theta = family.check_theta(theta)
    return _Objective(family, y, rng, history)(theta, 1)[1]


def hessian_matrix(y, rng, theta, family: MeanFamily, history: str = "full") -> np.ndarray:
    """Average second derivative of the segment quasi-likelihood."""
    theta = family.check_theta(theta)
    obj = _Objective(family, y, rng, history)
    return obj(theta, 2)[2] / obj.m


def start_points(family: MeanFamily, yseg: np.ndarray, warm_start=None) -> list[np.ndarray]:
    """Box center, optional warm start and a moment-based seed, all feasible."""
    seed = np.empty(family.dim)
    K.mom_seed(family.code, float(yseg.mean()), family.decay_sum(), family.dim, seed)
    points = [family.space.center()]
    if warm_start is not None:
        points.append(family.space.project(np.asarray(warm_start, dtype=float)))
    points.append(family.space.project(seed))
    return points


def _unidentified(family: MeanFamily, obj: _Objective) -> np.ndarray:
    fixed = np.zeros(family.dim, dtype=bool)
    if family.variant in ("inarch1", "bininarch1"):
        fixed[1] = obj.lag0 == 0 and not np.any(obj.yseg[:-1] != 0)
    return fixed


def fit_segment(y, rng, family: MeanFamily, opts: OptimizerOptions | None = None,
                warm_start=None, history: str = "full") -> SegmentFit:
    """Maximize the segment quasi-likelihood over the parameter space.

    Runs the projected Newton solver from each start point (or only the best
    one when ``opts.multistart == "best"``) and keeps the highest value. A
    slope coefficient whose regressor is identically zero on the segment is
    pinned to its lower bound.
    """
    opts = opts or OptimizerOptions()
    obj = _Objective(family, y, rng, history)
    lower, upper, pi, pj, smax = family.space._kernel_args()
    fixed = _unidentified(family, obj)
    starts = start_points(family, obj.yseg, warm_start)
    for s in starts:
        s[fixed] = lower[fixed]
    if opts.multistart == "best":
        scores = [obj(s, 0)[0] for s in starts]
        starts = [starts[int(np.argmax(scores))]]
    elif opts.multistart != "full":
        raise DomainError(f"unknown multistart mode {opts.multistart!r}")

    best = None
    theta = np.empty(family.dim)
    stats = np.empty(3)
    for s in starts:
        ll = K.maximize(obj.kind, s, obj.X, obj.c, obj.ys, obj.m, lower, upper, pi, pj, smax,
                        fixed, opts.tol, opts.max_iter, theta, stats)
        if best is None or ll > best[0]:
            best = (ll, theta.copy(), bool(stats[0] > 0.5), int(stats[1]))
    ll, th, conv, it = best
    return SegmentFit((int(rng[0]), int(rng[1])), th, float(ll), conv, it)


def _inv_sym(A: np.ndarray) -> np.ndarray:
    import scipy.linalg

    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularCovarianceError(f"information matrix condition number {cond:.3g} exceeds {COND_LIMIT:.0e}")
    inv = scipy.linalg.solve(A, np.eye(A.shape[0]), assume_a="sym")
    return 0.5 * (inv + inv.T)


def information_matrices(yseg, lam, grad) -> tuple[np.ndarray, np.ndarray]:
    """Average outer products weighted by 1/lambda and by squared Pearson residuals."""
    m = yseg.size
    j_hat = (grad / lam[:, None]).T @ grad / m
    w = (yseg / lam - 1.0) ** 2
    i_hat = (grad * w[:, None]).T @ grad / m
    return 0.5 * (j_hat + j_hat.T), 0.5 * (i_hat + i_hat.T)


def segment_paths(y, rng, theta, family: MeanFamily, history: str = "full"):
    """Mean path and its gradient on the segment ``rng``, shapes (m,) and (m, d)."""
    from .models import mean_gradient_path, truncated_mean_path

    hist = _check_history(history)
    yf, a, b = _bounds(y, rng)
    src = yf[:b] if hist else yf[a:b]
    skip = a if hist else 0
    lam = truncated_mean_path(family, theta, src)[skip:]
    grad = mean_gradient_path(family, theta, src)[skip:]
    return lam, grad


def sandwich_covariance(y, rng, fit: SegmentFit, family: MeanFamily,
                        history: str = "full") -> CovarianceEstimate:
    """Robust covariance J^-1 I J^-1 of the segment estimator.

    Standard errors are ``sqrt(diag(sigma) / n_seg)``. Raises
    :class:`SingularCovarianceError` when J is numerically singular.
    """
    yf, a, b = _bounds(y, rng)
    yseg = yf[a:b]
    if yseg.size <= family.dim:
        raise DomainError("segment must be longer than the parameter dimension")
    lam, grad = segment_paths(yf, rng, fit.theta_hat, family, history)
    j_hat, i_hat = information_matrices(yseg, lam, grad)
    return covariance_from_matrices(j_hat, i_hat, yseg.size)


def covariance_from_matrices(j_hat, i_hat, n_seg: int) -> CovarianceEstimate:
    j_inv = _inv_sym(j_hat)
    sigma = j_inv @ i_hat @ j_inv
    sigma = 0.5 * (sigma + sigma.T)
    se = np.sqrt(np.clip(np.diag(sigma), 0.0, None) / n_seg)
    return CovarianceEstimate(j_hat, i_hat, sigma, se, n_seg)


def wald_tnoc(fit: SegmentFit, cov: CovarianceEstimate, coord: int) -> tuple[float, float]:
    """Two-sided z-test that one coefficient is zero."""
    se = float(cov.std_errors[coord])
    if not se > 0:
        raise DomainError("standard error must be positive")
    z = float(fit.theta_hat[coord]) / se
    return z, math.erfc(abs(z) / math.sqrt(2.0))
