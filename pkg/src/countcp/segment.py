"""Penalized multiple change-point detection.

A segmentation of ``y_1..y_n`` into K pieces is scored by

    -2 * sum_k ML(T_k) + kappa * K,

where ML(T) is the maximized Poisson quasi-likelihood on segment T (by
default with the mean path driven by the full observed past, see
:mod:`countcp.qmle`). All
segment maxima are cached in a :class:`LikelihoodMatrix`; an exact dynamic
program then finds the best segmentation for every K <= k_max.

Boundaries are stored as ``t`` = index of the last observation of a segment
(1-based), which is also the 0-based end of the half-open slice.
"""

from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels as K
from .errors import CalibrationError, ConfigError, DomainError, SingularCovarianceError
from .models import MeanFamily, _as_counts
from .qmle import (HISTORY_MODES, CovarianceEstimate, OptimizerOptions, SegmentFit,
                   fit_segment, sandwich_covariance)

logger = logging.getLogger(__name__)

THREADS_ENV = "COUNTCP_THREADS"


def default_u_min(n: int) -> int:
    """Minimum segment length floor((ln n)^2)."""
    return int(math.floor(math.log(n) ** 2))


@dataclass(frozen=True)
class PenaltySpec:
    """Penalty rule: ``slope`` (data-driven), ``logn``, ``cuberoot`` or ``fixed``."""

    variant: str
    kappa: float | None = None

    def __post_init__(self):
        if self.variant not in ("slope", "logn", "cuberoot", "fixed"):
            raise DomainError(f"unknown penalty {self.variant!r}")
        if self.variant == "fixed" and not (self.kappa is not None and self.kappa > 0):
            raise DomainError("fixed penalty needs a positive kappa")

    @classmethod
    def parse(cls, text: str) -> "PenaltySpec":
        text = text.strip().lower()
        if text.startswith("fixed"):
            _, _, value = text.partition("=")
            try:
                return cls("fixed", float(value))
            except ValueError:
                raise DomainError(f"fixed penalty needs a value, e.g. fixed=23.04; got {text!r}") from None
        return cls(text)

    @property
    def name(self) -> str:
        return f"fixed={self.kappa:g}" if self.variant == "fixed" else self.variant


@dataclass(frozen=True)
class DetectionConfig:
    k_max: int = 15
    u_min: int | None = None  # None -> floor((ln n)^2)
    penalty: PenaltySpec = field(default_factory=lambda: PenaltySpec("slope"))
    grid_step: int = 1
    slope_window: tuple[int, int] | None = None
    optimizer: OptimizerOptions = field(default_factory=OptimizerOptions)
    # "full": segment means use the observed past; "segment": zero history at each start
    history: str = "full"

    def resolve(self, n: int, dim: int) -> tuple[int, int]:
        """Effective (k_max, u_min) for a series of length n.

        ``k_max`` is lowered to the largest K with ``K * u_min < n`` (at least 1).
        """
        if self.k_max < 1 or self.grid_step < 1:
            raise ConfigError("k_max and grid_step must be at least 1")
        if self.history not in HISTORY_MODES:
            raise ConfigError(f"history must be one of {HISTORY_MODES}")
        u_min = default_u_min(n) if self.u_min is None else int(self.u_min)
        u_min = max(u_min, 2, dim + 1) if self.u_min is None else u_min
        if u_min < 2:
            raise ConfigError("u_min must be at least 2")
        if n < u_min:
            raise ConfigError(f"series of length {n} is shorter than u_min={u_min}")
        k_max = max(1, min(self.k_max, (n - 1) // u_min))
        if k_max < self.k_max:
            logger.debug("k_max lowered from %d to %d for n=%d, u_min=%d", self.k_max, k_max, n, u_min)
        return k_max, u_min


@dataclass
class LikelihoodMatrix:
    """Cached segment maxima. ``values[a, b]`` is ML of ``y[a:b]`` (so the
    1-based segment is (a+1, b)); inadmissible cells hold -inf."""

    n: int
    u_min: int
    values: np.ndarray
    thetas: np.ndarray | None = None
    converged: np.ndarray | None = None
    iterations: np.ndarray | None = None

    @classmethod
    def from_values(cls, values, u_min: int = 1) -> "LikelihoodMatrix":
        """Wrap a synthetic ``(n+1, n+1)`` matrix, masking short or lower cells."""
        v = np.array(values, dtype=float)
        n = v.shape[0] - 1
        a, b = np.indices(v.shape)
        v[(b - a) < u_min] = -np.inf
        v[~np.isfinite(v) & ~np.isneginf(v)] = -np.inf
        return cls(n, u_min, v)

    def ml(self, i: int, l: int) -> float:
        """ML_{i,l} for the 1-based inclusive segment (i, l)."""
        return float(self.values[i - 1, l])

    def fit(self, i: int, l: int) -> SegmentFit:
        if self.thetas is None:
            raise DomainError("matrix holds no fits")
        a, b = i - 1, l
        if not np.isfinite(self.values[a, b]):
            raise DomainError(f"segment ({i}, {l}) is not admissible")
        return SegmentFit((i, l), self.thetas[a, b].copy(), float(self.values[a, b]),
                          bool(self.converged[a, b]), int(self.iterations[a, b]))

    def entries(self) -> int:
        return int(np.isfinite(self.values).sum())


def candidate_grid(n: int, u_min: int, grid_step: int) -> tuple[np.ndarray, np.ndarray]:
    """Admissible segment starts (0-based) and ends for the boundary grid."""
    ends = np.arange(grid_step, n + 1, grid_step, dtype=np.int64)
    if ends.size == 0 or ends[-1] != n:
        ends = np.append(ends, n)
    starts = np.concatenate(([0], ends[:-1]))
    starts = starts[starts <= n - u_min].astype(np.int64)
    return starts, ends


def _set_threads():
    value = os.environ.get(THREADS_ENV)
    if value:
        import numba

        numba.set_num_threads(max(1, min(int(value), numba.config.NUMBA_NUM_THREADS)))


def build_ml_matrix(y, family: MeanFamily, cfg: DetectionConfig) -> LikelihoodMatrix:
    """Fit the quasi-likelihood on every admissible segment.

    Rows (fixed start) are independent and run in parallel; along a row each
    fit is warm-started from the previous end point.
    """
    yf = _as_counts(y)
    n = yf.size
    _, u_min = cfg.resolve(n, family.dim)
    d = family.dim
    starts, ends = candidate_grid(n, u_min, cfg.grid_step)
    V = np.full((n + 1, n + 1), -np.inf)
    TH = np.full((n + 1, n + 1, d), np.nan)
    CONV = np.zeros((n + 1, n + 1), dtype=np.bool_)
    IT = np.zeros((n + 1, n + 1), dtype=np.int64)
    lower, upper, pi, pj, smax = family.space._kernel_args()
    _set_threads()
    hist = 1 if cfg.history == "full" else 0
    K.fill_matrix(family.kind, family.code, yf, starts, ends, u_min, hist, lower, upper, pi, pj,
                  smax, family.space.center(), family.decay(n), family.decay_sum(),
                  cfg.optimizer.tol, cfg.optimizer.max_iter, V, TH, CONV, IT)
    return LikelihoodMatrix(n, u_min, V, TH, CONV, IT)


@dataclass(frozen=True)
class DpTables:
    """``c[K-1, t]``: least penalized cost of y_1..y_t in K segments;
    ``z[K-1, t]``: the last boundary before t in that optimum."""

    c: np.ndarray
    z: np.ndarray
    kappa: float

    @property
    def k_max(self) -> int:
        return self.c.shape[0]

    @property
    def n(self) -> int:
        return self.c.shape[1] - 1

    def final_costs(self) -> np.ndarray:
        return self.c[:, -1].copy()

    def unpenalized(self) -> np.ndarray:
        """min over segmentations of QLIK(K), K = 1..k_max."""
        ks = np.arange(1, self.k_max + 1)
        return self.c[:, -1] - ks * self.kappa


def dp_solve(ml: LikelihoodMatrix | np.ndarray, kappa: float, k_max: int) -> DpTables:
    if kappa < 0 or k_max < 1:
        raise DomainError("kappa must be non-negative and k_max at least 1")
    values = ml.values if isinstance(ml, LikelihoodMatrix) else np.asarray(ml, dtype=float)
    C, Z = K.dp_tables(values, float(kappa), int(k_max))
    return DpTables(C, Z, float(kappa))


def select_k(tables: DpTables) -> int:
    """argmin_K c[K, n], ties going to the smaller K."""
    final = tables.final_costs()
    if not np.any(np.isfinite(final)):
        raise ConfigError("no admissible segmentation; u_min is too large for this series")
    return int(np.argmin(final)) + 1


def backtrack(tables: DpTables, k_hat: int) -> np.ndarray:
    """Interior boundaries t_1 < ... < t_{k_hat-1} of the optimal k_hat-segmentation."""
    if not np.isfinite(tables.c[k_hat - 1, -1]):
        raise DomainError(f"no admissible segmentation with {k_hat} segments")
    breaks = []
    t = tables.n
    for k in range(k_hat - 1, 0, -1):
        t = int(tables.z[k - 1, t])
        breaks.append(t)
    return np.array(breaks[::-1], dtype=np.int64)


def path_cost(ml: LikelihoodMatrix | np.ndarray, breaks, kappa: float) -> float:
    """Penalized cost of a segmentation, accumulated left to right."""
    values = ml.values if isinstance(ml, LikelihoodMatrix) else np.asarray(ml, dtype=float)
    n = values.shape[0] - 1
    bounds = [0, *[int(b) for b in breaks], n]
    cost = -2.0 * values[bounds[0], bounds[1]] + kappa
    for a, b in zip(bounds[1:-1], bounds[2:]):
        cost = cost - 2.0 * values[a, b] + kappa
    return float(cost)


@dataclass(frozen=True)
class SlopeFit:
    kappa: float
    slope: float
    intercept: float
    window: tuple[int, int]


def default_slope_window(k_max: int) -> tuple[int, int]:
    return math.ceil(k_max / 2) + 1, k_max


def slope_fit(unpenalized: Sequence[float], window: tuple[int, int] | None = None) -> SlopeFit:
    """Least-squares line through (K, -QLIK(K)) over the window; kappa = 2 * slope."""
    q = np.asarray(unpenalized, dtype=float)
    k_max = q.size
    if k_max < 4:
        raise CalibrationError(f"slope calibration needs k_max >= 4, got {k_max}; raise k_max")
    lo, hi = window or default_slope_window(k_max)
    if not 1 <= lo < hi <= k_max:
        raise CalibrationError(f"invalid slope window ({lo}, {hi}) for k_max={k_max}")
    ks = np.arange(lo, hi + 1, dtype=float)
    vals = -q[lo - 1:hi]
    if not np.all(np.isfinite(vals)):
        raise CalibrationError("contrast is infinite inside the slope window; lower k_max or u_min")
    kc = ks - ks.mean()
    slope = float(np.dot(kc, vals - vals.mean()) / np.dot(kc, kc))
    intercept = float(vals.mean() - slope * ks.mean())
    if not slope > 0:
        raise CalibrationError(f"fitted slope {slope:.4g} is not positive; k_max is either too "
                               "small or so large that K * u_min approaches n")
    return SlopeFit(2.0 * slope, slope, intercept, (lo, hi))


def slope_heuristic(unpenalized: Sequence[float], window: tuple[int, int] | None = None) -> float:
    """Penalty calibrated as twice the slope of the linear tail of -QLIK(K)."""
    return slope_fit(unpenalized, window).kappa


def penalty_value(spec: PenaltySpec, n: int, slope_input: Sequence[float] | None = None,
                  window: tuple[int, int] | None = None) -> float:
    if n < 2:
        raise DomainError("n must be at least 2")
    if spec.variant == "logn":
        kappa = math.log(n)
    elif spec.variant == "cuberoot":
        kappa = n ** (1.0 / 3.0)
    elif spec.variant == "fixed":
        kappa = float(spec.kappa)
    else:
        if slope_input is None:
            raise DomainError("slope penalty needs the unpenalized contrast curve")
        kappa = slope_heuristic(slope_input, window)
    if kappa > n:
        raise ConfigError(f"penalty {kappa:.4g} exceeds n={n}")
    return kappa


@dataclass
class Segmentation:
    k_hat: int
    breaks: np.ndarray
    tau_hat: np.ndarray
    theta_hats: list[np.ndarray]
    per_segment: list[SegmentFit]
    covariances: list[CovarianceEstimate | None]
    total_contrast: float
    kappa: float | None
    penalty: str
    n: int
    u_min: int
    k_max: int
    qlik: np.ndarray  # min QLIK(K), K = 1..k_max
    pen_qlik: np.ndarray  # min penQLIK(K)
    slope: SlopeFit | None = None

    @property
    def segments(self) -> list[tuple[int, int]]:
        bounds = [0, *self.breaks.tolist(), self.n]
        return [(a + 1, b) for a, b in zip(bounds[:-1], bounds[1:])]


def unpenalized_curve(ml: LikelihoodMatrix, k_max: int) -> np.ndarray:
    return dp_solve(ml, 0.0, k_max).unpenalized()


def segment_from_matrix(ml: LikelihoodMatrix, kappa: float, k_max: int) -> tuple[int, np.ndarray, DpTables]:
    tables = dp_solve(ml, kappa, k_max)
    k_hat = select_k(tables)
    return k_hat, backtrack(tables, k_hat), tables


def detect(y, family: MeanFamily, cfg: DetectionConfig | None = None,
           ml: LikelihoodMatrix | None = None) -> Segmentation:
    """Full pipeline: segment maxima, penalty, dynamic program, refits and
    robust standard errors for each estimated regime."""
    cfg = cfg or DetectionConfig()
    yf = _as_counts(y)
    n = yf.size
    k_max, u_min = cfg.resolve(n, family.dim)
    if ml is None:
        ml = build_ml_matrix(yf, family, cfg)
    qlik = unpenalized_curve(ml, k_max)

    slope = None
    if k_max == 1:
        kappa = None
        k_hat, breaks = 1, np.array([], dtype=np.int64)
        pen = qlik.copy()
    else:
        if cfg.penalty.variant == "slope":
            slope = slope_fit(qlik, cfg.slope_window)
            kappa = slope.kappa
            if kappa > n:
                raise ConfigError(f"penalty {kappa:.4g} exceeds n={n}")
        else:
            kappa = penalty_value(cfg.penalty, n)
        k_hat, breaks, tables = segment_from_matrix(ml, kappa, k_max)
        pen = tables.final_costs()

    bounds = [0, *breaks.tolist(), n]
    fits, covs = [], []
    for a, b in zip(bounds[:-1], bounds[1:]):
        start = ml.fit(a + 1, b) if ml.thetas is not None else None
        fit = fit_segment(yf, (a + 1, b), family, cfg.optimizer,
                          warm_start=None if start is None else start.theta_hat,
                          history=cfg.history)
        if start is not None and start.loglik > fit.loglik:
            fit = start
        fits.append(fit)
        try:
            covs.append(sandwich_covariance(yf, (a + 1, b), fit, family, cfg.history))
        except (SingularCovarianceError, DomainError) as exc:
            logger.info("no covariance for segment (%d, %d): %s", a + 1, b, exc)
            covs.append(None)
    total = sum(-2.0 * f.loglik for f in fits) + (kappa or 0.0) * k_hat
    return Segmentation(
        k_hat=k_hat,
        breaks=breaks,
        tau_hat=breaks / n,
        theta_hats=[f.theta_hat for f in fits],
        per_segment=fits,
        covariances=covs,
        total_contrast=float(total),
        kappa=kappa,
        penalty=cfg.penalty.name,
        n=n,
        u_min=u_min,
        k_max=k_max,
        qlik=qlik,
        pen_qlik=pen,
        slope=slope,
    )


def write_curve_csv(path, ks, values, header: tuple[str, str], summary: str | None = None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for k, v in zip(ks, values):
            w.writerow([int(k), repr(float(v))])
        if summary:
            fh.write(f"# {summary}\n")
