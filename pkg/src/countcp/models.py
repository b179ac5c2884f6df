"""Conditional-mean families for piecewise count autoregressions.

Each family maps a parameter vector and a count history to the conditional
mean ``lambda_t``. Mean paths are always computed on a zero-padded history:
the value at position ``t`` uses only ``y[0:t]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .errors import DomainError

FAMILY_NAMES = ("inarch1", "ingarch11", "bininarch1", "inarchinf")

_CODES = {
    "inarch1": K.INARCH1,
    "ingarch11": K.INGARCH11,
    "bininarch1": K.BININARCH1,
    "inarchinf": K.INARCHINF,
}

DEFAULT_MEAN_FLOOR = 0.01
DEFAULT_ALPHA0_MAX = 20.0
DEFAULT_BETA_MAX = 0.95
BOUNDARY_MARGIN = 1e-3
INF_DECAY_SCALE = 1.0 / 2.2
INF_DECAY_POWER = 1.7


@dataclass(frozen=True)
class ParamSpace:
    """Box ``lower <= theta <= upper``, optionally cut by
    ``theta[sum_pair[0]] + theta[sum_pair[1]] <= sum_max``."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    mean_floor: float = DEFAULT_MEAN_FLOOR
    sum_pair: tuple[int, int] | None = None
    sum_max: float = math.inf

    def __post_init__(self):
        if len(self.lower) != len(self.upper) or not self.lower:
            raise DomainError("lower and upper must be non-empty and of equal length")
        if any(lo >= hi for lo, hi in zip(self.lower, self.upper)):
            raise DomainError(f"empty box: lower={self.lower} upper={self.upper}")
        if self.mean_floor <= 0:
            raise DomainError("mean_floor must be positive")

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def lower_array(self) -> np.ndarray:
        return np.asarray(self.lower, dtype=float)

    @property
    def upper_array(self) -> np.ndarray:
        return np.asarray(self.upper, dtype=float)

    def contains(self, theta, atol: float = 1e-12) -> bool:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,) or not np.all(np.isfinite(theta)):
            return False
        if np.any(theta < self.lower_array - atol) or np.any(theta > self.upper_array + atol):
            return False
        if self.sum_pair is not None:
            i, j = self.sum_pair
            if theta[i] + theta[j] > self.sum_max + atol:
                return False
        return True

    def project(self, theta) -> np.ndarray:
        out = np.empty(self.dim)
        pi, pj = self.sum_pair if self.sum_pair is not None else (-1, -1)
        K.project(np.asarray(theta, dtype=float), self.lower_array, self.upper_array,
                  pi, pj, self.sum_max, out)
        return out

    def center(self) -> np.ndarray:
        """Box midpoint, pulled onto the feasible set."""
        return self.project(0.5 * (self.lower_array + self.upper_array))

    def _kernel_args(self):
        pi, pj = self.sum_pair if self.sum_pair is not None else (-1, -1)
        smax = self.sum_max if self.sum_pair is not None else np.inf
        return self.lower_array, self.upper_array, pi, pj, smax


@dataclass(frozen=True)
class MeanFamily:
    """A conditional-mean recursion with its parameter space.

    Build instances with :func:`inarch1`, :func:`ingarch11`,
    :func:`bininarch1`, :func:`inarch_inf` or :func:`make_family`.
    """

    variant: str
    space: ParamSpace
    decay_scale: float | None = None
    decay_power: float | None = None
    param_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.variant not in _CODES:
            raise DomainError(f"unknown family {self.variant!r}; expected one of {FAMILY_NAMES}")

    @property
    def code(self) -> int:
        return _CODES[self.variant]

    @property
    def dim(self) -> int:
        return self.space.dim

    @property
    def is_affine(self) -> bool:
        """Mean is affine in theta, so the quasi-likelihood is concave."""
        return self.variant != "ingarch11"

    @property
    def kind(self) -> int:
        return K.AFFINE if self.is_affine else K.GARCH

    def decay(self, length: int) -> np.ndarray:
        """Fixed lag coefficients gamma_1..gamma_length (InarchInf only)."""
        if self.decay_scale is None:
            return np.zeros(max(length, 1))
        k = np.arange(1, max(length, 1) + 1, dtype=float)
        return self.decay_scale * k ** (-self.decay_power)

    def decay_sum(self) -> float:
        """Infinite sum of the lag coefficients (zero when there are none)."""
        if self.decay_scale is None:
            return 0.0
        from scipy.special import zeta

        return float(self.decay_scale * zeta(self.decay_power, 1))

    def check_theta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if not self.space.contains(theta):
            raise DomainError(f"parameter {theta.tolist()} outside the {self.variant} space")
        return theta


def inarch1(alpha0_max: float = DEFAULT_ALPHA0_MAX, mean_floor: float = DEFAULT_MEAN_FLOOR) -> MeanFamily:
    """lambda_t = alpha0 + alpha * y_{t-1}."""
    space = ParamSpace((mean_floor, 0.0), (alpha0_max, 1.0 - BOUNDARY_MARGIN), mean_floor)
    return MeanFamily("inarch1", space, param_names=("alpha0", "alpha"))


def ingarch11(alpha0_max: float = DEFAULT_ALPHA0_MAX, mean_floor: float = DEFAULT_MEAN_FLOOR,
              beta_max: float = DEFAULT_BETA_MAX) -> MeanFamily:
    """lambda_t = alpha0 + alpha * y_{t-1} + beta * lambda_{t-1}, seeded at
    alpha0 / (1 - beta)."""
    space = ParamSpace(
        (mean_floor, 0.0, 0.0),
        (alpha0_max, 1.0 - BOUNDARY_MARGIN, beta_max),
        mean_floor,
        sum_pair=(1, 2),
        sum_max=1.0 - BOUNDARY_MARGIN,
    )
    return MeanFamily("ingarch11", space, param_names=("alpha0", "alpha", "beta"))


def bininarch1(mean_floor: float = DEFAULT_MEAN_FLOOR) -> MeanFamily:
    """p_t = alpha0 + alpha * y_{t-1} with p_t kept inside [floor, 1 - floor]."""
    space = ParamSpace(
        (mean_floor, 0.0),
        (1.0 - 2 * mean_floor, 1.0 - 2 * mean_floor),
        mean_floor,
        sum_pair=(0, 1),
        sum_max=1.0 - mean_floor,
    )
    return MeanFamily("bininarch1", space, param_names=("alpha0", "alpha"))


def inarch_inf(alpha0_max: float = DEFAULT_ALPHA0_MAX, mean_floor: float = DEFAULT_MEAN_FLOOR,
               decay_scale: float = INF_DECAY_SCALE, decay_power: float = INF_DECAY_POWER) -> MeanFamily:
    """lambda_t = alpha0 + sum_k gamma_k y_{t-k} with gamma_k = scale * k**-power fixed."""
    space = ParamSpace((mean_floor,), (alpha0_max,), mean_floor)
    fam = MeanFamily("inarchinf", space, decay_scale=decay_scale, decay_power=decay_power,
                     param_names=("alpha0",))
    if not fam.decay_sum() < 1.0:
        raise DomainError("lag coefficients must sum to less than one")
    return fam


def make_family(name: str, **kwargs) -> MeanFamily:
    name = name.lower().replace("-", "").replace("_", "")
    builders = {"inarch1": inarch1, "ingarch11": ingarch11, "bininarch1": bininarch1,
                "inarchinf": inarch_inf}
    if name not in builders:
        raise DomainError(f"unknown family {name!r}; expected one of {FAMILY_NAMES}")
    if name == "bininarch1":
        kwargs.pop("alpha0_max", None)
    return builders[name](**kwargs)


def _as_counts(y) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1 or y.size == 0:
        raise DomainError("series must be a non-empty 1-d array")
    yf = y.astype(float)
    if np.any(yf < 0) or np.any(yf != np.floor(yf)):
        raise DomainError("series must contain non-negative integers")
    return yf


def affine_design(family: MeanFamily, y) -> tuple[np.ndarray, np.ndarray]:
    """Rows ``X`` and offsets ``c`` with ``lambda = c + X @ theta`` (affine families)."""
    if not family.is_affine:
        raise DomainError(f"{family.variant} is not affine in its parameters")
    yf = _as_counts(y)
    return K.affine_design(family.code, yf, 0, family.decay(yf.size), 0)


def truncated_mean_path(family: MeanFamily, theta, y) -> np.ndarray:
    """Conditional means lambda_1..lambda_n on a zero-padded history."""
    theta = family.check_theta(theta)
    yf = _as_counts(y)
    if family.is_affine:
        X, c = K.affine_design(family.code, yf, 0, family.decay(yf.size), 0)
        return c + X @ theta
    lam, _ = K.garch_path(theta, yf)
    return lam


def mean_gradient_path(family: MeanFamily, theta, y) -> np.ndarray:
    """Derivatives of the mean path, shape ``(n, d)``."""
    theta = family.check_theta(theta)
    yf = _as_counts(y)
    if family.is_affine:
        X, _ = K.affine_design(family.code, yf, 0, family.decay(yf.size), 0)
        return X
    _, dl = K.garch_path(theta, yf)
    return dl
