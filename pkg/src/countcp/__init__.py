"""Penalized Poisson quasi-likelihood change-point detection for count time series."""

__version__ = "0.1.0"

from .errors import CalibrationError, ConfigError, CountCPError, DomainError, SingularCovarianceError
from .models import MeanFamily, ParamSpace, bininarch1, inarch1, inarch_inf, ingarch11, make_family
from .qmle import OptimizerOptions, SegmentFit, fit_segment, quasi_log_likelihood, sandwich_covariance
from .segment import DetectionConfig, PenaltySpec, Segmentation, build_ml_matrix, detect, dp_solve
from .simulate import Emission, ScenarioConfig, get_scenario, scenario_library, simulate_piecewise

__all__ = [
    "CalibrationError", "ConfigError", "CountCPError", "DomainError", "SingularCovarianceError",
    "MeanFamily", "ParamSpace", "bininarch1", "inarch1", "inarch_inf", "ingarch11", "make_family",
    "OptimizerOptions", "SegmentFit", "fit_segment", "quasi_log_likelihood", "sandwich_covariance",
    "DetectionConfig", "PenaltySpec", "Segmentation", "build_ml_matrix", "detect", "dp_solve",
    "Emission", "ScenarioConfig", "get_scenario", "scenario_library", "simulate_piecewise",
]
