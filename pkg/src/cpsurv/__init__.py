"""Cox models with a piecewise-constant regression coefficient.

Changepoint estimation by profile partial likelihood, a sup-statistic
confidence region for a single changepoint, and multiple-changepoint
detection by least-squares segmentation of the standardized score path.
"""

from .core import (
    DataError,
    DegenerateVarianceError,
    NumericalError,
    StepFunction,
    SurvivalSample,
    load_sample,
    read_sample,
)
from .coxfit import CoxFit, TimeWindow, fit_cox
from .multicp import detect_changepoints, fit_multi_model
from .scoreproc import detection_path, rescale_times, standardized_score_path
from .singlecp import confidence_region, estimate_single_changepoint

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "DegenerateVarianceError",
    "NumericalError",
    "StepFunction",
    "SurvivalSample",
    "load_sample",
    "read_sample",
    "CoxFit",
    "TimeWindow",
    "fit_cox",
    "detect_changepoints",
    "fit_multi_model",
    "detection_path",
    "rescale_times",
    "standardized_score_path",
    "confidence_region",
    "estimate_single_changepoint",
]
