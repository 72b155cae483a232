"""Estimation of two intersecting lines from points observed with isotropic Gaussian errors.

Five estimators share the :class:`~twoline.results.LineFitResult` output:
the ignore-F and one-step updated estimators built on the adjusted least
squares conic fit, orthogonal regression, structural maximum likelihood and
the RBAN moment estimator.
"""

from .als2 import Als2Fit, fit_als2
from .errors import EstimationFailure, InvalidInput, TwoLineError
from .estimators import ALL_METHODS, COV_METHODS, fit
from .geometry import Line, LinePair, SimilarityTransform, apply_similarity, intersection
from .mixture import fit_ml
from .orthreg import OrConfig, fit_or
from .projection import fit_ignore_f, fit_updated
from .rban import fit_rban
from .results import LineFitResult, Method
from .simulate import Distribution, ScenarioConfig, coverage_study, equivariance_check, run_monte_carlo

__all__ = [
    "ALL_METHODS",
    "COV_METHODS",
    "Als2Fit",
    "Distribution",
    "EstimationFailure",
    "InvalidInput",
    "Line",
    "LineFitResult",
    "LinePair",
    "Method",
    "OrConfig",
    "ScenarioConfig",
    "SimilarityTransform",
    "TwoLineError",
    "apply_similarity",
    "coverage_study",
    "equivariance_check",
    "fit",
    "fit_als2",
    "fit_ignore_f",
    "fit_ml",
    "fit_or",
    "fit_rban",
    "fit_updated",
    "intersection",
    "run_monte_carlo",
]

__version__ = "0.1.0"
