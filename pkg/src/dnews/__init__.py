"""Distribution-free newsvendor ordering under convex distortion risk measures."""

from .closed_form import solve_closed_form_family
from .core import DemandMoments, Regime, SolverError, delta, sigma_t
from .distortion import (
    Distortion,
    DistortionError,
    make_builtin,
    parse_distortion,
    piecewise_linearize,
    validate_distortion,
)
from .multiproduct import ProductSpec, solve_multi, verify_additivity
from .oracle import GridSpec, outer_min_grid
from .risk import DiscreteLaw, Market, distortion_risk_discrete, loss_function
from .solver import SolveReport, classify_regime, solve_single, t_star
from .worstcase import WorstCaseDistribution, build_worst_case, moments_of

__all__ = [
    "DemandMoments",
    "DiscreteLaw",
    "Distortion",
    "DistortionError",
    "GridSpec",
    "Market",
    "ProductSpec",
    "Regime",
    "SolveReport",
    "SolverError",
    "WorstCaseDistribution",
    "build_worst_case",
    "classify_regime",
    "delta",
    "distortion_risk_discrete",
    "loss_function",
    "make_builtin",
    "moments_of",
    "outer_min_grid",
    "parse_distortion",
    "piecewise_linearize",
    "sigma_t",
    "solve_closed_form_family",
    "solve_multi",
    "solve_single",
    "t_star",
    "validate_distortion",
    "verify_additivity",
]

__version__ = "0.1.0"
