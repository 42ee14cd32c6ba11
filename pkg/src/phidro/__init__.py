"""Worst-case expectations over phi-divergence balls and their sample complexity."""
from .bounds import (
    HardInstance,
    SublinearConstants,
    hard_instance,
    sample_lower_bound,
    sample_upper_bound,
    sublinear_constants,
    sublinear_hard_instance,
    superlinear_hard_instance,
)
from .divergence import (
    CATALOG_NAMES,
    DivergenceSpec,
    Growth,
    Kind,
    conjugate,
    conjugate_numeric,
    growth_inverse,
    growth_value,
    parse_divergence,
    phi_value,
    truncated_conjugate,
)
from .errors import (
    AssumptionViolated,
    ConfigError,
    EpsTooLarge,
    GapTooLarge,
    GrowthUnbounded,
    IndeterminateForm,
    NonConvergence,
    PhiDroError,
    POutOfRange,
)
from .experiments import CurvePoint, ExperimentConfig, bias_estimate, complexity_curve, deviation_frequency, run_config
from .risk import FiniteInstance, RiskReport, dual_minimize, primal_value, truncated_risk, worst_case_expectation
from .saa import EmpiricalMeasure, draw_empirical, saa_estimate, truncated_saa_estimate, truncation_level

__version__ = "0.1.0"
