"""Simulator for single-spin measurement via cantilever frequency-shift readout.

A microcantilever with a magnetic tip couples to one spin; continuous
optical monitoring plus positive-gain delayed feedback lock the
oscillation amplitude, turning the spin orientation into the sign of a
cantilever frequency shift.  The package integrates the closed
11-equation Gaussian two-packet description of the conditioned dynamics,
validates it against a full density-matrix solver on a shared noise
stream, and recovers the spin from the FFT of the recorded position.
"""

from .config import RunConfig, parse_config_text
from .errors import (
    ConfigError,
    CovarianceError,
    IntegrationBlowupError,
    NegativeVarianceError,
    NumericalError,
    OscarError,
    ParameterError,
    PositivityError,
    StepSizeError,
    TruncationError,
)
from .feedback import FeedbackState, estimate_amplitude, feedback_force, photocurrent_sample
from .gaussian import diffusion, drift, expected_position, step, unitary_step
from .model import (
    GaussianState,
    InitialCondition,
    OpticsParams,
    SystemParams,
    default_initial_state,
    derive_gamma,
    derive_lambda,
    derive_thermal_coeffs,
)
from .runner import (
    ClassificationOutcome,
    ClassificationReport,
    CompareResult,
    SweepResult,
    TrajectoryResult,
    classification_ensemble,
    compare_gaussian_sme,
    kappa_sweep,
    run_classification,
    run_ensemble,
    run_trajectory,
)
from .sme import DensityState, OperatorSet, build_operators, extract_moments, sme_step
from .spectral import Spectrum, SpinVerdict, classify_spin, peak_frequency, power_spectrum

__version__ = "0.1.0"

__all__ = [
    "RunConfig",
    "parse_config_text",
    "SystemParams",
    "OpticsParams",
    "InitialCondition",
    "GaussianState",
    "default_initial_state",
    "derive_gamma",
    "derive_lambda",
    "derive_thermal_coeffs",
    "drift",
    "diffusion",
    "step",
    "unitary_step",
    "expected_position",
    "FeedbackState",
    "photocurrent_sample",
    "estimate_amplitude",
    "feedback_force",
    "OperatorSet",
    "DensityState",
    "build_operators",
    "sme_step",
    "extract_moments",
    "Spectrum",
    "SpinVerdict",
    "power_spectrum",
    "peak_frequency",
    "classify_spin",
    "TrajectoryResult",
    "CompareResult",
    "ClassificationReport",
    "ClassificationOutcome",
    "SweepResult",
    "run_trajectory",
    "run_ensemble",
    "run_classification",
    "classification_ensemble",
    "compare_gaussian_sme",
    "kappa_sweep",
    "OscarError",
    "ParameterError",
    "ConfigError",
    "NumericalError",
    "IntegrationBlowupError",
    "NegativeVarianceError",
    "CovarianceError",
    "StepSizeError",
    "PositivityError",
    "TruncationError",
]
