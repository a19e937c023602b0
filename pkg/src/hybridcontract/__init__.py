"""Contraction analysis for hybrid dynamical systems.

Simulation with event detection, saltation-matrix sensitivities, an
intrinsic-distance estimator and sampled contraction certificates.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    EventAtHorizon,
    EventSequenceMismatch,
    HybridError,
    IntegrationError,
    NoPathFound,
    NonFiniteState,
    NotATranslation,
    TransversalityViolation,
    ZenoSuspected,
)
from .norms import NormSpec, induced_norm, matrix_measure, vector_norm
from .hybrid import GuardArc, HybridState, HybridSystem, Mode
from .integrate import Execution, IntegratorOptions, ResetEvent, flow, sample
from .variational import (
    finite_difference_flow_jacobian,
    flow_jacobian,
    saltation_matrix,
)
from .metric import PathEstimate, divergence_series, intrinsic_distance
from .certify import (
    ContractionCertificate,
    RegionSampler,
    bound_flow_measure,
    bound_saltation_norm,
    check_envelope,
    check_translation_reset,
    make_certificate,
)

__all__ = [name for name in dir() if not name.startswith("_")]
