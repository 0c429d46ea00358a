"""Failure probability of HSIC- and FSIC-aided hybrid NOMA against OMA.

Monte Carlo, closed-form, quadrature and high-SNR routes to the probability
that a hybrid NOMA opportunistic user gets no more rate than under OMA.
"""

from .asymptotics import (
    AsymptoticConstants,
    decay_exponent_fit,
    ptilde_floor_rho_m_inf,
    ptilde_joint_limit,
    ptilde_rho_n_inf,
)
from .closed_form import classify_regime, derive_constants, ptilde_closed
from .errors import (
    ConfigError,
    DomainError,
    NonConvergenceError,
    NonPositiveProbabilityError,
    SingularRegimeError,
)
from .estimates import Method, ProbabilityEstimate
from .model import ChannelRealization, Region, Scheme, SystemConfig
from .quadrature import ptilde_quadrature
from .sampling import SamplerSpec, mc_probability, mc_region_decomposition

__all__ = [
    "AsymptoticConstants", "ChannelRealization", "ConfigError", "DomainError", "Method",
    "NonConvergenceError", "NonPositiveProbabilityError", "ProbabilityEstimate", "Region",
    "SamplerSpec", "Scheme", "SingularRegimeError", "SystemConfig", "classify_regime",
    "decay_exponent_fit", "derive_constants", "mc_probability", "mc_region_decomposition",
    "ptilde_closed", "ptilde_floor_rho_m_inf", "ptilde_joint_limit", "ptilde_quadrature",
    "ptilde_rho_n_inf",
]
