"""Adaptive multivariate density deconvolution with structure selection."""

from .errors import *  # noqa: F401,F403
from .structure import Partition, PartitionFamily, default_family, diamond, diamond_closure
from .noise import NoiseModel, NoiseComponent, laplace, symmetric_gamma, no_noise, validate_assumptions
from .spectral import (
    KernelSpec,
    build_kernel,
    EvaluationGrid,
    GridFunction,
    empirical_cf,
    decon_kernel,
    estimate_marginal,
    smooth_estimate,
    lp_norm,
)
from .selector import (
    CandidateSet,
    SelectionResult,
    build_candidates,
    estimate,
    penalty_U,
    rate_exponent_lp,
    rate_exponent_sup,
)
from .harness import Scenario, TargetDensity, mc_risk, rate_fit, sample_target

__version__ = "0.1.0"
