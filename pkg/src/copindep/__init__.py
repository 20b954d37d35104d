"""Semiparametric independence testing for bivariate copula models.

The test statistic comes from the dual representation of the chi-square
divergence between the independence copula and the fitted family, which
keeps a standard chi-square calibration even when the independence point
sits on the boundary of the admissible parameter set.
"""

from .copulas import (
    CopulaModel,
    DomainError,
    ParameterError,
    available_families,
    cdf,
    conditional_cdf,
    density,
    dtheta_density,
    get_model,
    sample,
)
from .dual_divergence import (
    DualCriterion,
    EstimationResult,
    bias_integral,
    empirical_criterion,
    estimate,
    m_eval,
    statistic_Tn,
)
from .empirical import (
    PseudoSample,
    deheuvels_copula,
    empirical_copula,
    integrate_dCn,
    make_pseudo,
)
from .inference import (
    PowerPlan,
    TestReport,
    VarianceEstimates,
    independence_test,
    power_approx,
    pseudo_mle_and_Sn,
    sample_size,
    variance_estimates,
)
from .simharness import (
    SimulationSummary,
    derive_subseed,
    simulate_estimator,
    simulate_null,
    simulate_power,
)

__version__ = "0.1.0"

__all__ = [
    "CopulaModel",
    "DomainError",
    "ParameterError",
    "available_families",
    "get_model",
    "density",
    "cdf",
    "dtheta_density",
    "conditional_cdf",
    "sample",
    "PseudoSample",
    "make_pseudo",
    "empirical_copula",
    "deheuvels_copula",
    "integrate_dCn",
    "DualCriterion",
    "EstimationResult",
    "bias_integral",
    "m_eval",
    "empirical_criterion",
    "estimate",
    "statistic_Tn",
    "TestReport",
    "VarianceEstimates",
    "PowerPlan",
    "independence_test",
    "variance_estimates",
    "power_approx",
    "sample_size",
    "pseudo_mle_and_Sn",
    "SimulationSummary",
    "derive_subseed",
    "simulate_null",
    "simulate_power",
    "simulate_estimator",
    "__version__",
]
