"""Equilibrium strategies for rank-dependent utility portfolio selection.

Core pipeline: describe a market and a probability weighting, build the
exponential transform h, classify which deterministic strict equilibrium
strategies exist, solve the associated ODEs, evaluate RDU values, search the
equilibrium family for the optimal member, and verify any strategy against
the perturbation definition directly.
"""

from .errors import ConfigError, DomainError, NumericsError, QuadratureError, RdueqError
from .model import MarketParams, OdeSolution, Strategy, merton_strategy, zero_strategy
from .weighting import (
    PhiFamilyParams,
    WeightingFunction,
    classify_shape,
    identity_weighting,
    phi_family,
    validate_assumption1,
)
from .hfun import HFunction, check_lemma_h, closed_phi_h, quadrature_h
from .autonomous import (
    AutonomousProblem,
    ClassificationResult,
    classify_time_invariant,
    drift_factor,
    g_transform,
    solve_autonomous,
    y1_threshold,
)
from .timevar import (
    EtaStarEstimate,
    TimevarProblem,
    bisect_eta_star,
    check_existence_conditions,
    estimate_eta_star,
    m_factor,
    solve_backward_eps,
    solve_forward,
)
from .equilibrium import (
    CertificateReport,
    EquilibriumStrategy,
    OptimalSearchResult,
    RduValue,
    bracket_at,
    build_strategy,
    classify_timevar,
    optimal_eta_search,
    rdu_log,
    rdu_power,
    rdu_value,
    uniform_optimality_check,
)
from .verify import (
    EquilibriumReport,
    PerturbedLaw,
    conditional_quantile,
    equilibrium_check,
    g_form,
    perturbed_law,
    perturbed_rdu,
    quantile_rdu,
    variance_to_go,
)
from .config import RunConfig, build_market, build_problem, build_weighting, load_config

__all__ = [
    "RdueqError",
    "ConfigError",
    "DomainError",
    "NumericsError",
    "QuadratureError",
    "MarketParams",
    "Strategy",
    "OdeSolution",
    "merton_strategy",
    "zero_strategy",
    "PhiFamilyParams",
    "WeightingFunction",
    "phi_family",
    "identity_weighting",
    "classify_shape",
    "validate_assumption1",
    "HFunction",
    "closed_phi_h",
    "quadrature_h",
    "check_lemma_h",
    "AutonomousProblem",
    "ClassificationResult",
    "classify_time_invariant",
    "drift_factor",
    "g_transform",
    "solve_autonomous",
    "y1_threshold",
    "TimevarProblem",
    "EtaStarEstimate",
    "m_factor",
    "solve_forward",
    "solve_backward_eps",
    "estimate_eta_star",
    "bisect_eta_star",
    "check_existence_conditions",
    "EquilibriumStrategy",
    "CertificateReport",
    "OptimalSearchResult",
    "RduValue",
    "bracket_at",
    "build_strategy",
    "classify_timevar",
    "optimal_eta_search",
    "rdu_power",
    "rdu_log",
    "rdu_value",
    "uniform_optimality_check",
    "EquilibriumReport",
    "PerturbedLaw",
    "perturbed_law",
    "perturbed_rdu",
    "quantile_rdu",
    "conditional_quantile",
    "variance_to_go",
    "g_form",
    "equilibrium_check",
    "RunConfig",
    "load_config",
    "build_market",
    "build_weighting",
    "build_problem",
]

__version__ = "0.1.0"
