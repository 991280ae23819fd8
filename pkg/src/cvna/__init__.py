"""Default contagion on regular interbank networks under correlated shocks.

Monte Carlo clearing on random k-regular digraphs, mean-field threshold
analytics and their large-degree limits.
"""
from ._backend import BACKEND
from .analytics import (
    Expectation,
    FixedPointSolution,
    MeanFieldProblem,
    Regime,
    classify_regime,
    expected_q_correlated,
    expected_q_uncorrelated,
    limit_correlated,
    limit_uncorrelated,
    mean_field_iterate,
    solve_q_alpha,
    solve_q_of_N,
)
from .clearing import (
    BankStates,
    CascadeResult,
    apply_shock,
    propagate_step,
    recovery_rate,
    run_cascade,
    threshold_cascade,
    threshold_counts,
)
from .experiment import ExperimentSummary, RunConfig, cvna_ratio, run_cell, size_scan
from .graph import FinancialSystem, GraphGenerationError, RegularGraph, build_system, generate_k_regular
from .shocks import (
    CompartmentVector,
    LatentFactor,
    ShockDistribution,
    ShockVector,
    correlated_pmf,
    inverse_shock_cdf,
    multinomial_pmf,
    pi_probabilities,
    sample_shocks,
)

__version__ = "0.1.0"
