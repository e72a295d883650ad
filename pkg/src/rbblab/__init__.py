"""Simulation laboratory for the repeated balls-into-bins process."""

from .engine import (
    InitialConfig,
    LoadVector,
    SampleBatch,
    Trace,
    coupled_step,
    idealized_step,
    one_choice_run,
    rbb_step,
    run_trace,
)
from .observables import (
    AdjustedSeries,
    PotentialParams,
    adjusted_potential_series,
    aggregate_empty,
    default_params,
    empty_stats,
    exponential_drift_bound,
    exponential_potential,
    quadratic_drift_bound,
    quadratic_potential,
)
from .oracle import (
    StateSpace,
    TransitionKernel,
    enumerate_states,
    expected_observable,
    one_step_distribution,
    stationary_distribution,
    transition_kernel,
)
from .rng import DEFAULT_SEED, RandomSource
from .traversal import CoverageTracker, QueueSystem, TieBreakPolicy, cover_times, switch_stats, traversal_step
from .validation import CheckReport, DriftWalkConfig, run_checks

__version__ = "0.1.0"

__all__ = [
    "AdjustedSeries",
    "CheckReport",
    "CoverageTracker",
    "DEFAULT_SEED",
    "DriftWalkConfig",
    "InitialConfig",
    "LoadVector",
    "PotentialParams",
    "QueueSystem",
    "RandomSource",
    "SampleBatch",
    "StateSpace",
    "TieBreakPolicy",
    "Trace",
    "TransitionKernel",
    "adjusted_potential_series",
    "aggregate_empty",
    "coupled_step",
    "cover_times",
    "default_params",
    "empty_stats",
    "enumerate_states",
    "expected_observable",
    "exponential_drift_bound",
    "exponential_potential",
    "idealized_step",
    "one_choice_run",
    "one_step_distribution",
    "quadratic_drift_bound",
    "quadratic_potential",
    "rbb_step",
    "run_checks",
    "run_trace",
    "stationary_distribution",
    "switch_stats",
    "transition_kernel",
    "traversal_step",
]
