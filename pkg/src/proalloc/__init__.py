"""Monte Carlo simulator and analytic toolkit for prediction-based allocation.

A slotted single-cell system serves unit-size requests from a fixed budget of
C per slot; arrivals are Poisson with rate C**gamma and each request carries
a lookahead (slots of advance notice before its deadline).  The package
simulates outage probabilities under several lookahead and sharing models
and provides the matching closed-form tails, bounds, and diversity gains.
"""

from .analysis import (
    DiversityResult,
    OptimalLookahead,
    SandwichBounds,
    chernoff_upper_bound,
    diversity_deterministic,
    diversity_random_t,
    diversity_secondary_nonpredictive,
    diversity_with_errors,
    empirical_diversity,
    exact_nonpredictive_outage,
    exact_secondary_outage,
    factorial_lower_bound,
    improves_on_nonpredictive,
    optimal_lookahead,
    poisson_tail,
    poisson_tail_log,
    predictive_outage_bounds,
)
from .harness import (
    DEFAULT_BASE_SEED,
    ExperimentConfig,
    SweepResult,
    SweepRow,
    confidence_interval,
    derive_run_seed,
    export_csv,
    load_csv,
    run_sweep,
)
from .scheduler import OutageStats, RequestQueue, run_error_model, run_single_class
from .traffic import (
    Binomial,
    CapacityScaled,
    Deterministic,
    ErrorModelConfig,
    Request,
    ScalingConfig,
    Tabulated,
    Uniform,
    arrival_rate,
)
from .twoclass import SP1, SP2, SP3, TwoClassConfig, run_two_class

__version__ = "0.1.0"
