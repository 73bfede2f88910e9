"""Simulator for preference-driven collaborative edge caching.

Pipeline: synthesize correlated per-user request histories, forecast each
user's future preferences with a from-scratch recurrent model, schedule
greedy cache placements across a user/BS/cloud hierarchy, and score them
with a tiered storage-plus-communication cost model.
"""

from .core import (
    FormatError,
    RequestMatrix,
    SeededRng,
    Topology,
    TopologyConfig,
    build_topology,
    load_request_matrix,
    save_request_matrix,
    slot_totals,
)
from .synthgen import (
    CorrelationParams,
    RequestRange,
    SkewnessRange,
    extend_correlated,
    generate_initial_matrix,
    generate_request_history,
    sample_skewness,
    zipf_pmf,
)
from .preference import (
    AggregatedPreference,
    PreferenceProfile,
    aggregate_preference,
    global_popularity,
    profile_from_counts,
    profile_from_slot,
)
from .forecaster import (
    ForecastMatrix,
    LstmModel,
    TrainConfig,
    baseline_forecast,
    forecast_all,
    gradient_check,
    lstm_forward,
    rollout,
    train,
    train_user_models,
)
from .cachemodel import (
    AccessProbabilities,
    CostParams,
    HetPlacement,
    HomPlacement,
    average_cost_het,
    average_cost_het_direct,
    average_cost_hom,
    average_cost_hom_direct,
    content_cost,
    het_access_probs,
    hom_access_probs,
    validate_cost_params,
)
from .placement import (
    IndicatorSchedule,
    SchemeId,
    build_schedule,
    greedy_bs_first,
    greedy_overlapping,
    greedy_user_first,
    homogeneous_greedy,
    indicators_to_probabilities,
    schedule_to_hom,
    static_zipf_baseline,
)
from .harness import (
    ExperimentConfig,
    ResultRow,
    compare_static_dynamic,
    run_experiment,
    run_pipeline,
)

__version__ = "0.1.0"
