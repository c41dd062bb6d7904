"""Per-user availability forecasting and prediction-driven system tuning.

The library turns connectivity traces into boolean availability matrices,
fits a fully Bayesian logistic regression over five periodic features,
scores the probabilistic forecasts, and feeds them to three simulators:
ring placement for replicated DHT storage, friend-to-friend data
placement, and newsfeed pre-loading.
"""

from .errors import DataError
from .trace import (
    AvailabilityMatrix,
    PeriodSplit,
    SessionEvent,
    average_availability,
    filter_superpeers,
    ingest_events,
    read_matrix,
    split_periods,
    write_matrix,
)
from .synth import UserProfile, generate_trace, parse_profiles
from .features import (
    CounterTables,
    DesignMatrix,
    FeatureVector,
    build_design_matrix,
    count_observations,
    extract_features,
    feature_value,
)
from .logreg import (
    AvailabilityModel,
    GaussianPosterior,
    GaussianPrior,
    fit_batched,
    fit_laplace,
    gradient,
    hessian,
    log_posterior,
    predict,
    predict_proba,
)
from .metrics import ScoredLabels, auc, class_accuracy, gm, metric_over_time, roc_points
from .clustering import ClusterResult, kmeans_availability
from .dht import (
    PredictionMatrix,
    RingAssignment,
    assign_identifiers,
    equivalent_redundancy_increase,
    measure_availability,
    neighbor_sets,
    predicted_set_availability,
    redundancy_for_target,
    ring_objective,
)
from .f2f import (
    PlacementMapping,
    SocialGraph,
    generate_ws_graph,
    measure_placement_availability,
    place_predictive,
    place_ra,
)
from .newsfeed import PreloadRun, select_baseline_users, select_push_users, simulate_preload
from .pipeline import ExperimentConfig, per_feature_ablation, run_experiment

__version__ = "0.1.0"
