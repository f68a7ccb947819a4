"""Latent-space router: calibrate once, profile new models from anchors, route by policy."""

from .irt import (
    CalibratedSpace,
    CalibrationConfig,
    ItemParams,
    LatentAbility,
    ProfilingObservation,
    ResponseMatrix,
    fit_calibration,
    predict_prob,
    profile_new_model,
)
from .anchors import AnchorSet, fisher_information, marginal_gain, select_anchors
from .estimators import (
    LatencyProfile,
    ModelPricing,
    TokenCounts,
    Tokenizer,
    VerbosityTable,
    calibrate_latency,
    calibrate_verbosity,
    complexity_score,
    count_input_tokens,
    estimate_cost,
    estimate_latency,
    estimate_output_length,
)
from .predictor import (
    ClusterAssignment,
    FeatureVector,
    PredictorModel,
    TrainConfig,
    TrainingExample,
    cluster_dimensions,
    forward,
    train,
)
from .routing import (
    POLICY_PRESETS,
    Assignment,
    GlobalConstraints,
    PolicyWeights,
    QueryModelEstimate,
    RewardReport,
    route_constrained,
    route_unconstrained,
    score_matrix,
    total_reward,
)
from .registry import ModelProfile, Registry, load_registry, register_model, save_registry

__version__ = "0.1.0"
