"""Survival analysis toolkit: linear Cox PH models, deep Cox risk networks,
and personalized treatment recommendations on right-censored data."""

from coxkit.coxlinear import (
    LinearCoxModel,
    cox_log_likelihood,
    cph_recommender,
    fit_cph,
    predict_linear_risk,
)
from coxkit.data import (
    SortedSurvivalView,
    StandardizationParams,
    SurvivalDataset,
    append_treatment_feature,
    load_csv,
    sort_view,
    split,
    split_indices,
    standardize_apply,
    standardize_fit,
    write_csv,
)
from coxkit.metrics import (
    BootstrapInterval,
    KaplanMeierCurve,
    LogRankResult,
    bootstrap_ci,
    concordance_index,
    kaplan_meier,
    log_rank,
    median_survival,
    risk_mse,
)
from coxkit.optim import (
    OptimizerConfig,
    SearchSpace,
    TrainingDiverged,
    TrainingHistory,
    kfold,
    lr_at_epoch,
    random_search,
    train,
)
from coxkit.recommend import (
    RecommendationReport,
    evaluate_recommendations,
    rec_fn,
    recommend_treatment,
)
from coxkit.riskmlp import (
    NetworkConfig,
    RiskNetwork,
    backward,
    cox_loss,
    cox_loss_grad,
    forward,
    init_network,
)
from coxkit.simulate import (
    SimulatedDataset,
    SimulationSpec,
    censor_threshold,
    generate,
    risk_gaussian,
    risk_linear,
)

__version__ = "0.1.0"

__all__ = [
    "SurvivalDataset",
    "StandardizationParams",
    "SortedSurvivalView",
    "load_csv",
    "write_csv",
    "split",
    "split_indices",
    "standardize_fit",
    "standardize_apply",
    "sort_view",
    "append_treatment_feature",
    "SimulationSpec",
    "SimulatedDataset",
    "risk_linear",
    "risk_gaussian",
    "censor_threshold",
    "generate",
    "LinearCoxModel",
    "cox_log_likelihood",
    "fit_cph",
    "predict_linear_risk",
    "cph_recommender",
    "NetworkConfig",
    "RiskNetwork",
    "init_network",
    "forward",
    "backward",
    "cox_loss",
    "cox_loss_grad",
    "OptimizerConfig",
    "TrainingHistory",
    "TrainingDiverged",
    "SearchSpace",
    "lr_at_epoch",
    "train",
    "kfold",
    "random_search",
    "KaplanMeierCurve",
    "LogRankResult",
    "BootstrapInterval",
    "concordance_index",
    "bootstrap_ci",
    "kaplan_meier",
    "median_survival",
    "log_rank",
    "risk_mse",
    "RecommendationReport",
    "rec_fn",
    "recommend_treatment",
    "evaluate_recommendations",
    "__version__",
]
