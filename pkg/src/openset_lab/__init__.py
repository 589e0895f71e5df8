"""Desk-scale laboratory for open-set semi-supervised learning.

The package pairs a small trainable classifier with two data-selection
mechanisms over an unlabeled pool (gradient-variance and loss-based
scoring) and a numerical test bench for the convergence behaviour of
SGD under friendly/unfriendly gradient mixtures.
"""

from .autodiff import Tensor, constant, log_softmax, softmax
from .data import (
    AugmentConfig,
    OpenSetConfig,
    OpenSetData,
    derive_seed,
    export_csv,
    import_csv,
    make_openset_mixture,
    seeded_rng,
    strong_augment,
    unsup_views,
    weak_augment,
)
from .errors import ConfigError, NumericError, ParseError, ShapeError
from .losses import (
    LossWeights,
    PseudoLabelDecision,
    ce_loss,
    ce_objective,
    em_loss,
    em_objective,
    fm_loss,
    fm_objective,
    oc_loss,
    oc_objective,
    ova_loss,
    ova_objective,
    pseudo_label,
    supervised_loss,
    supervised_objective,
    unsup_loss,
    unsup_loss_instance,
    unsup_objective,
)
from .metrics import (
    EvalReport,
    auroc,
    evaluate,
    merge_unseen_rows,
    ood_scores,
    pseudo_accuracy,
    selection_quality,
    top1_accuracy,
    unlabeled_confusion,
)
from .nn import (
    ModelParams,
    cosine_lr,
    finite_diff_grad,
    forward,
    forward_batch,
    grad,
    init_mlp,
    load_params,
    save_params,
    sgd_step,
)
from .selection import (
    ScoreVector,
    SelectionResult,
    ThresholdPolicy,
    apply_selection,
    gv_scores,
    loss_scores,
    mean_labeled_gradient,
    otsu_threshold,
    run_selection,
    threshold_for,
    topk_threshold,
    write_selection_csv,
)
from .theory import (
    InequalityReport,
    MixtureRunResult,
    OracleSpec,
    QuadraticObjective,
    TheoryScenario,
    check_descent_step,
    check_drift_bound,
    check_lsm_bound,
    check_mixture_variance_bound,
    equal_share_theta0,
    erb_bound,
    fit_rate,
    measured_extremes,
    mixed_gradient,
    mixture_variance_bound,
    power_iteration,
    random_lsm_event,
    record_gd_trajectory,
    run_sgd_mixture,
    sample_oracle,
    special_case_budget,
)
from .trainer import (
    EpochRecord,
    MetricsLog,
    TrainConfig,
    TrainResult,
    baseline_labeled_only,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "AugmentConfig", "ConfigError", "EpochRecord", "EvalReport",
    "InequalityReport", "LossWeights", "MetricsLog", "MixtureRunResult",
    "ModelParams", "NumericError", "OpenSetConfig", "OpenSetData",
    "OracleSpec", "ParseError", "PseudoLabelDecision", "QuadraticObjective",
    "ScoreVector", "SelectionResult", "ShapeError", "Tensor", "TheoryScenario",
    "ThresholdPolicy", "TrainConfig", "TrainResult", "apply_selection",
    "auroc", "baseline_labeled_only", "ce_loss", "ce_objective",
    "check_descent_step", "check_drift_bound", "check_lsm_bound",
    "check_mixture_variance_bound", "constant", "cosine_lr", "derive_seed",
    "em_loss", "em_objective", "equal_share_theta0", "erb_bound", "evaluate",
    "export_csv", "finite_diff_grad", "fit_rate", "fm_loss", "fm_objective",
    "forward", "forward_batch", "grad", "gv_scores", "import_csv", "init_mlp",
    "load_params", "log_softmax", "loss_scores", "make_openset_mixture",
    "mean_labeled_gradient", "measured_extremes", "merge_unseen_rows",
    "mixed_gradient", "mixture_variance_bound", "oc_loss", "oc_objective",
    "ood_scores", "otsu_threshold", "ova_loss", "ova_objective",
    "power_iteration", "pseudo_accuracy", "pseudo_label", "random_lsm_event",
    "record_gd_trajectory", "run_selection", "run_sgd_mixture",
    "sample_oracle", "save_params", "seeded_rng", "selection_quality",
    "sgd_step", "softmax", "special_case_budget", "strong_augment",
    "supervised_loss", "supervised_objective", "threshold_for", "top1_accuracy",
    "topk_threshold", "train", "unlabeled_confusion", "unsup_loss",
    "unsup_loss_instance", "unsup_objective", "unsup_views", "weak_augment",
    "write_selection_csv",
]
