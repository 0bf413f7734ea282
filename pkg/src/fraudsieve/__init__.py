"""Two-phase transaction fraud detection.

Phase 1 pre-filters with an isolation forest and an adaptive score
threshold; phase 2 refines with a class-weighted RBF-SVM that grows its
labeled pool through confidence-gated, class-balanced pseudo-labeling.
Includes the stratified-CV evaluation harness with imbalance-aware
metrics and signed-rank significance testing.
"""

__version__ = "0.1.0"

from .errors import ArtifactError, ConfigError, DataError, FraudsieveError
from .tabular import (
    FRAUD,
    LEGIT,
    UNKNOWN,
    EvalOnlyLabels,
    LabelVector,
    RawTable,
    SplitSpec,
    apply_label_mask,
    label_mask_split,
    load_csv,
    stratified_folds,
)
from .preprocess import (
    ColumnRole,
    PreprocessConfig,
    PreprocessModel,
    fit_pipeline,
    pearson_correlation,
    transform,
)
from .iforest import (
    IsolationForestModel,
    IsolationTree,
    ThresholdConfig,
    adaptive_threshold,
    anomaly_score,
    anomaly_scores,
    build_forest,
    c_factor,
    candidate_set,
    path_length,
    score_from_mean_path,
)
from .svm import (
    ConvergenceWarning,
    KernelParams,
    SvmModel,
    decision_value,
    decision_values,
    dual_objective,
    grid_search,
    inverse_frequency_weights,
    predict,
    rbf_kernel,
    train_svm,
)
from .selftrain import (
    PseudoLabelBatch,
    SelfTrainConfig,
    SelfTrainHistory,
    class_threshold,
    confidence,
    select_pseudo_labels,
    self_train,
)
from .metrics import (
    ConfusionMatrix,
    MetricsReport,
    WilcoxonResult,
    auc_pr,
    auc_roc,
    confusion,
    metrics_report,
    prf_metrics,
    wilcoxon_signed_rank,
)
from .experiment import (
    ALL_METHODS,
    CvReport,
    ExperimentConfig,
    IForestConfig,
    SvmConfig,
    run_cv,
)
from .synth import SyntheticSpec, generate
from .artifact import ModelArtifact, load_artifact, save_artifact
