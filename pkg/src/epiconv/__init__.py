"""Convolutional classification of binned per-gene signal matrices.

The package trains a small 1-d convolutional network that maps a
(marks x bins) signal matrix to a binary high/low expression label, reports
ranking quality as AUC, and interrogates a trained model by synthesizing the
input pattern each class responds to.
"""

from .data import (
    Dataset,
    GeneSample,
    SignalTransform,
    SplitSpec,
    SyntheticSpec,
    discretize_expression,
    fit_signal_transform,
    generate_synthetic,
    parse_dataset,
    split_dataset,
    write_dataset,
)
from .errors import (
    DataFormatError,
    DegenerateDataError,
    DimensionError,
    DivergenceError,
    EpiconvError,
    ModelFormatError,
    ModelIntegrityError,
)
from .estimator import HistoneCNNClassifier
from .metrics import (
    BinInfluenceProfile,
    ScoreRecord,
    auc,
    auc_from_scores,
    bin_influence,
    predict_scores,
    write_profile_csv,
    write_scores_csv,
)
from .nn import (
    ForwardTrace,
    GradCheckReport,
    Gradients,
    Hyperparams,
    NetworkParams,
    backward,
    forward,
    grad_check,
    init_params,
    sgd_step,
)
from .patterns import (
    ClassPattern,
    FrequencySummary,
    VisConfig,
    active_bins,
    export_heatmap,
    normalize_pattern,
    optimize_class_pattern,
    summarize_frequencies,
    write_frequency_csv,
)
from .training import (
    EpochRecord,
    TrainConfig,
    TrainedModel,
    load_model,
    save_model,
    train,
    train_arrays,
)

__version__ = "0.1.0"

__all__ = [
    "BinInfluenceProfile",
    "ClassPattern",
    "DataFormatError",
    "Dataset",
    "DegenerateDataError",
    "DimensionError",
    "DivergenceError",
    "EpiconvError",
    "EpochRecord",
    "ForwardTrace",
    "FrequencySummary",
    "GeneSample",
    "GradCheckReport",
    "Gradients",
    "HistoneCNNClassifier",
    "Hyperparams",
    "ModelFormatError",
    "ModelIntegrityError",
    "NetworkParams",
    "ScoreRecord",
    "SignalTransform",
    "SplitSpec",
    "SyntheticSpec",
    "TrainConfig",
    "TrainedModel",
    "VisConfig",
    "active_bins",
    "auc",
    "auc_from_scores",
    "backward",
    "bin_influence",
    "discretize_expression",
    "export_heatmap",
    "fit_signal_transform",
    "forward",
    "generate_synthetic",
    "grad_check",
    "init_params",
    "load_model",
    "normalize_pattern",
    "optimize_class_pattern",
    "parse_dataset",
    "predict_scores",
    "save_model",
    "sgd_step",
    "split_dataset",
    "summarize_frequencies",
    "train",
    "train_arrays",
    "write_dataset",
    "write_frequency_csv",
    "write_profile_csv",
    "write_scores_csv",
]
