"""Four-class motor execution/imagery EEG classification pipeline.

EDF+ ingestion, notch/band-pass filtering, FastICA artifact removal with
statistical component rejection, sliding-window feature extraction, and a
from-scratch Adam-trained MLP, with sklearn-style estimators where state is
learned (IcaArtifactRemover, FeatureNormalizer, MlpClassifier).
"""

from .dataset import (PAPER_MONTAGE, TaskClass, fetch_subject, read_run,
                      runs_for_task, select_channels)
from .edf import EdfHeader, Event, Recording, extract_events, parse_edf
from .evaluation import (MetricsReport, SplitMode, SplitSpec,
                         confusion_and_metrics, intra_subject_evaluate,
                         split_dataset, window_sweep)
from .features import (FeatureMatrix, FeatureNormalizer, PsdFeatures,
                       TimeFeatures, assemble_feature_matrix,
                       psd_peak_features, time_features, welch_psd)
from .filters import (BiquadCascade, FilterKind, FilterSpec, design_filter,
                      filter_zero_phase)
from .ica import (ArtifactThresholds, ComponentStats, FastIcaConfig,
                  IcaArtifactRemover, IcaDecomposition, Whitening,
                  center_and_whiten, component_stats,
                  detect_artifact_components, fastica, fit_ica,
                  remove_components)
from .mlp import (AdamState, MlpClassifier, MlpParams, TrainConfig,
                  TrainHistory, adam_step, forward, init_mlp, loss_and_grad,
                  predict, predict_proba, train)
from .pipeline import PipelineConfig, RunManifest, load_config, run_pipeline
from .windows import LabeledWindow, MotionClass, WindowSpec, label_windows, segment

__version__ = "0.1.0"

__all__ = [
    "AdamState", "ArtifactThresholds", "BiquadCascade", "ComponentStats",
    "EdfHeader", "Event", "FastIcaConfig", "FeatureMatrix",
    "FeatureNormalizer", "FilterKind", "FilterSpec", "IcaArtifactRemover",
    "IcaDecomposition", "LabeledWindow", "MetricsReport", "MlpClassifier",
    "MlpParams", "MotionClass", "PAPER_MONTAGE", "PipelineConfig",
    "PsdFeatures", "Recording", "RunManifest", "SplitMode", "SplitSpec",
    "TaskClass", "TimeFeatures", "TrainConfig", "TrainHistory", "Whitening",
    "WindowSpec", "adam_step", "assemble_feature_matrix", "center_and_whiten",
    "component_stats", "confusion_and_metrics", "design_filter",
    "detect_artifact_components", "extract_events", "fastica",
    "fetch_subject", "filter_zero_phase", "fit_ica", "forward", "init_mlp",
    "intra_subject_evaluate", "label_windows", "load_config", "loss_and_grad",
    "parse_edf", "predict", "predict_proba", "psd_peak_features", "read_run",
    "remove_components", "run_pipeline", "runs_for_task", "segment",
    "select_channels", "split_dataset", "time_features", "train",
    "welch_psd", "window_sweep",
]
