"""Anomaly-prediction agent: autoencoder + image branch + decision fusion."""

from .ablation import AblationReport, run_ablation, split_dataset
from .io import load_dataset, save_dataset
from .metrics import compute_detection_metrics, compute_weighted_metrics
from .model import (
    FusionModel,
    build_fusion,
    fuse_predict,
    fusion_backward,
    fusion_forward,
    load_fusion,
    predict_batch,
    save_fusion,
    train_autoencoder,
    train_fusion,
)
from .types import (
    AnomalyClass,
    FusionConfig,
    FusionSample,
    FusionVariant,
    ImageFeatures,
    N_CLASSES,
    PredictionResult,
    SensorWindow,
    WeightedMetrics,
)

__all__ = [
    "AblationReport",
    "AnomalyClass",
    "FusionConfig",
    "FusionModel",
    "FusionSample",
    "FusionVariant",
    "ImageFeatures",
    "N_CLASSES",
    "PredictionResult",
    "SensorWindow",
    "WeightedMetrics",
    "build_fusion",
    "compute_detection_metrics",
    "compute_weighted_metrics",
    "fuse_predict",
    "fusion_backward",
    "fusion_forward",
    "load_dataset",
    "load_fusion",
    "predict_batch",
    "run_ablation",
    "save_dataset",
    "save_fusion",
    "split_dataset",
    "train_autoencoder",
    "train_fusion",
]
