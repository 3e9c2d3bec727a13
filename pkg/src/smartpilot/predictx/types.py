"""Domain types for the anomaly-prediction agent."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Optional

import numpy as np

from ..kernel import InputError


class AnomalyClass(IntEnum):
    """The seven assembly outcome classes; enumeration order is the fixed
    total order used for argmax tie-breaks and report rows."""

    Normal = 0
    NoNose = 1
    NoBody1 = 2
    NoBody2 = 3
    NoNose_NoBody2 = 4
    NoBody2_NoBody1 = 5
    NoNose_NoBody2_NoBody1 = 6

    @property
    def is_anomalous(self) -> bool:
        return self is not AnomalyClass.Normal


N_CLASSES = len(AnomalyClass)


class FusionVariant(Enum):
    """Ablation variants: B1 time-series branch only, B2 image branch only
    (detection role), P1 decision-level fusion, P2 adds a pretrained frozen
    encoder, P3 adds the ontology range penalty to the loss."""

    B1 = "B1"
    B2 = "B2"
    P1 = "P1"
    P2 = "P2"
    P3 = "P3"


@dataclass
class SensorWindow:
    """A fixed-length slice of the multichannel sensor stream.

    frames is [window_len, n_channels]; state_ids names the cycle state of
    each frame; timestamp is the window-end time in ms.
    """

    frames: np.ndarray
    state_ids: tuple
    timestamp: int
    label: AnomalyClass = AnomalyClass.Normal

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        self.state_ids = tuple(self.state_ids)
        if self.frames.ndim != 2 or self.frames.shape[0] < 1:
            raise InputError(f"frames must be [window_len >= 1, n_channels], got {self.frames.shape}")
        if len(self.state_ids) != self.frames.shape[0]:
            raise InputError(
                f"{len(self.state_ids)} state_ids for {self.frames.shape[0]} frames"
            )

    @property
    def window_len(self) -> int:
        return self.frames.shape[0]

    @property
    def n_channels(self) -> int:
        return self.frames.shape[1]


@dataclass
class ImageFeatures:
    """Precomputed image-branch feature vector for one camera snapshot."""

    vector: np.ndarray
    source_camera: str = ""
    timestamp: int = 0

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(self.vector)):
            raise InputError("image features must be finite")


@dataclass
class PredictionResult:
    """One fused prediction: next-frame regression plus class distribution."""

    next_frame: np.ndarray
    class_probs: np.ndarray
    predicted_class: AnomalyClass
    explanation: Optional[object] = None
    latency_ms: float = 0.0

    def __post_init__(self):
        self.next_frame = np.asarray(self.next_frame, dtype=np.float64).reshape(-1)
        self.class_probs = np.asarray(self.class_probs, dtype=np.float64).reshape(-1)
        p = self.class_probs
        if p.shape != (N_CLASSES,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise InputError("class_probs must be a distribution over the 7 classes")
        if int(np.argmax(p)) != int(self.predicted_class):
            raise InputError("predicted_class must be the argmax of class_probs")


@dataclass(frozen=True)
class WeightedMetrics:
    """Support-weighted precision/recall/F1 plus accuracy over a label set.

    per_class maps every AnomalyClass to (precision, recall, f1, support);
    weighted values average per-class values by label support.
    """

    precision: float
    recall: float
    f1: float
    accuracy: float
    support: int
    per_class: dict


@dataclass
class FusionSample:
    """One training/eval sample: window + aligned image features + the frame
    following the window (regression target).

    target_state_id names the cycle state at the target timestamp for the
    range penalty; None falls back to the window's last state.
    """

    window: SensorWindow
    image: ImageFeatures
    target: np.ndarray
    target_state_id: Optional[str] = None

    def __post_init__(self):
        self.target = np.asarray(self.target, dtype=np.float64).reshape(-1)
        if self.target.shape[0] != self.window.n_channels:
            raise InputError("target must have one value per sensor channel")

    @property
    def penalty_state_id(self) -> str:
        return self.target_state_id if self.target_state_id is not None else self.window.state_ids[-1]


@dataclass
class FusionConfig:
    """Architecture and training knobs for the fusion variants.

    lam weights the ontology range penalty (P3 only); beta weights the
    classification term; channel_weights feed the weighted MSE. variables
    names the sensor channels in frame-column order and is required for P3
    (it maps predictions onto ontology ranges).
    """

    seed: int = 0
    latent_dim: int = 8
    img_hidden: int = 24
    head_hidden: int = 24
    channel_weights: Optional[tuple] = None
    beta: float = 1.0
    lam: float = 0.1
    variables: Optional[tuple] = None
    epochs: int = 6
    learning_rate: float = 1e-2
    batch_size: int = 64
    optimizer: str = "adam"
    pretrain_epochs: int = 30

    def __post_init__(self):
        if self.epochs < 0 or self.pretrain_epochs < 0:
            raise InputError("epochs must be >= 0")
        if self.learning_rate < 0:
            raise InputError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise InputError("batch_size must be >= 1")
        if self.lam < 0 or self.beta < 0:
            raise InputError("loss weights must be >= 0")
        if self.channel_weights is not None:
            self.channel_weights = tuple(float(w) for w in self.channel_weights)
        if self.variables is not None:
            self.variables = tuple(str(v) for v in self.variables)
