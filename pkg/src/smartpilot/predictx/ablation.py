"""Ablation study: train all five variants on one split, score, and report.

The report mirrors the usual results-table shape: one row per variant with
support-weighted precision/recall/F1 and accuracy, a detection-role marker on
B2, an extra fusion-with-zeroed-image row, and a per-class F1 block. Fixed
seed and dataset give a byte-identical report.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ..ontology import ProcessOntology
from .metrics import compute_detection_metrics, compute_weighted_metrics
from .model import FusionModel, predict_batch, train_fusion
from .types import AnomalyClass, FusionConfig, FusionVariant, WeightedMetrics

VARIANT_ORDER = (
    FusionVariant.B1,
    FusionVariant.B2,
    FusionVariant.P1,
    FusionVariant.P2,
    FusionVariant.P3,
)

TRAIN_FRACTION = 0.8


def split_dataset(dataset, fraction: float = TRAIN_FRACTION):
    """Deterministic leading/trailing split (generator order is pre-shuffled)."""
    n_train = int(len(dataset) * fraction)
    return dataset[:n_train], dataset[n_train:]


@dataclass
class AblationReport:
    """Per-variant metrics plus the zeroed-image probe row.

    metrics is the FusionVariant -> WeightedMetrics map; zero_image scores the
    P1 fusion model evaluated with all-zero image features (how much the image
    branch carries at test time).
    """

    metrics: dict
    zero_image: WeightedMetrics
    n_train: int
    n_test: int
    seed: int

    def to_json(self) -> str:
        def enc(m: WeightedMetrics):
            return {
                "precision": m.precision,
                "recall": m.recall,
                "f1": m.f1,
                "accuracy": m.accuracy,
                "support": m.support,
                "per_class": {c.name: list(v) for c, v in m.per_class.items()},
            }

        doc = {
            "seed": self.seed,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "variants": {v.value: enc(self.metrics[v]) for v in VARIANT_ORDER},
            "zero_image": enc(self.zero_image),
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    def to_text(self) -> str:
        lines = [
            f"Ablation report (seed {self.seed}, train {self.n_train} / test {self.n_test})",
            "",
            f"{'variant':<22}{'precision':>10}{'recall':>10}{'f1':>10}{'accuracy':>10}{'support':>9}",
        ]

        def row(name, m):
            return (
                f"{name:<22}{m.precision:>10.4f}{m.recall:>10.4f}"
                f"{m.f1:>10.4f}{m.accuracy:>10.4f}{m.support:>9d}"
            )

        for v in VARIANT_ORDER:
            name = v.value + (" (D)" if v is FusionVariant.B2 else "")
            lines.append(row(name, self.metrics[v]))
        lines.append(row("P1 (zero image)", self.zero_image))
        lines.append("")
        lines.append("Per-class F1")
        header = f"{'class':<24}" + "".join(f"{v.value:>9}" for v in VARIANT_ORDER)
        lines.append(header)
        for cls in AnomalyClass:
            cells = "".join(f"{self.metrics[v].per_class[cls][2]:>9.4f}" for v in VARIANT_ORDER)
            lines.append(f"{cls.name:<24}" + cells)
        lines.append("")
        lines.append("B2 is scored on detection only (anomaly vs normal).")
        return "\n".join(lines) + "\n"


def _evaluate(model: FusionModel, test_set, zero_image: bool = False) -> WeightedMetrics:
    frames = np.stack([s.window.frames for s in test_set])
    img = None
    if model.img is not None:
        img = np.stack([s.image.vector for s in test_set])
        if zero_image:
            img = np.zeros_like(img)
    _, _, predicted = predict_batch(model, frames, img)
    labels = [s.window.label for s in test_set]
    if model.variant is FusionVariant.B2:
        return compute_detection_metrics(predicted, labels)
    return compute_weighted_metrics(predicted, labels)


def run_ablation(dataset, onto: ProcessOntology, config: FusionConfig) -> AblationReport:
    """Train and score every variant on a shared 80/20 split and seed."""
    train_set, test_set = split_dataset(dataset)
    metrics = {}
    models = {}
    for variant in VARIANT_ORDER:
        model = train_fusion(variant, train_set, onto, config)
        models[variant] = model
        metrics[variant] = _evaluate(model, test_set)
    zero_img = _evaluate(models[FusionVariant.P1], test_set, zero_image=True)
    return AblationReport(
        metrics=metrics,
        zero_image=zero_img,
        n_train=len(train_set),
        n_test=len(test_set),
        seed=config.seed,
    )
