"""Loss functions: mse, wmse, cross-entropy, and the composite training loss.

Every loss exposes value(pred, target) and value_and_grad(pred, target) on
batched arrays [B, D]; values are means over the batch so learning rates do
not depend on batch size.

Cross-entropy always interprets its input as pre-softmax logits and goes
through log-sum-exp; when a model ends in a softmax activation the backward
pass feeds the logits here instead of the probabilities (same loss value,
stable gradient p - y).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np


def _as_batch(a: np.ndarray) -> np.ndarray:
    return a if a.ndim == 2 else a[None, :]


@dataclass
class Mse:
    """Mean over batch of mean squared error over components."""

    def value_and_grad(self, pred: np.ndarray, target: np.ndarray):
        p, t = _as_batch(pred), _as_batch(target)
        diff = p - t
        val = float((diff * diff).mean())
        grad = 2.0 * diff / diff.size
        return val, grad.reshape(pred.shape)

    def value(self, pred, target):
        return self.value_and_grad(pred, target)[0]


@dataclass
class Wmse:
    """Per-channel-weighted MSE: sum_c w_c (p_c - t_c)^2 / sum_c w_c, batch-meaned.

    weights None means all ones (plain per-sample MSE over channels).
    """

    weights: Optional[np.ndarray] = None

    def value_and_grad(self, pred: np.ndarray, target: np.ndarray):
        p, t = _as_batch(pred), _as_batch(target)
        B, C = p.shape
        w = np.ones(C) if self.weights is None else np.asarray(self.weights, dtype=float)
        wsum = w.sum()
        diff = p - t
        val = float((diff * diff * w).sum() / (wsum * B))
        grad = 2.0 * diff * w / (wsum * B)
        return val, grad.reshape(pred.shape)

    def value(self, pred, target):
        return self.value_and_grad(pred, target)[0]


@dataclass
class CrossEntropy:
    """Softmax cross-entropy from logits; target is one-hot [B, K]."""

    def value_and_grad(self, logits: np.ndarray, target: np.ndarray):
        z, y = _as_batch(logits), _as_batch(target)
        B = z.shape[0]
        shifted = z - z.max(axis=-1, keepdims=True)
        lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
        logp = shifted - lse
        val = float(-(y * logp).sum() / B)
        probs = np.exp(logp)
        grad = (probs - y) / B
        return val, grad.reshape(logits.shape)

    def value(self, logits, target):
        return self.value_and_grad(logits, target)[0]


PenaltyFn = Callable[[np.ndarray], tuple[float, np.ndarray]]


@dataclass
class Composite:
    """Joint regression + classification loss for the fusion models.

    Model output is [B, reg_dim + n_classes]: the first reg_dim entries are a
    predicted frame (identity head), the rest are class logits. Per sample:

        wmse(frame, frame_target) + lam * penalty(frame) + beta * ce(logits, label)

    penalty, when set, maps predicted frames [B, reg_dim] to a summed scalar
    and its gradient; the knowledge-infusion hinge from the ontology module is
    injected here so the kernel stays ontology-agnostic.
    """

    reg_dim: int
    n_classes: int
    wmse_weights: Optional[np.ndarray] = None
    beta: float = 1.0
    lam: float = 0.0
    penalty: Optional[PenaltyFn] = None

    def value_and_grad(self, pred: np.ndarray, target: np.ndarray):
        p, t = _as_batch(pred), _as_batch(target)
        B = p.shape[0]
        r = self.reg_dim
        wmse = Wmse(self.wmse_weights)
        reg_val, reg_grad = wmse.value_and_grad(p[:, :r], t[:, :r])
        ce = CrossEntropy()
        ce_val, ce_grad = ce.value_and_grad(p[:, r:], t[:, r:])
        val = reg_val + self.beta * ce_val
        grad = np.empty_like(p)
        grad[:, :r] = reg_grad
        grad[:, r:] = self.beta * ce_grad
        if self.penalty is not None and self.lam != 0.0:
            pen_val, pen_grad = self.penalty(p[:, :r])
            val += self.lam * pen_val / B
            grad[:, :r] += self.lam * pen_grad / B
        return val, grad.reshape(pred.shape)

    def value(self, pred, target):
        return self.value_and_grad(pred, target)[0]


LOSS_NAMES = {"mse": Mse, "wmse": Wmse, "cross_entropy": CrossEntropy, "composite": Composite}


def make_loss(spec):
    """Accept a loss instance or one of the names in LOSS_NAMES."""
    if isinstance(spec, str):
        if spec == "composite":
            raise ValueError("composite loss needs parameters; pass a Composite instance")
        try:
            return LOSS_NAMES[spec]()
        except KeyError:
            raise ValueError(f"unknown loss {spec!r}") from None
    return spec
