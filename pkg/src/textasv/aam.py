"""Additive-angular-margin softmax head.

Bias-free classifier whose rows and the incoming embedding are
L2-normalized at use; the target class angle gets the additive margin
before scaling. Gradients are exact derivatives of the composite,
including the normalizations, arccos, and both clamps (which contribute
zero derivative inside their flat regions).
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import (TargetOutOfRange, ZeroNormEmbedding, ZeroNormWeightRow)

COS_CLAMP_EPS = 1e-7


@dataclass
class AAMConfig:
    margin: float = 0.2
    scale: float = 30.0

    def __post_init__(self):
        if not 0.0 <= self.margin < math.pi / 2:
            raise ValueError("margin must be in [0, pi/2)")
        if self.scale <= 0.0:
            raise ValueError("scale must be positive")


@dataclass
class ClassifierWeights:
    weight: np.ndarray  # (num_classes, penult_dim), stored unnormalized

    @property
    def num_classes(self):
        return self.weight.shape[0]


def init_classifier(num_classes, penult_dim, seed):
    rng = np.random.default_rng(seed)
    return ClassifierWeights(weight=rng.normal(0.0, 1.0, (num_classes, penult_dim)))


def _check_norms(embedding, weight):
    e_norm = np.linalg.norm(embedding)
    if e_norm == 0.0:
        raise ZeroNormEmbedding("embedding has zero norm")
    w_norms = np.linalg.norm(weight, axis=1)
    zero_rows = np.flatnonzero(w_norms == 0.0)
    if zero_rows.size:
        raise ZeroNormWeightRow(int(zero_rows[0]))
    return e_norm, w_norms


def cosine_logits(embedding, weights):
    """Per-class cos(theta_j) between the normalized embedding and each
    normalized classifier row, clamped to [-1+eps, 1-eps]."""
    embedding = np.asarray(embedding, dtype=np.float64)
    e_norm, w_norms = _check_norms(embedding, weights.weight)
    raw = (weights.weight @ embedding) / (w_norms * e_norm)
    return np.clip(raw, -1.0 + COS_CLAMP_EPS, 1.0 - COS_CLAMP_EPS)


def aam_logits(cosines, target, config):
    """Scale all cosines; the target gets cos(min(theta + margin, pi))."""
    cosines = np.asarray(cosines, dtype=np.float64)
    if not 0 <= target < cosines.shape[0]:
        raise TargetOutOfRange(f"target {target} out of range for "
                               f"{cosines.shape[0]} classes")
    logits = config.scale * cosines
    if config.margin == 0.0:
        # exact reduction to plain scaled softmax, no arccos round-trip
        return logits
    theta = math.acos(cosines[target])
    logits[target] = config.scale * math.cos(min(theta + config.margin, math.pi))
    return logits


def softmax(logits):
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def aam_loss(embedding, weights, target, config):
    """Cross-entropy of the AAM logits against the target class."""
    logits = aam_logits(cosine_logits(embedding, weights), target, config)
    zmax = logits.max()
    return float(np.log(np.exp(logits - zmax).sum()) + zmax - logits[target])


def aam_loss_and_grad(embedding, weights, target, config):
    """Loss plus exact gradients w.r.t. the raw embedding and the raw
    (unnormalized) classifier weight matrix."""
    embedding = np.ascontiguousarray(embedding, dtype=np.float64)
    _check_norms(embedding, weights.weight)
    if not 0 <= target < weights.num_classes:
        raise TargetOutOfRange(f"target {target} out of range for "
                               f"{weights.num_classes} classes")
    weight = np.ascontiguousarray(weights.weight, dtype=np.float64)
    loss, grad_embedding, grad_weight = _kernels.aam_loss_grad(
        embedding, weight, int(target), config.margin, config.scale,
        COS_CLAMP_EPS)
    return loss, grad_embedding, grad_weight
