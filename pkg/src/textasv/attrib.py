"""Integrated-gradients attribution of verification decisions.

The target is the trial's cosine similarity minus the speaker's EER
threshold, so positive token importance always pushes toward accept.
Interpolation happens at the token-embedding layer: each non-special
token's row is walked from a baseline row (PAD's embedding by default)
to its true embedding, and gradients are averaged with a midpoint
Riemann rule.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .encoder import (CLS_ID, PAD_ID, SEP_ID, backward_from_trace,
                      encode_from_rows, tokenize)
from .errors import InvalidTokenIds, MissingThreshold, ZeroVector


class CompletenessWarning(UserWarning):
    """Raised when an attribution's completeness residual exceeds 1%."""


@dataclass
class AttributionConfig:
    steps: int = 50
    baseline: str = "pad_embedding"  # or "zero_embedding"

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.baseline not in ("pad_embedding", "zero_embedding"):
            raise ValueError(f"unknown baseline {self.baseline!r}")


@dataclass
class TokenAttribution:
    token: str
    importance: float


@dataclass
class AttributionReport:
    utt_id: str
    enroll_speaker_id: str
    true_label: str
    decision: str
    raw_score: float
    threshold: float
    margin_to_threshold: float
    tokens: list
    attribution_score: float
    completeness_residual: float


def target_function(params, config, token_ids, enroll_vector, threshold):
    """Build F(rows) = cos(enroll, encode(rows)) - threshold for a fixed
    utterance (eval mode). Returns (value_fn, value_and_grad_fn)."""
    enroll_vector = np.asarray(enroll_vector, dtype=np.float64)
    a_norm = np.linalg.norm(enroll_vector)
    if a_norm == 0.0:
        raise ZeroVector("enrollment vector has zero norm")
    a_hat = enroll_vector / a_norm

    def value_and_grad(rows):
        emb, trace = encode_from_rows(params, config, token_ids, rows,
                                      mode="eval")
        b_norm = np.linalg.norm(emb)
        if b_norm == 0.0:
            raise ZeroVector("encoder output has zero norm")
        b_hat = emb / b_norm
        cos = float(a_hat @ b_hat)
        grad_emb = (a_hat - cos * b_hat) / b_norm
        grad_rows = backward_from_trace(trace, params, config, grad_emb)[0]
        return cos - threshold, grad_rows

    def value(rows):
        return value_and_grad(rows)[0]

    return value, value_and_grad


def path_integrate(value_and_grad, rows, baseline_rows, steps):
    """Midpoint-Riemann integrated gradients at the row level.

    Returns (per-token importances, mean gradient) for the straight-line
    path from baseline_rows to rows.
    """
    rows = np.asarray(rows, dtype=np.float64)
    baseline_rows = np.asarray(baseline_rows, dtype=np.float64)
    diff = rows - baseline_rows
    total = np.zeros_like(rows)
    for k in range(1, steps + 1):
        alpha = (k - 0.5) / steps
        _, grad = value_and_grad(baseline_rows + alpha * diff)
        total += grad
    mean_grad = total / steps
    return (diff * mean_grad).sum(axis=1), mean_grad


def _baseline_rows(params, config, token_ids, rows, baseline):
    if baseline == "pad_embedding":
        base_row = params.token_embeddings[PAD_ID]
    else:
        base_row = np.zeros(config.embed_dim)
    out = rows.copy()
    for i, tid in enumerate(token_ids):
        if tid not in (CLS_ID, SEP_ID):
            out[i] = base_row
    return out


def integrated_gradients(params, config, vocab, token_ids, utt_id,
                         trial_speaker_id, enrollment, threshold,
                         attr_config=None):
    """Attribute one trial decision onto its tokens.

    The report's attribution_score is the sum of token importances; its
    residual against F(input) - F(baseline) is the completeness check,
    warned about when it exceeds 1%.
    """
    attr_config = attr_config or AttributionConfig()
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.size < 2 or ids[0] != CLS_ID or ids[-1] != SEP_ID:
        raise InvalidTokenIds("token ids must be CLS-framed ... SEP-framed")
    if ids.min() < 0 or ids.max() >= config.vocab_size:
        raise InvalidTokenIds("token id outside the vocabulary")

    rows = params.token_embeddings[ids]
    baseline = _baseline_rows(params, config, ids, rows, attr_config.baseline)
    value, value_and_grad = target_function(params, config, ids,
                                            enrollment.vector, threshold)
    importances, _ = path_integrate(value_and_grad, rows, baseline,
                                    attr_config.steps)

    f_input = value(rows)
    f_baseline = value(baseline)
    attribution_score = float(importances.sum())
    residual = abs(attribution_score - (f_input - f_baseline))
    if residual > 0.01 * max(1.0, abs(f_input - f_baseline)):
        warnings.warn(
            f"completeness residual {residual:.3g} for {utt_id} vs "
            f"{enrollment.speaker_id}", CompletenessWarning)

    raw_score = f_input + threshold
    tokens = [TokenAttribution(token=vocab.tokens[tid], importance=float(imp))
              for tid, imp in zip(ids, importances)]
    return AttributionReport(
        utt_id=utt_id,
        enroll_speaker_id=enrollment.speaker_id,
        true_label="positive" if trial_speaker_id == enrollment.speaker_id
        else "negative",
        decision="accept" if raw_score >= threshold else "reject",
        raw_score=raw_score,
        threshold=threshold,
        margin_to_threshold=raw_score - threshold,
        tokens=tokens,
        attribution_score=attribution_score,
        completeness_residual=float(residual))


def attribute_batch(utterances, enrollments, thresholds, params, config,
                    vocab, attr_config=None):
    """One report per utterance against its own speaker's enrollment,
    ordered by (speaker_id, utt_id)."""
    by_speaker = {e.speaker_id: e for e in enrollments}
    reports = []
    for utt in sorted(utterances, key=lambda u: (u.speaker_id, u.utt_id)):
        if utt.speaker_id not in by_speaker or utt.speaker_id not in thresholds:
            raise MissingThreshold(utt.speaker_id)
        ids = tokenize(utt.text, vocab, config.max_seq_len)
        reports.append(integrated_gradients(
            params, config, vocab, ids, utt.utt_id, utt.speaker_id,
            by_speaker[utt.speaker_id], thresholds[utt.speaker_id],
            attr_config))
    return reports
