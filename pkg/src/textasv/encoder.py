"""Speaker-discriminative text encoder.

Pipeline: token embedding lookup -> mean pool over non-PAD positions ->
affine + tanh -> dropout (train mode, inverted scaling) -> affine down
to the 192-d embedding. Forward and backward passes are explicit so the
trainer and the attribution module get exact gradients.
"""

import json
import re
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import EmptyTrainingSet, TokenIdOutOfRange, TraceMismatch

PAD_ID, UNK_ID, CLS_ID, SEP_ID = 0, 1, 2, 3
RESERVED_TOKENS = ("[PAD]", "[UNK]", "[CLS]", "[SEP]")

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


@dataclass
class Vocab:
    tokens: list
    index: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.index:
            self.index = {tok: i for i, tok in enumerate(self.tokens)}

    def __len__(self):
        return len(self.tokens)

    def id_of(self, token):
        return self.index.get(token, UNK_ID)

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            for i, tok in enumerate(self.tokens):
                handle.write(json.dumps({"id": i, "token": tok}) + "\n")

    @classmethod
    def load(cls, path):
        tokens = []
        with open(path, "r", encoding="utf-8") as handle:
            for line in handle:
                if not line.strip():
                    continue
                obj = json.loads(line)
                if obj["id"] != len(tokens):
                    raise ValueError(f"non-contiguous vocab id {obj['id']}")
                tokens.append(obj["token"])
        if tuple(tokens[:4]) != RESERVED_TOKENS:
            raise ValueError("vocab file does not start with the reserved tokens")
        return cls(tokens=tokens)


@dataclass
class EncoderConfig:
    vocab_size: int
    embed_dim: int = 64
    hidden_dim: int = 64
    penult_dim: int = 192
    dropout_p: float = 0.1
    max_seq_len: int = 128
    activation: str = "tanh"  # "identity" linearizes the net for analysis

    def __post_init__(self):
        if min(self.vocab_size, self.embed_dim, self.hidden_dim,
               self.penult_dim, self.max_seq_len) < 1:
            raise ValueError("all encoder dimensions must be >= 1")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must be in [0, 1)")
        if self.activation not in ("tanh", "identity"):
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class EncoderParams:
    token_embeddings: np.ndarray  # (vocab_size, embed_dim)
    hidden_weight: np.ndarray     # (embed_dim, hidden_dim)
    hidden_bias: np.ndarray       # (hidden_dim,)
    penult_weight: np.ndarray     # (hidden_dim, penult_dim)
    penult_bias: np.ndarray       # (penult_dim,)

    def tensors(self):
        return {
            "token_embeddings": self.token_embeddings,
            "hidden_weight": self.hidden_weight,
            "hidden_bias": self.hidden_bias,
            "penult_weight": self.penult_weight,
            "penult_bias": self.penult_bias,
        }

    def copy(self):
        return EncoderParams(**{k: v.copy() for k, v in self.tensors().items()})


@dataclass
class ForwardTrace:
    token_ids: np.ndarray
    token_embedding_rows: np.ndarray
    pool_mask: np.ndarray
    pooled: np.ndarray
    hidden_pre: np.ndarray
    hidden_post: np.ndarray
    dropout_mask: np.ndarray  # raw 0/1 keep mask; None in eval mode
    embedding: np.ndarray
    mode: str
    sort_order: np.ndarray = None  # canonical pooling order of the rows


def tokenize(text, vocab, max_seq_len=128):
    """Lowercase, split on non-alphanumeric runs, map OOV to UNK, and
    frame with CLS/SEP, truncating to max_seq_len with both kept."""
    words = _TOKEN_RE.findall(text.lower())
    body = [vocab.id_of(w) for w in words]
    if len(body) > max_seq_len - 2:
        body = body[:max_seq_len - 2]
    return [CLS_ID] + body + [SEP_ID]


def build_vocab(train_utterances, max_size):
    """Frequency vocabulary over the training split: top (max_size - 4)
    tokens by count, ties broken lexicographically, after the reserved ids."""
    if not train_utterances:
        raise EmptyTrainingSet("cannot build a vocabulary from no utterances")
    if max_size < 4:
        raise ValueError("max_size must be >= 4 to hold the reserved tokens")
    counts = Counter()
    for utt in train_utterances:
        counts.update(_TOKEN_RE.findall(utt.text.lower()))
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    kept = [tok for tok, _ in ranked[:max_size - 4]]
    return Vocab(tokens=list(RESERVED_TOKENS) + kept)


def init_params(config, seed):
    """Normal initialization, scaled per tensor; biases start at zero."""
    rng = np.random.default_rng(seed)
    e, h, p = config.embed_dim, config.hidden_dim, config.penult_dim
    return EncoderParams(
        token_embeddings=rng.normal(0.0, 1.0 / np.sqrt(e), (config.vocab_size, e)),
        hidden_weight=rng.normal(0.0, np.sqrt(2.0 / (e + h)), (e, h)),
        hidden_bias=np.zeros(h),
        penult_weight=rng.normal(0.0, np.sqrt(2.0 / (h + p)), (h, p)),
        penult_bias=np.zeros(p),
    )


def _check_ids(token_ids, vocab_size):
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= vocab_size):
        raise TokenIdOutOfRange(
            f"token ids must lie in [0, {vocab_size}); got {ids.min()}..{ids.max()}")
    return ids


def _dropout_mask(config, mode, rng):
    if mode == "eval" or config.dropout_p == 0.0:
        return None
    if rng is None:
        raise ValueError("train-mode encode requires a seeded rng for dropout")
    return (rng.random(config.hidden_dim) >= config.dropout_p).astype(np.float64)


def encode_from_rows(params, config, token_ids, rows, mode="eval", rng=None):
    """Forward pass starting from explicit token-embedding rows (the
    attribution module interpolates at this layer). PAD positions are
    excluded from pooling via the token ids.

    Rows are summed in token-id order so the pooled value is bitwise
    invariant to token-order permutations.
    """
    ids = _check_ids(token_ids, config.vocab_size)
    rows = np.ascontiguousarray(rows, dtype=np.float64)
    if rows.shape != (ids.shape[0], config.embed_dim):
        raise TraceMismatch(f"rows shape {rows.shape} does not match "
                            f"{(ids.shape[0], config.embed_dim)}")
    mask = (ids != PAD_ID).astype(np.float64)
    order = np.argsort(ids, kind="stable")
    raw_mask = _dropout_mask(config, mode, rng)
    drop_scaled = None
    if raw_mask is not None:
        drop_scaled = raw_mask / (1.0 - config.dropout_p)
    embedding, pooled, hidden_pre, hidden_act = _kernels.encoder_forward(
        np.ascontiguousarray(rows[order]), np.ascontiguousarray(mask[order]),
        params.hidden_weight, params.hidden_bias,
        params.penult_weight, params.penult_bias, drop_scaled,
        config.activation == "tanh")
    trace = ForwardTrace(
        token_ids=ids, token_embedding_rows=rows, pool_mask=mask,
        pooled=pooled, hidden_pre=hidden_pre, hidden_post=hidden_act,
        dropout_mask=raw_mask, embedding=embedding, mode=mode,
        sort_order=order)
    return embedding, trace


def encode(params, config, token_ids, mode="eval", rng=None):
    """Map token ids to the speaker embedding. Eval mode is deterministic;
    train mode applies inverted-scaling dropout drawn from rng."""
    ids = _check_ids(token_ids, config.vocab_size)
    rows = params.token_embeddings[ids]
    return encode_from_rows(params, config, ids, rows, mode=mode, rng=rng)


def scatter_token_grads(vocab_size, token_ids, grad_rows):
    """Accumulate per-position row gradients into a dense
    (vocab_size, embed_dim) token-embedding gradient."""
    grad = np.zeros((vocab_size, grad_rows.shape[1]))
    np.add.at(grad, np.asarray(token_ids, dtype=np.int64), grad_rows)
    return grad


def backward_from_trace(trace, params, config, grad_embedding):
    """Gradients w.r.t. the affine tensors and the input rows only
    (the trainer scatters row gradients itself)."""
    if trace.hidden_post.shape != (config.hidden_dim,):
        raise TraceMismatch("trace does not match the encoder config")
    if trace.mode == "train" and config.dropout_p > 0.0 and trace.dropout_mask is None:
        raise TraceMismatch("train-mode trace is missing its dropout mask")
    grad_embedding = np.asarray(grad_embedding, dtype=np.float64)
    if grad_embedding.shape != (config.penult_dim,):
        raise TraceMismatch(f"grad_embedding must have shape ({config.penult_dim},)")
    drop_scaled = None
    if trace.dropout_mask is not None:
        drop_scaled = trace.dropout_mask / (1.0 - config.dropout_p)
    order = trace.sort_order
    sorted_grads = _kernels.encoder_backward(
        np.ascontiguousarray(trace.pool_mask[order]), trace.pooled,
        trace.hidden_post, params.hidden_weight, params.penult_weight,
        drop_scaled, config.activation == "tanh", grad_embedding)
    grad_rows_sorted, g_hw, g_hb, g_pw, g_pb = sorted_grads
    grad_rows = np.empty_like(grad_rows_sorted)
    grad_rows[order] = grad_rows_sorted
    return grad_rows, g_hw, g_hb, g_pw, g_pb


def embed_corpus(params, config, vocab, corpus):
    """Eval-mode speaker embeddings for every utterance of a corpus."""
    from .asv import EmbeddingRecord
    records = []
    for utt in corpus:
        ids = tokenize(utt.text, vocab, config.max_seq_len)
        embedding, _ = encode(params, config, ids, mode="eval")
        records.append(EmbeddingRecord(utt_id=utt.utt_id,
                                       speaker_id=utt.speaker_id,
                                       sex=utt.sex, vector=embedding))
    return records


def encode_backward(trace, params, config, grad_embedding):
    """Exact gradients of the traced forward pass.

    Returns (grad_params, grad_token_embedding_rows) where grad_params is
    EncoderParams-shaped and includes the scatter-accumulated token
    embedding gradient.
    """
    grad_rows, g_hw, g_hb, g_pw, g_pb = backward_from_trace(
        trace, params, config, grad_embedding)
    grad_params = EncoderParams(
        token_embeddings=scatter_token_grads(config.vocab_size,
                                             trace.token_ids, grad_rows),
        hidden_weight=g_hw, hidden_bias=g_hb,
        penult_weight=g_pw, penult_bias=g_pb)
    return grad_params, grad_rows
