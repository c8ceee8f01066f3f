"""Mini-batch training loop with decoupled weight decay and a linear
warmup-then-decay schedule, tracking validation loss/accuracy per epoch.

The whole run is a pure function of (corpus, split, configs, seeds):
shuffling, dropout, and initialization each draw from their own seeded
generator, and batch gradients are reduced in a fixed order.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from . import aam as aam_mod
from .aam import AAMConfig, ClassifierWeights, init_classifier
from .checkpoint import save_checkpoint
from .encoder import (backward_from_trace, encode, init_params,
                      scatter_token_grads, tokenize)
from .errors import BatchTooLarge, EmptyLog, ShapeMismatch, TooFewSpeakers


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 256
    base_lr: float = 1e-4
    warmup_fraction: float = 0.1
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    shuffle_seed: int = 0
    dropout_seed: int = 1
    init_seed: int = 2

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.base_lr < 0.0:
            # zero is allowed: a frozen run is the cheapest no-op baseline
            raise ValueError("base_lr must be non-negative")


@dataclass
class OptimizerState:
    first_moment: dict
    second_moment: dict
    step: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls(first_moment={k: np.zeros_like(v) for k, v in params.items()},
                   second_moment={k: np.zeros_like(v) for k, v in params.items()})


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_acc: float


@dataclass
class TrainLog:
    epochs: list = field(default_factory=list)
    learning_rates: list = field(default_factory=list)

    def save_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write("epoch,train_loss,val_loss,val_acc\n")
            for e in self.epochs:
                handle.write(f"{e.epoch},{e.train_loss!r},{e.val_loss!r},"
                             f"{e.val_acc!r}\n")


@dataclass
class Checkpoint:
    epoch: int
    params: object
    classifier: ClassifierWeights
    path: str = None


def lr_at(step, total_steps, config):
    """Linear warmup to base_lr over round(warmup_fraction*total) steps,
    then linear decay to zero at total_steps."""
    warmup = round(config.warmup_fraction * total_steps)
    if step <= warmup:
        if warmup == 0:
            return config.base_lr
        return config.base_lr * step / warmup
    return config.base_lr * (total_steps - step) / (total_steps - warmup)


def adamw_step(params, grads, state, lr, config):
    """Bias-corrected adaptive update with decoupled weight decay,
    in place: p -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)."""
    for key in params:
        if params[key].shape != grads[key].shape:
            raise ShapeMismatch(f"gradient shape for {key!r} does not match")
    state.step += 1
    t = state.step
    bc1 = 1.0 - config.beta1 ** t
    bc2 = 1.0 - config.beta2 ** t
    for key, p in params.items():
        g = grads[key]
        m = state.first_moment[key]
        v = state.second_moment[key]
        m *= config.beta1
        m += (1.0 - config.beta1) * g
        v *= config.beta2
        v += (1.0 - config.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        p -= lr * (m_hat / (np.sqrt(v_hat) + config.eps)
                   + config.weight_decay * p)
    return params, state


def _utterances_by_id(corpus):
    return {utt.utt_id: utt for utt in corpus}


def _prepare(corpus, split, vocab, encoder_config):
    by_id = _utterances_by_id(corpus)
    train_utts = [by_id[i] for i in split.train]
    val_utts = [by_id[i] for i in split.validation]
    speakers = sorted({u.speaker_id for u in train_utts})
    class_of = {spk: i for i, spk in enumerate(speakers)}
    unseen = {u.speaker_id for u in val_utts} - set(speakers)
    if unseen:
        raise ValueError(f"validation speakers missing from train: {sorted(unseen)}")

    def as_items(utts):
        return [(tokenize(u.text, vocab, encoder_config.max_seq_len),
                 class_of[u.speaker_id]) for u in utts]

    return as_items(train_utts), as_items(val_utts), speakers


def _evaluate(items, params, classifier, encoder_config, aam_config):
    if not items:
        return float("nan"), float("nan")
    total_loss = 0.0
    correct = 0
    for token_ids, target in items:
        emb, _ = encode(params, encoder_config, token_ids, mode="eval")
        total_loss += aam_mod.aam_loss(emb, classifier, target, aam_config)
        top = int(np.argmax(aam_mod.cosine_logits(emb, classifier)))
        correct += int(top == target)
    return total_loss / len(items), correct / len(items)


def train(corpus, split, vocab, encoder_config, train_config,
          aam_config=None, out_dir=None):
    """Run the full training loop.

    Returns (TrainLog, checkpoints): one checkpoint per epoch, written
    under out_dir as well when given.
    """
    aam_config = aam_config or AAMConfig()
    train_items, val_items, speakers = _prepare(corpus, split, vocab,
                                                encoder_config)
    if len(speakers) < 2:
        raise TooFewSpeakers("training needs at least 2 speakers")
    if train_config.batch_size > len(train_items):
        raise BatchTooLarge(f"batch_size {train_config.batch_size} exceeds "
                            f"training set size {len(train_items)}")

    params = init_params(encoder_config, seed=train_config.init_seed)
    classifier = init_classifier(len(speakers), encoder_config.penult_dim,
                                 seed=train_config.init_seed + 1)
    tensors = dict(params.tensors())
    tensors["classifier_weight"] = classifier.weight
    state = OptimizerState.zeros_like(tensors)

    shuffle_rng = np.random.default_rng(train_config.shuffle_seed)
    dropout_rng = np.random.default_rng(train_config.dropout_seed)
    n = len(train_items)
    steps_per_epoch = (n + train_config.batch_size - 1) // train_config.batch_size
    total_steps = train_config.epochs * steps_per_epoch

    log = TrainLog()
    checkpoints = []
    global_step = 0
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)

    for epoch in range(1, train_config.epochs + 1):
        order = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, train_config.batch_size):
            batch = order[start:start + train_config.batch_size]
            grads = {k: np.zeros_like(v) for k, v in tensors.items()}
            batch_loss = 0.0
            for idx in batch:
                token_ids, target = train_items[idx]
                emb, trace = encode(params, encoder_config, token_ids,
                                    mode="train", rng=dropout_rng)
                loss, grad_emb, grad_w = aam_mod.aam_loss_and_grad(
                    emb, classifier, target, aam_config)
                batch_loss += loss
                grad_rows, g_hw, g_hb, g_pw, g_pb = backward_from_trace(
                    trace, params, encoder_config, grad_emb)
                np.add.at(grads["token_embeddings"], trace.token_ids, grad_rows)
                grads["hidden_weight"] += g_hw
                grads["hidden_bias"] += g_hb
                grads["penult_weight"] += g_pw
                grads["penult_bias"] += g_pb
                grads["classifier_weight"] += grad_w
            scale = 1.0 / len(batch)
            for g in grads.values():
                g *= scale
            epoch_loss += batch_loss * scale
            global_step += 1
            lr = lr_at(global_step, total_steps, train_config)
            log.learning_rates.append(lr)
            adamw_step(tensors, grads, state, lr, train_config)

        val_loss, val_acc = _evaluate(val_items, params, classifier,
                                      encoder_config, aam_config)
        log.epochs.append(EpochStats(
            epoch=epoch, train_loss=epoch_loss / steps_per_epoch,
            val_loss=val_loss, val_acc=val_acc))

        ckpt = Checkpoint(epoch=epoch, params=params.copy(),
                          classifier=ClassifierWeights(weight=classifier.weight.copy()))
        if out_dir:
            ckpt.path = os.path.join(out_dir, f"checkpoint_epoch{epoch:02d}.ckpt")
            save_checkpoint(ckpt.path, ckpt.params, ckpt.classifier,
                            encoder_config, seed=train_config.init_seed,
                            epoch=epoch, class_speakers=speakers)
        checkpoints.append(ckpt)

    return log, checkpoints


def select_checkpoint(log, checkpoints):
    """Checkpoint of the epoch with minimum validation loss; ties go to
    the earliest epoch."""
    if not log.epochs:
        raise EmptyLog("no completed epochs to select from")
    best = min(range(len(log.epochs)), key=lambda i: (log.epochs[i].val_loss,
                                                      log.epochs[i].epoch))
    return checkpoints[best]
