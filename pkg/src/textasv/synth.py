"""Synthetic topical corpora.

Each speaker gets a disjoint set of topic keywords; utterances mix
shared vocabulary with the speaker's keywords at a configurable rate.
The paired control corpus draws from the shared vocabulary only, so
its text carries no speaker signal. Deterministic per seed; profile
assignment depends only on the seed, so corpora generated for
different roles (train/enroll/trial) share speaker identities.
"""

import zlib
from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, Utterance
from .errors import VocabTooSmall

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"
_SESSIONS_PER_SPEAKER = 4
_MIN_LEN, _MAX_LEN = 5, 25


@dataclass
class SyntheticCorpusSpec:
    num_speakers: int = 20
    utterances_per_speaker: int = 40
    topic_keywords_per_speaker: int = 8
    shared_vocab_size: int = 500
    topical_word_rate: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if min(self.num_speakers, self.utterances_per_speaker,
               self.topic_keywords_per_speaker, self.shared_vocab_size) < 1:
            raise ValueError("all counts must be >= 1")
        if not 0.0 <= self.topical_word_rate <= 1.0:
            raise ValueError("topical_word_rate must be in [0, 1]")


def _lexicon():
    # all two-syllable consonant-vowel words, a fixed 4900-entry pool
    syllables = [c + v for c in _CONSONANTS for v in _VOWELS]
    return [a + b for a in syllables for b in syllables]


def _profiles(spec):
    """Shared vocabulary, per-speaker keyword sets, and sex labels.
    Depends only on the spec's seed and counts."""
    lexicon = _lexicon()
    needed = spec.shared_vocab_size + \
        spec.num_speakers * spec.topic_keywords_per_speaker
    if needed > len(lexicon):
        raise VocabTooSmall(
            f"need {needed} distinct tokens but the lexicon has {len(lexicon)}")
    rng = np.random.default_rng(spec.seed)
    order = rng.permutation(len(lexicon))
    shared = [lexicon[i] for i in order[:spec.shared_vocab_size]]
    keywords = {}
    cursor = spec.shared_vocab_size
    for s in range(spec.num_speakers):
        speaker_id = f"spk{s:03d}"
        keywords[speaker_id] = [
            lexicon[i]
            for i in order[cursor:cursor + spec.topic_keywords_per_speaker]]
        cursor += spec.topic_keywords_per_speaker
    sexes = {f"spk{s:03d}": ("F" if s % 2 == 0 else "M")
             for s in range(spec.num_speakers)}
    return shared, keywords, sexes


def _utterance_stream(spec, role):
    return np.random.default_rng([spec.seed, zlib.crc32(role.encode("ascii"))])


def _generate(spec, shared, keywords, sexes, topical_rate, role, tag):
    rng = _utterance_stream(spec, f"{role}:{tag}")
    utterances = []
    for s in range(spec.num_speakers):
        speaker_id = f"spk{s:03d}"
        own = keywords[speaker_id]
        for i in range(spec.utterances_per_speaker):
            length = int(rng.integers(_MIN_LEN, _MAX_LEN + 1))
            words = []
            for _ in range(length):
                if topical_rate > 0.0 and rng.random() < topical_rate:
                    words.append(own[int(rng.integers(len(own)))])
                else:
                    words.append(shared[int(rng.integers(len(shared)))])
            utterances.append(Utterance(
                utt_id=f"{speaker_id}-{role}-{i:04d}",
                speaker_id=speaker_id,
                session_id=f"{speaker_id}-sess{i % _SESSIONS_PER_SPEAKER}",
                sex=sexes[speaker_id],
                text=" ".join(words)))
    return Corpus(utterances=utterances, name=f"synthetic-{tag}-{role}")


def generate_synthetic_corpus(spec, role="train"):
    """Returns (topical corpus, topic-free control corpus).

    The control corpus uses the same speakers and utterance shapes but
    draws every token from the shared vocabulary.
    """
    shared, keywords, sexes = _profiles(spec)
    topical = _generate(spec, shared, keywords, sexes,
                        spec.topical_word_rate, role, "topical")
    control = _generate(spec, shared, keywords, sexes, 0.0, role, "control")
    return topical, control
