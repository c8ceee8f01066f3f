"""Transcript corpus ingestion, validation, and deterministic splits.

A corpus is an ordered list of utterances; file order is preserved on
ingestion and is the determinism anchor for everything downstream.
"""

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (DuplicateUttId, EmptyCorpus, EmptyText, InconsistentSex,
                     MalformedRecord)

FEMALE = "F"
MALE = "M"
UNKNOWN = "Unknown"
SEXES = (FEMALE, MALE, UNKNOWN)


@dataclass(frozen=True)
class Utterance:
    utt_id: str
    speaker_id: str
    session_id: str
    sex: str
    text: str


@dataclass
class Corpus:
    utterances: list = field(default_factory=list)
    name: str = ""

    def __len__(self):
        return len(self.utterances)

    def __iter__(self):
        return iter(self.utterances)

    def speaker_ids(self):
        """Speaker ids in first-appearance order."""
        seen = {}
        for utt in self.utterances:
            seen.setdefault(utt.speaker_id, None)
        return list(seen)

    def speaker_sex(self):
        out = {}
        for utt in self.utterances:
            out.setdefault(utt.speaker_id, utt.sex)
        return out


@dataclass
class SplitResult:
    train: list
    validation: list
    seed: int

    def to_json(self):
        return json.dumps(
            {"seed": self.seed, "train": self.train, "validation": self.validation},
            sort_keys=True)

    @classmethod
    def from_json(cls, text):
        obj = json.loads(text)
        return cls(train=list(obj["train"]), validation=list(obj["validation"]),
                   seed=int(obj["seed"]))


def _parse_sex(value, line_number):
    if value is None or value == "":
        return UNKNOWN
    if value in (FEMALE, MALE, UNKNOWN):
        return value
    raise MalformedRecord(line_number, f"bad sex value {value!r}")


def _validate(utt, line_number, seen_ids, speaker_sex):
    if not isinstance(utt.utt_id, str) or not utt.utt_id:
        raise MalformedRecord(line_number, "utt_id must be a non-empty string")
    if utt.utt_id in seen_ids:
        raise DuplicateUttId(utt.utt_id)
    if not utt.text.strip():
        raise EmptyText(utt.utt_id)
    prior = speaker_sex.get(utt.speaker_id)
    if prior is not None and prior != utt.sex:
        raise InconsistentSex(utt.speaker_id)
    seen_ids.add(utt.utt_id)
    speaker_sex[utt.speaker_id] = utt.sex


def _ndjson_records(handle):
    for line_number, line in enumerate(handle, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(line_number, str(exc)) from exc
        if not isinstance(obj, dict):
            raise MalformedRecord(line_number, "record is not a JSON object")
        for key in ("utt_id", "speaker_id", "session_id", "text"):
            if key not in obj:
                raise MalformedRecord(line_number, f"missing field {key!r}")
        yield line_number, Utterance(
            utt_id=str(obj["utt_id"]),
            speaker_id=str(obj["speaker_id"]),
            session_id=str(obj["session_id"]),
            sex=_parse_sex(obj.get("sex"), line_number),
            text=str(obj["text"]),
        )


def _tsv_records(handle):
    for line_number, line in enumerate(handle, start=1):
        if not line.strip():
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 5:
            raise MalformedRecord(line_number,
                                  f"expected 5 tab-separated fields, got {len(parts)}")
        utt_id, speaker_id, session_id, sex, text = parts
        yield line_number, Utterance(
            utt_id=utt_id, speaker_id=speaker_id, session_id=session_id,
            sex=_parse_sex(sex, line_number), text=text)


def load_corpus(path, format="ndjson"):
    """Load and validate a transcript corpus from NDJSON or TSV.

    Preserves file order; rejects duplicate utt_ids, empty texts, and
    speakers with conflicting sex labels.
    """
    if format not in ("ndjson", "tsv"):
        raise ValueError(f"unknown corpus format {format!r}")
    reader = _ndjson_records if format == "ndjson" else _tsv_records
    utterances = []
    seen_ids = set()
    speaker_sex = {}
    with open(path, "r", encoding="utf-8") as handle:
        for line_number, utt in reader(handle):
            _validate(utt, line_number, seen_ids, speaker_sex)
            utterances.append(utt)
    return Corpus(utterances=utterances, name=os.path.basename(str(path)))


def save_corpus(corpus, path):
    """Write a corpus in the canonical NDJSON schema (round-trips load_corpus)."""
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for utt in corpus:
            obj = {
                "utt_id": utt.utt_id,
                "speaker_id": utt.speaker_id,
                "session_id": utt.session_id,
                "sex": None if utt.sex == UNKNOWN else utt.sex,
                "text": utt.text,
            }
            handle.write(json.dumps(obj, sort_keys=True) + "\n")


def split_spk_diverse_sess(corpus, validation_fraction=0.1, seed=0):
    """Deterministic speaker/session-diverse train/validation split.

    Within each (speaker_id, session_id) group the utterances are
    shuffled by the seeded generator and the ceil(fraction*size) last
    ones go to validation, clamped so groups of size >= 2 keep at least
    one utterance on each side. Singleton groups go entirely to train.
    """
    if len(corpus) == 0:
        raise EmptyCorpus("cannot split an empty corpus")
    if not 0.0 < validation_fraction < 1.0:
        raise ValueError("validation_fraction must be in (0, 1)")

    groups = {}
    for utt in corpus:
        groups.setdefault((utt.speaker_id, utt.session_id), []).append(utt.utt_id)

    rng = np.random.default_rng(seed)
    val_ids = set()
    for key in sorted(groups):
        members = groups[key]
        order = rng.permutation(len(members))
        if len(members) < 2:
            continue
        k = min(math.ceil(validation_fraction * len(members)), len(members) - 1)
        val_ids.update(members[i] for i in order[len(members) - k:])

    train, validation = [], []
    for utt in corpus:
        (validation if utt.utt_id in val_ids else train).append(utt.utt_id)
    return SplitResult(train=train, validation=validation, seed=seed)


def partition_by_sex(corpus):
    """Map each sex label to its speaker ids (first-appearance order)."""
    out = {}
    for utt in corpus:
        bucket = out.setdefault(utt.sex, [])
        if utt.speaker_id not in bucket:
            bucket.append(utt.speaker_id)
    return out
