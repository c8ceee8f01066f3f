"""Enrollment, cosine trial scoring, per-speaker EER, and clipped means.

Per-speaker EER uses candidate thresholds at midpoints between
consecutive distinct scores (plus sentinels below the minimum and above
the maximum), the accept rule score >= t, and reports the mean of FRR
and FAR at the candidate minimizing their absolute difference (ties go
to the smallest threshold). Per-speaker EERs above 50% are possible;
group means clip them to 50 first.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .corpus import UNKNOWN
from .errors import (DimensionMismatch, EmptyEnrollment, MixedSpeakers,
                     NoNegativePairs, NoPositivePairs, OutOfRange, ZeroVector)

POSITIVE = "positive"
NEGATIVE = "negative"


@dataclass
class EmbeddingRecord:
    utt_id: str
    speaker_id: str
    sex: str
    vector: np.ndarray


@dataclass
class EnrollmentModel:
    speaker_id: str
    sex: str
    vector: np.ndarray
    num_utterances: int


@dataclass
class TrialScore:
    enroll_speaker_id: str
    trial_utt_id: str
    trial_speaker_id: str
    score: float
    label: str

    @property
    def is_positive(self):
        return self.label == POSITIVE


@dataclass
class SpeakerEER:
    speaker_id: str
    threshold: float
    eer_percent: float
    num_pos: int
    num_neg: int


@dataclass
class EvalSummary:
    mean_clipped_eer: dict        # sex -> mean of clipped per-speaker EERs
    speaker_eers: list            # SpeakerEER, in speaker-id order
    speaker_sex: dict
    normalize_enrollment: bool
    mean_clipped_eer_overall: float = 0.0
    warnings: list = field(default_factory=list)


def l2_normalize(v):
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise ZeroVector("cannot normalize a zero vector")
    return v / norm


def enroll(records, normalize_utterances=True):
    """Average a speaker's utterance embeddings into an enrollment vector,
    optionally unit-normalizing each utterance first."""
    if not records:
        raise EmptyEnrollment("enroll needs at least one embedding record")
    speaker = records[0].speaker_id
    if any(r.speaker_id != speaker for r in records):
        raise MixedSpeakers("enroll received records from multiple speakers")
    vectors = [np.asarray(r.vector, dtype=np.float64) for r in records]
    dims = {v.shape for v in vectors}
    if len(dims) != 1:
        raise DimensionMismatch(f"mixed embedding dimensions {sorted(dims)}")
    if normalize_utterances:
        vectors = [l2_normalize(v) for v in vectors]
    mean = np.mean(vectors, axis=0)
    return EnrollmentModel(speaker_id=speaker, sex=records[0].sex,
                           vector=mean, num_utterances=len(records))


def score(enrollment, trial):
    """Cosine similarity between the enrollment vector and one trial."""
    e = np.asarray(enrollment.vector, dtype=np.float64)
    t = np.asarray(trial.vector, dtype=np.float64)
    if e.shape != t.shape:
        raise DimensionMismatch(f"enrollment dim {e.shape} vs trial {t.shape}")
    e_norm = np.linalg.norm(e)
    t_norm = np.linalg.norm(t)
    if e_norm == 0.0 or t_norm == 0.0:
        raise ZeroVector("cosine of a zero vector is undefined")
    value = float(e @ t / (e_norm * t_norm))
    label = POSITIVE if enrollment.speaker_id == trial.speaker_id else NEGATIVE
    return TrialScore(enroll_speaker_id=enrollment.speaker_id,
                      trial_utt_id=trial.utt_id,
                      trial_speaker_id=trial.speaker_id,
                      score=value, label=label)


def make_trials(enrollments, trial_records, same_sex_only=True):
    """Exhaustive enrollment x trial scoring, restricted to matching sex
    when same_sex_only is on."""
    out = []
    for enr in enrollments:
        for rec in trial_records:
            if same_sex_only and enr.sex != rec.sex:
                continue
            out.append(score(enr, rec))
    return out


def _candidate_thresholds(values):
    # midpoints between consecutive distinct sorted scores, plus one
    # sentinel below the minimum and one above the maximum
    distinct = np.unique(values)
    mids = (distinct[:-1] + distinct[1:]) / 2.0
    return np.concatenate(([distinct[0] - 1.0], mids, [distinct[-1] + 1.0]))


def speaker_eer(scores):
    """Per-speaker threshold and EER from that speaker's trial scores.

    FRR(t) is the fraction of positives with score < t, FAR(t) the
    fraction of negatives with score >= t.
    """
    speaker = scores[0].enroll_speaker_id if scores else "?"
    pos = np.array([s.score for s in scores if s.is_positive])
    neg = np.array([s.score for s in scores if not s.is_positive])
    if pos.size == 0:
        raise NoPositivePairs(speaker)
    if neg.size == 0:
        raise NoNegativePairs(speaker)

    all_scores = np.concatenate((pos, neg))
    thresholds = _candidate_thresholds(all_scores)
    pos_sorted = np.sort(pos)
    neg_sorted = np.sort(neg)
    # integer counts strictly below each threshold; the |FRR - FAR|
    # comparison must be exact or the ties-to-smallest-threshold rule
    # falls to floating-point rounding
    n_pos_below = np.searchsorted(pos_sorted, thresholds, side="left")
    n_neg_below = np.searchsorted(neg_sorted, thresholds, side="left")
    n_neg_at_or_above = neg.size - n_neg_below
    gap = np.abs(n_pos_below * neg.size - n_neg_at_or_above * pos.size)
    best = int(np.argmin(gap))  # argmin takes the first, smallest threshold
    frr = n_pos_below[best] / pos.size
    far = n_neg_at_or_above[best] / neg.size
    return SpeakerEER(speaker_id=speaker,
                      threshold=float(thresholds[best]),
                      eer_percent=float(100.0 * (frr + far) / 2.0),
                      num_pos=int(pos.size), num_neg=int(neg.size))


def clip_eer(x):
    """min(50, x); per-speaker EERs above 50% count as 50 in group means."""
    if not 0.0 <= x <= 100.0:
        raise OutOfRange(f"eer_percent {x} outside [0, 100]")
    return min(50.0, x)


def summarize(speaker_eers, sex_of_speaker, normalize_enrollment=True):
    """Mean clipped EER per sex group plus the per-speaker breakdown."""
    eers = sorted(speaker_eers, key=lambda s: s.speaker_id)
    warnings = []
    groups = {}
    for entry in eers:
        sex = sex_of_speaker.get(entry.speaker_id, UNKNOWN)
        groups.setdefault(sex, []).append(clip_eer(entry.eer_percent))
    means = {}
    for sex in sorted(groups):
        values = groups[sex]
        if not values:
            warnings.append(f"no speakers in sex group {sex}; omitted")
            continue
        means[sex] = float(np.mean(values))
    overall = float(np.mean([clip_eer(e.eer_percent) for e in eers]))
    return EvalSummary(mean_clipped_eer=means, speaker_eers=eers,
                       speaker_sex={e.speaker_id: sex_of_speaker.get(e.speaker_id, UNKNOWN)
                                    for e in eers},
                       normalize_enrollment=normalize_enrollment,
                       mean_clipped_eer_overall=overall,
                       warnings=warnings)


def eers_by_speaker(trial_scores):
    """Group trial scores by enrollment speaker and compute each EER."""
    by_speaker = {}
    for s in trial_scores:
        by_speaker.setdefault(s.enroll_speaker_id, []).append(s)
    return [speaker_eer(by_speaker[spk]) for spk in sorted(by_speaker)]


# ---------------------------------------------------------------------------
# serialization

def save_embeddings(records, path):
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for rec in records:
            obj = {"utt_id": rec.utt_id, "speaker_id": rec.speaker_id,
                   "sex": None if rec.sex == UNKNOWN else rec.sex,
                   "vector": [float(x) for x in rec.vector]}
            handle.write(json.dumps(obj) + "\n")


def load_embeddings(path):
    records = []
    dim = None
    with open(path, "r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            for key in ("utt_id", "speaker_id", "vector"):
                if key not in obj:
                    raise DimensionMismatch(
                        f"embedding record at line {line_number} missing {key!r}")
            vec = np.asarray(obj["vector"], dtype=np.float64)
            if vec.ndim != 1:
                raise DimensionMismatch(
                    f"vector at line {line_number} is not one-dimensional")
            if dim is None:
                dim = vec.shape[0]
            elif vec.shape[0] != dim:
                raise DimensionMismatch(
                    f"vector at line {line_number} has dim {vec.shape[0]}, "
                    f"expected {dim}")
            sex = obj.get("sex")
            records.append(EmbeddingRecord(
                utt_id=str(obj["utt_id"]), speaker_id=str(obj["speaker_id"]),
                sex=UNKNOWN if sex in (None, "") else str(sex), vector=vec))
    return records


def save_scores_csv(trial_scores, path):
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["enroll_speaker", "trial_utt", "trial_speaker",
                         "label", "score"])
        for s in trial_scores:
            writer.writerow([s.enroll_speaker_id, s.trial_utt_id,
                             s.trial_speaker_id, s.label, repr(s.score)])


def load_scores_csv(path):
    out = []
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        for row in reader:
            out.append(TrialScore(
                enroll_speaker_id=row["enroll_speaker"],
                trial_utt_id=row["trial_utt"],
                trial_speaker_id=row["trial_speaker"],
                score=float(row["score"]), label=row["label"]))
    return out


def save_speaker_eers_csv(summary, path):
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["speaker_id", "sex", "threshold", "eer_percent",
                         "clipped_eer_percent", "num_pos", "num_neg"])
        for e in summary.speaker_eers:
            writer.writerow([e.speaker_id, summary.speaker_sex[e.speaker_id],
                             repr(e.threshold), repr(e.eer_percent),
                             repr(clip_eer(e.eer_percent)),
                             e.num_pos, e.num_neg])


def load_speaker_thresholds_csv(path):
    """speaker_id -> EER threshold, as written by save_speaker_eers_csv."""
    out = {}
    with open(path, "r", encoding="utf-8", newline="") as handle:
        for row in csv.DictReader(handle):
            out[row["speaker_id"]] = float(row["threshold"])
    return out


def summary_to_json(summary):
    obj = {
        "normalize_enrollment": summary.normalize_enrollment,
        "mean_clipped_eer": summary.mean_clipped_eer,
        "mean_clipped_eer_overall": summary.mean_clipped_eer_overall,
        "speakers": [
            {"speaker_id": e.speaker_id,
             "sex": summary.speaker_sex[e.speaker_id],
             "threshold": e.threshold,
             "eer_percent": e.eer_percent,
             "clipped_eer_percent": clip_eer(e.eer_percent),
             "num_pos": e.num_pos,
             "num_neg": e.num_neg}
            for e in summary.speaker_eers
        ],
        "warnings": summary.warnings,
    }
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def save_enrollments(enrollments, path, normalize_enrollment=True):
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for enr in enrollments:
            obj = {"speaker_id": enr.speaker_id,
                   "sex": None if enr.sex == UNKNOWN else enr.sex,
                   "num_utterances": enr.num_utterances,
                   "normalized_utterances": normalize_enrollment,
                   "vector": [float(x) for x in enr.vector]}
            handle.write(json.dumps(obj) + "\n")


def load_enrollments(path):
    out = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            obj = json.loads(line)
            sex = obj.get("sex")
            out.append(EnrollmentModel(
                speaker_id=str(obj["speaker_id"]),
                sex=UNKNOWN if sex in (None, "") else str(sex),
                vector=np.asarray(obj["vector"], dtype=np.float64),
                num_utterances=int(obj["num_utterances"])))
    return out
