import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eer_oracle import brute_force_eer
from textasv import errors
from textasv.asv import (EmbeddingRecord, EnrollmentModel, TrialScore,
                         clip_eer, eers_by_speaker, enroll, l2_normalize,
                         load_embeddings, load_scores_csv, make_trials,
                         save_embeddings, save_scores_csv, score, speaker_eer,
                         summarize, summary_to_json)


def rec(utt, spk, vec, sex="F"):
    return EmbeddingRecord(utt_id=utt, speaker_id=spk, sex=sex,
                           vector=np.asarray(vec, dtype=np.float64))


def trial_scores(pos, neg, spk="spk"):
    out = []
    for i, s in enumerate(pos):
        out.append(TrialScore(spk, f"p{i}", spk, float(s), "positive"))
    for i, s in enumerate(neg):
        out.append(TrialScore(spk, f"n{i}", "other", float(s), "negative"))
    return out


class TestL2Normalize:
    def test_three_four(self):
        np.testing.assert_allclose(l2_normalize([3.0, 4.0]), [0.6, 0.8],
                                   rtol=1e-15)

    def test_idempotent_on_unit_vectors(self):
        v = l2_normalize([1.0, 2.0, -2.0])
        np.testing.assert_allclose(l2_normalize(v), v, rtol=1e-15)
        assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-12)

    def test_zero_vector(self):
        with pytest.raises(errors.ZeroVector):
            l2_normalize([0.0, 0.0])


class TestEnroll:
    def test_single_utterance_flag_on(self):
        model = enroll([rec("u1", "a", [3.0, 4.0])], normalize_utterances=True)
        np.testing.assert_allclose(model.vector, [0.6, 0.8], rtol=1e-15)
        assert model.num_utterances == 1

    def test_opposite_unit_vectors_mean_to_zero(self):
        model = enroll([rec("u1", "a", [1.0, 0.0]), rec("u2", "a", [-1.0, 0.0])])
        np.testing.assert_array_equal(model.vector, [0.0, 0.0])
        with pytest.raises(errors.ZeroVector):
            score(model, rec("t", "a", [1.0, 0.0]))

    def test_scaled_duplicates(self):
        u = np.array([0.8, 0.6])
        on = enroll([rec("u1", "a", u), rec("u2", "a", 10.0 * u)],
                    normalize_utterances=True)
        same = enroll([rec("u1", "a", u), rec("u2", "a", u)],
                      normalize_utterances=True)
        np.testing.assert_allclose(on.vector, same.vector, rtol=1e-12)

        off = enroll([rec("u1", "a", u), rec("u2", "a", 10.0 * u)],
                     normalize_utterances=False)
        np.testing.assert_allclose(off.vector, 5.5 * u, rtol=1e-12)
        # cosine scores agree anyway: the mean is still along u
        trial = rec("t", "a", [1.0, 1.0])
        assert score(on, trial).score == pytest.approx(score(off, trial).score,
                                                       rel=1e-12)

    def test_mixed_speakers_rejected(self):
        with pytest.raises(errors.MixedSpeakers):
            enroll([rec("u1", "a", [1.0]), rec("u2", "b", [1.0])])

    def test_empty_rejected(self):
        with pytest.raises(errors.EmptyEnrollment):
            enroll([])

    def test_zero_record_with_flag_on(self):
        with pytest.raises(errors.ZeroVector):
            enroll([rec("u1", "a", [0.0, 0.0])], normalize_utterances=True)


class TestScore:
    def test_identical_vectors(self):
        enr = EnrollmentModel("a", "F", np.array([0.3, 0.4]), 1)
        assert score(enr, rec("t", "a", [0.3, 0.4])).score == \
            pytest.approx(1.0, abs=1e-12)

    def test_orthogonal(self):
        enr = EnrollmentModel("a", "F", np.array([1.0, 0.0]), 1)
        assert score(enr, rec("t", "b", [0.0, 2.0])).score == 0.0

    def test_45_degrees(self):
        enr = EnrollmentModel("a", "F", np.array([1.0, 0.0]), 1)
        value = score(enr, rec("t", "b", np.array([1.0, 1.0]) / np.sqrt(2))).score
        assert value == pytest.approx(np.sqrt(2) / 2, abs=1e-12)
        assert value == pytest.approx(0.7071, abs=5e-5)

    def test_label_rule(self):
        enr = EnrollmentModel("a", "F", np.array([1.0, 0.0]), 1)
        assert score(enr, rec("t", "a", [1.0, 1.0])).label == "positive"
        assert score(enr, rec("t", "b", [1.0, 1.0])).label == "negative"

    def test_dimension_mismatch(self):
        enr = EnrollmentModel("a", "F", np.array([1.0, 0.0]), 1)
        with pytest.raises(errors.DimensionMismatch):
            score(enr, rec("t", "a", [1.0, 0.0, 0.0]))

    def test_scale_invariance(self):
        enr = EnrollmentModel("a", "F", np.array([0.2, -0.7, 0.1]), 1)
        trial = rec("t", "b", [0.5, 0.5, 1.0])
        scaled = EnrollmentModel("a", "F", 37.5 * enr.vector, 1)
        assert score(enr, trial).score == pytest.approx(
            score(scaled, trial).score, rel=1e-12)


class TestMakeTrials:
    def setup_method(self):
        self.enrollments = [
            EnrollmentModel("a", "F", np.array([1.0, 0.0]), 1),
            EnrollmentModel("b", "M", np.array([0.0, 1.0]), 1),
        ]
        self.trials = [
            rec("t1", "a", [1.0, 0.0], sex="F"),
            rec("t2", "b", [0.0, 1.0], sex="M"),
            rec("t3", "c", [1.0, 1.0], sex="F"),
        ]

    def test_same_sex_restriction(self):
        scores = make_trials(self.enrollments, self.trials, same_sex_only=True)
        pairs = {(s.enroll_speaker_id, s.trial_utt_id) for s in scores}
        assert pairs == {("a", "t1"), ("a", "t3"), ("b", "t2")}

    def test_unrestricted_is_cartesian(self):
        scores = make_trials(self.enrollments, self.trials, same_sex_only=False)
        assert len(scores) == 6

    def test_unenrolled_speaker_contributes_negatives_only(self):
        scores = make_trials(self.enrollments, self.trials, same_sex_only=False)
        labels = {s.label for s in scores if s.trial_speaker_id == "c"}
        assert labels == {"negative"}

    def test_label_consistency(self):
        # positives exist for an enrolled speaker iff that speaker has
        # trial utterances
        scores = make_trials(self.enrollments, self.trials, same_sex_only=False)
        trial_speakers = {t.speaker_id for t in self.trials}
        for enr in self.enrollments:
            has_pos = any(s.is_positive for s in scores
                          if s.enroll_speaker_id == enr.speaker_id)
            assert has_pos == (enr.speaker_id in trial_speakers)


class TestSpeakerEER:
    def test_perfect_separation(self):
        result = speaker_eer(trial_scores([0.9, 0.8], [0.2, 0.1]))
        assert result.eer_percent == 0.0
        # smallest candidate threshold inside the separating band
        assert result.threshold == pytest.approx(0.5)
        assert result.num_pos == 2 and result.num_neg == 2

    def test_one_error_each_side(self):
        result = speaker_eer(trial_scores([0.9, 0.8, 0.7, 0.3],
                                          [0.5, 0.2, 0.1, 0.05]))
        assert result.eer_percent == pytest.approx(25.0, abs=1e-12)
        t, eer = brute_force_eer([0.9, 0.8, 0.7, 0.3], [0.5, 0.2, 0.1, 0.05])
        assert result.eer_percent == pytest.approx(eer, abs=1e-12)
        assert result.threshold == pytest.approx(t, abs=1e-12)

    def test_inverted_distributions_exceed_50(self):
        result = speaker_eer(trial_scores([0.1, 0.2], [0.8, 0.9]))
        assert result.eer_percent == pytest.approx(100.0, abs=1e-12)

    def test_requires_both_labels(self):
        with pytest.raises(errors.NoPositivePairs):
            speaker_eer(trial_scores([], [0.1, 0.2]))
        with pytest.raises(errors.NoNegativePairs):
            speaker_eer(trial_scores([0.1, 0.2], []))

    @pytest.mark.parametrize("seed", range(40))
    def test_matches_brute_force_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n_pos = int(rng.integers(1, 60))
        n_neg = int(rng.integers(1, 60))
        # quantize some runs to force ties between scores
        pos = rng.uniform(-1, 1, n_pos)
        neg = rng.uniform(-1, 1, n_neg)
        if seed % 3 == 0:
            pos = np.round(pos, 1)
            neg = np.round(neg, 1)
        result = speaker_eer(trial_scores(pos, neg))
        t, eer = brute_force_eer(pos, neg)
        assert result.eer_percent == pytest.approx(eer, abs=1e-9)
        assert result.threshold == pytest.approx(t, abs=1e-12)

    @given(
        pos=st.lists(st.integers(-20, 20), min_size=1, max_size=30),
        neg=st.lists(st.integers(-20, 20), min_size=1, max_size=30),
    )
    @settings(max_examples=80, deadline=None)
    def test_oracle_property(self, pos, neg):
        pos = [p / 20.0 for p in pos]
        neg = [n / 20.0 for n in neg]
        result = speaker_eer(trial_scores(pos, neg))
        t, eer = brute_force_eer(pos, neg)
        assert result.eer_percent == pytest.approx(eer, abs=1e-9)
        assert result.threshold == pytest.approx(t, abs=1e-12)


class TestClipEER:
    def test_62_clips_to_50(self):
        assert clip_eer(62.0) == 50.0

    def test_below_clip_unchanged(self):
        assert clip_eer(35.0) == 35.0

    def test_boundary_fixed_point(self):
        assert clip_eer(50.0) == 50.0

    def test_out_of_range(self):
        with pytest.raises(errors.OutOfRange):
            clip_eer(101.0)
        with pytest.raises(errors.OutOfRange):
            clip_eer(-0.5)

    def test_idempotent_and_monotone(self):
        xs = np.linspace(0.0, 100.0, 201)
        clipped = [clip_eer(float(x)) for x in xs]
        assert clipped == [clip_eer(c) for c in clipped]
        assert all(b >= a for a, b in zip(clipped, clipped[1:]))
        assert all(0.0 <= c <= 50.0 for c in clipped)


class TestSummarize:
    def eer(self, spk, value):
        return type("E", (), {})  # placeholder, replaced below

    def test_clipped_group_means(self):
        from textasv.asv import SpeakerEER
        eers = [SpeakerEER("f1", 0.5, 10.0, 2, 2),
                SpeakerEER("f2", 0.5, 70.0, 2, 2),
                SpeakerEER("m1", 0.5, 50.0, 2, 2)]
        sex = {"f1": "F", "f2": "F", "m1": "M"}
        summary = summarize(eers, sex)
        assert summary.mean_clipped_eer == {"F": 30.0, "M": 50.0}
        assert summary.mean_clipped_eer_overall == pytest.approx(110.0 / 3)

    def test_single_speaker(self):
        from textasv.asv import SpeakerEER
        summary = summarize([SpeakerEER("x", 0.1, 42.0, 1, 1)], {"x": "M"})
        assert summary.mean_clipped_eer == {"M": 42.0}

    def test_all_at_50(self):
        from textasv.asv import SpeakerEER
        eers = [SpeakerEER(f"s{i}", 0.0, 50.0, 1, 1) for i in range(4)]
        sex = {f"s{i}": "F" if i % 2 else "M" for i in range(4)}
        summary = summarize(eers, sex)
        assert set(summary.mean_clipped_eer.values()) == {50.0}

    def test_summary_json_is_deterministic(self):
        from textasv.asv import SpeakerEER
        eers = [SpeakerEER("a", 0.5, 12.5, 4, 8)]
        a = summary_to_json(summarize(eers, {"a": "F"}))
        b = summary_to_json(summarize(eers, {"a": "F"}))
        assert a == b
        assert '"mean_clipped_eer"' in a


class TestRoundTrips:
    def test_embeddings_ndjson(self, tmp_path):
        records = [rec("u1", "a", [0.1, -0.2, 0.3]),
                   rec("u2", "b", [1.0, 2.0, 3.0], sex="Unknown")]
        path = tmp_path / "emb.ndjson"
        save_embeddings(records, path)
        again = load_embeddings(path)
        assert [r.utt_id for r in again] == ["u1", "u2"]
        assert again[1].sex == "Unknown"
        np.testing.assert_array_equal(again[0].vector, records[0].vector)

    def test_mixed_dimensions_rejected(self, tmp_path):
        path = tmp_path / "emb.ndjson"
        path.write_text(
            '{"utt_id": "a", "speaker_id": "s", "sex": "F", "vector": [1.0]}\n'
            '{"utt_id": "b", "speaker_id": "s", "sex": "F", "vector": [1.0, 2.0]}\n')
        with pytest.raises(errors.DimensionMismatch):
            load_embeddings(path)

    def test_scores_csv(self, tmp_path):
        scores = trial_scores([0.9, 0.123456789012345], [0.2])
        path = tmp_path / "scores.csv"
        save_scores_csv(scores, path)
        again = load_scores_csv(path)
        assert [s.score for s in again] == [s.score for s in scores]
        assert [s.label for s in again] == [s.label for s in scores]

    def test_eers_by_speaker_groups_and_sorts(self):
        scores = (trial_scores([0.9], [0.1], spk="b") +
                  trial_scores([0.8], [0.2], spk="a"))
        eers = eers_by_speaker(scores)
        assert [e.speaker_id for e in eers] == ["a", "b"]
