import numpy as np
import pytest

from textasv import errors
from textasv.asv import EnrollmentModel
from textasv.attrib import (AttributionConfig, attribute_batch,
                            integrated_gradients, path_integrate,
                            target_function)
from textasv.corpus import Corpus, Utterance
from textasv.encoder import (CLS_ID, PAD_ID, SEP_ID, EncoderConfig, Vocab,
                             backward_from_trace, encode, encode_from_rows,
                             init_params)


def setup_encoder(seed=0, vocab_size=12, embed=6, hidden=5, penult=7,
                  activation="tanh"):
    cfg = EncoderConfig(vocab_size=vocab_size, embed_dim=embed,
                        hidden_dim=hidden, penult_dim=penult, dropout_p=0.0,
                        max_seq_len=32, activation=activation)
    params = init_params(cfg, seed=seed)
    return cfg, params


def toy_vocab(vocab_size):
    extra = [f"w{i}" for i in range(vocab_size - 4)]
    return Vocab(tokens=["[PAD]", "[UNK]", "[CLS]", "[SEP]"] + extra)


def enrollment_for(params, cfg, token_ids, speaker="spk"):
    emb, _ = encode(params, cfg, token_ids)
    return EnrollmentModel(speaker_id=speaker, sex="F", vector=emb,
                           num_utterances=1)


class TestTargetFunction:
    def test_zero_at_threshold(self):
        cfg, params = setup_encoder()
        ids = [CLS_ID, 4, 5, SEP_ID]
        enr = enrollment_for(params, cfg, [CLS_ID, 6, SEP_ID])
        emb, _ = encode(params, cfg, ids)
        cos = float(enr.vector @ emb /
                    (np.linalg.norm(enr.vector) * np.linalg.norm(emb)))
        value, _ = target_function(params, cfg, ids, enr.vector,
                                   threshold=cos)
        rows = params.token_embeddings[np.asarray(ids)]
        assert value(rows) == pytest.approx(0.0, abs=1e-12)

    def test_parallel_output_gives_one(self):
        cfg, params = setup_encoder()
        ids = [CLS_ID, 4, SEP_ID]
        emb, _ = encode(params, cfg, ids)
        value, _ = target_function(params, cfg, ids, 2.5 * emb, threshold=0.0)
        rows = params.token_embeddings[np.asarray(ids)]
        assert value(rows) == pytest.approx(1.0, abs=1e-12)

    def test_deterministic(self):
        cfg, params = setup_encoder()
        ids = [CLS_ID, 4, 7, SEP_ID]
        enr = enrollment_for(params, cfg, [CLS_ID, 5, SEP_ID])
        value, _ = target_function(params, cfg, ids, enr.vector, 0.1)
        rows = params.token_embeddings[np.asarray(ids)]
        assert value(rows) == value(rows)

    def test_gradient_matches_finite_difference(self):
        from fdcheck import numeric_grad, max_rel_error
        cfg, params = setup_encoder(seed=4)
        ids = [CLS_ID, 4, 8, SEP_ID]
        enr = enrollment_for(params, cfg, [CLS_ID, 9, SEP_ID])
        value, value_and_grad = target_function(params, cfg, ids,
                                                enr.vector, 0.2)
        rows = params.token_embeddings[np.asarray(ids)].copy()
        _, grad = value_and_grad(rows)
        fd = numeric_grad(value, rows.copy())
        assert max_rel_error(grad, fd) < 1e-4


class TestIntegratedGradients:
    def report_for(self, cfg, params, vocab, ids, steps=50,
                   baseline="pad_embedding", threshold=0.0, speaker="spk"):
        enr = enrollment_for(params, cfg, [CLS_ID, 5, 9, SEP_ID],
                             speaker=speaker)
        return integrated_gradients(
            params, cfg, vocab, ids, "utt-1", speaker, enr, threshold,
            AttributionConfig(steps=steps, baseline=baseline))

    def test_completeness_within_one_percent(self):
        cfg, params = setup_encoder(seed=1)
        vocab = toy_vocab(cfg.vocab_size)
        ids = [CLS_ID, 4, 6, 8, 10, SEP_ID]
        report = self.report_for(cfg, params, vocab, ids)
        value, _ = target_function(
            params, cfg, ids,
            enrollment_for(params, cfg, [CLS_ID, 5, 9, SEP_ID]).vector, 0.0)
        rows = params.token_embeddings[np.asarray(ids)]
        assert report.completeness_residual <= \
            0.01 * max(1.0, abs(report.attribution_score))

    def test_attribution_score_is_sum(self):
        cfg, params = setup_encoder(seed=2)
        vocab = toy_vocab(cfg.vocab_size)
        report = self.report_for(cfg, params, vocab, [CLS_ID, 4, 7, SEP_ID])
        total = sum(t.importance for t in report.tokens)
        assert report.attribution_score == pytest.approx(total, abs=1e-9)

    def test_special_tokens_get_zero_importance(self):
        cfg, params = setup_encoder(seed=3)
        vocab = toy_vocab(cfg.vocab_size)
        report = self.report_for(cfg, params, vocab, [CLS_ID, 4, SEP_ID])
        assert report.tokens[0].token == "[CLS]"
        assert report.tokens[0].importance == 0.0
        assert report.tokens[-1].importance == 0.0

    def test_token_at_baseline_row_gets_zero(self):
        cfg, params = setup_encoder(seed=5)
        params.token_embeddings[6] = params.token_embeddings[PAD_ID]
        vocab = toy_vocab(cfg.vocab_size)
        report = self.report_for(cfg, params, vocab, [CLS_ID, 6, 7, SEP_ID])
        assert report.tokens[1].importance == 0.0

    def test_cls_sep_only_input_attributes_nothing(self):
        cfg, params = setup_encoder(seed=6)
        vocab = toy_vocab(cfg.vocab_size)
        report = self.report_for(cfg, params, vocab, [CLS_ID, SEP_ID])
        assert all(t.importance == 0.0 for t in report.tokens)
        assert report.attribution_score == 0.0

    def test_decision_follows_threshold(self):
        cfg, params = setup_encoder(seed=7)
        vocab = toy_vocab(cfg.vocab_size)
        low = self.report_for(cfg, params, vocab, [CLS_ID, 4, SEP_ID],
                              threshold=-1.0)
        high = self.report_for(cfg, params, vocab, [CLS_ID, 4, SEP_ID],
                               threshold=1.0)
        assert low.decision == "accept"
        assert high.decision == "reject"
        assert low.margin_to_threshold == pytest.approx(
            low.raw_score - (-1.0), abs=1e-12)

    def test_more_steps_tighten_the_residual(self):
        cfg, params = setup_encoder(seed=8)
        vocab = toy_vocab(cfg.vocab_size)
        ids = [CLS_ID, 4, 6, 8, SEP_ID]
        r50 = self.report_for(cfg, params, vocab, ids, steps=50)
        r100 = self.report_for(cfg, params, vocab, ids, steps=100)
        change = abs(r100.attribution_score - r50.attribution_score)
        assert change <= max(r50.completeness_residual, 1e-12)

    def test_invalid_token_ids(self):
        cfg, params = setup_encoder()
        vocab = toy_vocab(cfg.vocab_size)
        enr = enrollment_for(params, cfg, [CLS_ID, 5, SEP_ID])
        with pytest.raises(errors.InvalidTokenIds):
            integrated_gradients(params, cfg, vocab, [4, 5], "u", "spk",
                                 enr, 0.0)

    def test_zero_baseline_option(self):
        cfg, params = setup_encoder(seed=9)
        vocab = toy_vocab(cfg.vocab_size)
        report = self.report_for(cfg, params, vocab, [CLS_ID, 4, SEP_ID],
                                 baseline="zero_embedding")
        assert np.isfinite(report.attribution_score)


class TestLinearClosedForm:
    def test_exact_match_on_linearized_encoder(self):
        # identity activation and a dot-product target make the whole map
        # affine in the rows, so the path integral collapses to
        # <w_effective, (rows - baseline)> per token, exactly
        cfg, params = setup_encoder(seed=11, activation="identity")
        ids = np.array([CLS_ID, 4, 6, 9, SEP_ID], dtype=np.int64)
        direction = np.random.default_rng(3).normal(size=cfg.penult_dim)

        def value_and_grad(rows):
            emb, trace = encode_from_rows(params, cfg, ids, rows)
            grad_rows = backward_from_trace(trace, params, cfg, direction)[0]
            return float(direction @ emb), grad_rows

        rows = params.token_embeddings[ids]
        baseline = rows.copy()
        base_row = params.token_embeddings[PAD_ID]
        for i, tid in enumerate(ids):
            if tid not in (CLS_ID, SEP_ID):
                baseline[i] = base_row

        importances, _ = path_integrate(value_and_grad, rows, baseline,
                                        steps=50)

        w_eff = params.hidden_weight @ (params.penult_weight @ direction)
        n = float(len(ids))
        expected = ((rows - baseline) @ w_eff) / n
        np.testing.assert_allclose(importances, expected, rtol=0, atol=1e-9)

        # completeness is exact in the linear case
        v_in = value_and_grad(rows)[0]
        v_base = value_and_grad(baseline)[0]
        assert importances.sum() == pytest.approx(v_in - v_base, abs=1e-9)


class TestAttributeBatch:
    def build_world(self, num_speakers=3, utts_per_speaker=5):
        cfg, params = setup_encoder(seed=20, vocab_size=30)
        vocab = Vocab(tokens=["[PAD]", "[UNK]", "[CLS]", "[SEP]"] +
                      [f"w{i}" for i in range(26)])
        utts, enrollments, thresholds = [], [], {}
        rng = np.random.default_rng(0)
        for s in range(num_speakers):
            spk = f"spk{s}"
            for i in range(utts_per_speaker):
                words = " ".join(f"w{rng.integers(26)}" for _ in range(6))
                utts.append(Utterance(utt_id=f"{spk}-u{i}", speaker_id=spk,
                                      session_id="x", sex="F", text=words))
            enr_emb, _ = encode(params, cfg, [CLS_ID, 4 + s, SEP_ID])
            enrollments.append(EnrollmentModel(speaker_id=spk, sex="F",
                                               vector=enr_emb,
                                               num_utterances=1))
            thresholds[spk] = 0.1 * s
        return cfg, params, vocab, utts, enrollments, thresholds

    def test_fifteen_reports(self):
        cfg, params, vocab, utts, enrollments, thresholds = self.build_world()
        reports = attribute_batch(utts, enrollments, thresholds, params, cfg,
                                  vocab)
        assert len(reports) == 15
        keys = [(r.enroll_speaker_id, r.utt_id) for r in reports]
        assert keys == sorted(keys)

    def test_empty_input(self):
        cfg, params, vocab, _, enrollments, thresholds = self.build_world()
        assert attribute_batch([], enrollments, thresholds, params, cfg,
                               vocab) == []

    def test_deterministic(self):
        cfg, params, vocab, utts, enrollments, thresholds = self.build_world()
        a = attribute_batch(utts, enrollments, thresholds, params, cfg, vocab)
        b = attribute_batch(utts, enrollments, thresholds, params, cfg, vocab)
        assert a == b

    def test_missing_threshold(self):
        cfg, params, vocab, utts, enrollments, thresholds = self.build_world()
        del thresholds["spk1"]
        with pytest.raises(errors.MissingThreshold) as exc:
            attribute_batch(utts, enrollments, thresholds, params, cfg, vocab)
        assert exc.value.speaker_id == "spk1"
