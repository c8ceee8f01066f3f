import json
import os

import pytest

from textasv.cli import main


def run(args):
    return main(args)


@pytest.fixture(scope="module")
def stage_dir(tmp_path_factory):
    """A tiny end-to-end run through the individual subcommands."""
    root = tmp_path_factory.mktemp("cli")
    corpus = root / "corpus.ndjson"
    enroll_corpus = root / "enroll.ndjson"
    trial_corpus = root / "trial.ndjson"
    synth_args = ["--num-speakers", "6", "--utts-per-speaker", "12",
                  "--keywords-per-speaker", "4", "--shared-vocab-size", "80",
                  "--topical-rate", "0.5", "--seed", "11"]
    assert run(["synth", "--out", str(corpus)] + synth_args) == 0
    assert run(["synth", "--out", str(enroll_corpus), "--role", "enroll",
                "--utts-per-speaker", "4"] + synth_args[:2] +
               synth_args[4:]) == 0
    assert run(["synth", "--out", str(trial_corpus), "--role", "trial",
                "--utts-per-speaker", "4"] + synth_args[:2] +
               synth_args[4:]) == 0

    split = root / "split.json"
    vocab = root / "vocab.ndjson"
    assert run(["split", "--corpus", str(corpus), "--fraction", "0.2",
                "--seed", "3", "--out", str(split)]) == 0
    assert run(["vocab", "--corpus", str(corpus), "--split", str(split),
                "--max-size", "500", "--out", str(vocab)]) == 0

    train_dir = root / "train"
    assert run(["train", "--corpus", str(corpus), "--split", str(split),
                "--vocab", str(vocab), "--out", str(train_dir),
                "--epochs", "4", "--batch-size", "8", "--base-lr", "0.005",
                "--embed-dim", "16", "--hidden-dim", "16",
                "--penult-dim", "24"]) == 0

    ckpt = train_dir / "best.ckpt"
    emb_enroll = root / "emb_enroll.ndjson"
    emb_trial = root / "emb_trial.ndjson"
    assert run(["embed", "--corpus", str(enroll_corpus), "--checkpoint",
                str(ckpt), "--vocab", str(vocab), "--out",
                str(emb_enroll)]) == 0
    assert run(["embed", "--corpus", str(trial_corpus), "--checkpoint",
                str(ckpt), "--vocab", str(vocab), "--out",
                str(emb_trial)]) == 0

    enrollments = root / "enrollments.ndjson"
    scores = root / "scores.csv"
    assert run(["enroll", "--embeddings", str(emb_enroll),
                "--normalize-enrollment", "on", "--out",
                str(enrollments)]) == 0
    assert run(["trial", "--enrollments", str(enrollments), "--trials",
                str(emb_trial), "--out", str(scores)]) == 0

    eval_dir = root / "eval"
    assert run(["eval", "--enroll", str(emb_enroll), "--trials",
                str(emb_trial), "--normalize-enrollment", "on", "--out",
                str(eval_dir)]) == 0

    attributions = root / "attributions.ndjson"
    assert run(["attribute", "--corpus", str(trial_corpus), "--checkpoint",
                str(ckpt), "--vocab", str(vocab), "--enrollments",
                str(enrollments), "--eer", str(eval_dir / "speaker_eer.csv"),
                "--num-speakers", "2", "--utts-per-speaker", "2",
                "--out", str(attributions)]) == 0

    report_dir = root / "report"
    assert run(["report", "--scores", str(scores), "--eer",
                str(eval_dir / "speaker_eer.csv"), "--attributions",
                str(attributions), "--out", str(report_dir)]) == 0
    return root


class TestStagedPipeline:
    def test_artifacts_exist(self, stage_dir):
        for name in ("train/trainlog.csv", "train/best.ckpt",
                     "eval/summary.json", "eval/speaker_eer.csv",
                     "eval/scores.csv", "report/hist.json",
                     "report/radar.json", "report/attributions.html"):
            assert (stage_dir / name).exists(), name

    def test_summary_shape(self, stage_dir):
        summary = json.loads((stage_dir / "eval" / "summary.json").read_text())
        assert summary["normalize_enrollment"] is True
        assert set(summary["mean_clipped_eer"]) == {"F", "M"}
        assert len(summary["speakers"]) == 6
        for spk in summary["speakers"]:
            assert 0.0 <= spk["clipped_eer_percent"] <= 50.0

    def test_attribution_count(self, stage_dir):
        lines = (stage_dir / "attributions.ndjson").read_text().strip()
        assert len(lines.splitlines()) == 4  # 2 speakers x 2 utterances


class TestEvalOnScoresFixture:
    def test_eight_score_fixture(self, tmp_path):
        scores = tmp_path / "scores.csv"
        rows = ["enroll_speaker,trial_utt,trial_speaker,label,score"]
        for i, s in enumerate([0.9, 0.8, 0.7, 0.3]):
            rows.append(f"spk,u{i},spk,positive,{s}")
        for i, s in enumerate([0.5, 0.2, 0.1, 0.05]):
            rows.append(f"spk,v{i},imp,negative,{s}")
        scores.write_text("\n".join(rows) + "\n")
        out = tmp_path / "out"
        assert run(["eval", "--scores", str(scores), "--out", str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["speakers"][0]["eer_percent"] == 25.0

    def test_ablation_flag_recorded(self, tmp_path):
        scores = tmp_path / "scores.csv"
        scores.write_text(
            "enroll_speaker,trial_utt,trial_speaker,label,score\n"
            "a,u1,a,positive,0.9\na,u2,b,negative,0.1\n")
        for flag in ("on", "off"):
            out = tmp_path / f"out_{flag}"
            assert run(["eval", "--scores", str(scores),
                        "--normalize-enrollment", flag,
                        "--out", str(out)]) == 0
            summary = json.loads((out / "summary.json").read_text())
            assert summary["normalize_enrollment"] is (flag == "on")


class TestExitCodes:
    def test_unknown_subcommand(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run(["frobnicate"])
        assert exc.value.code == 1
        assert "usage" in capsys.readouterr().err

    def test_usage_error_missing_required(self):
        with pytest.raises(SystemExit) as exc:
            run(["split", "--corpus", "x.ndjson"])  # missing --out
        assert exc.value.code == 1

    def test_data_error_exit_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.ndjson"
        bad.write_text('{"utt_id": "a"}\n')
        assert run(["ingest", "--corpus", str(bad)]) == 2
        assert "error" in capsys.readouterr().err

    def test_duplicate_ids_exit_2(self, tmp_path):
        bad = tmp_path / "dup.ndjson"
        rec = json.dumps({"utt_id": "a", "speaker_id": "s",
                          "session_id": "x", "sex": "F", "text": "hi"})
        bad.write_text(rec + "\n" + rec + "\n")
        assert run(["ingest", "--corpus", str(bad)]) == 2

    def test_missing_file_exit_2(self):
        assert run(["ingest", "--corpus", "/nonexistent/nope.ndjson"]) == 2

    def test_eval_without_inputs_exit_1(self, tmp_path):
        assert run(["eval", "--out", str(tmp_path / "x")]) == 1

    def test_ingest_ok_exit_0(self, tmp_path, capsys):
        good = tmp_path / "ok.ndjson"
        good.write_text(json.dumps({"utt_id": "a", "speaker_id": "s",
                                    "session_id": "x", "sex": "F",
                                    "text": "hi"}) + "\n")
        assert run(["ingest", "--corpus", str(good)]) == 0
        assert "ok: 1 utterances" in capsys.readouterr().out


class TestPipelineCommand:
    def test_small_pipeline_with_config(self, tmp_path):
        config = {
            "synthetic": {"num_speakers": 6, "utterances_per_speaker": 12,
                          "topic_keywords_per_speaker": 4,
                          "shared_vocab_size": 80, "topical_word_rate": 0.5,
                          "seed": 13, "eval_utterances_per_speaker": 4},
            "split": {"validation_fraction": 0.2, "seed": 3},
            "vocab": {"max_size": 500},
            "encoder": {"embed_dim": 16, "hidden_dim": 16, "penult_dim": 24,
                        "dropout_p": 0.1, "max_seq_len": 32},
            "train": {"epochs": 4, "batch_size": 8, "base_lr": 5e-3},
            "attribution": {"steps": 25, "baseline": "pad_embedding",
                            "num_speakers": 2, "utterances_per_speaker": 2,
                            "selection_seed": 1},
        }
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps(config))
        out = tmp_path / "out"
        assert run(["pipeline", "--config", str(config_path), "--out",
                    str(out)]) == 0
        for name in ("summary.json", "speaker_eer.csv", "scores.csv",
                     "hist.json", "radar.json", "attributions.ndjson",
                     "attributions.html", "split.json", "vocab.ndjson",
                     "trainlog.csv", "best.ckpt"):
            assert (out / name).exists(), name
        summary = json.loads((out / "summary.json").read_text())
        assert 0.0 <= summary["mean_clipped_eer_overall"] <= 50.0
