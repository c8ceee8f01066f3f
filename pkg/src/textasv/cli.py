"""Command-line driver.

Subcommands cover each pipeline stage plus an end-to-end `pipeline`
runner driven by a single JSON config. Exit codes: 0 success, 1 usage
error, 2 data error, 3 numeric failure.
"""

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import asv, reports
from .aam import AAMConfig
from .attrib import AttributionConfig, attribute_batch
from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import SplitResult, load_corpus, save_corpus, split_spk_diverse_sess
from .encoder import EncoderConfig, Vocab, build_vocab, embed_corpus
from .errors import TextAsvError
from .synth import SyntheticCorpusSpec, generate_synthetic_corpus
from .trainer import TrainConfig, select_checkpoint, train


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; this toolkit reserves 2 for data errors
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _onoff(value):
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return value == "on"


def _load_corpus_arg(args):
    return load_corpus(args.corpus, args.format)


def _add_corpus_args(sub):
    sub.add_argument("--corpus", required=True)
    sub.add_argument("--format", choices=("ndjson", "tsv"), default="ndjson")


# ---------------------------------------------------------------------------
# subcommands

def cmd_ingest(args):
    corp = _load_corpus_arg(args)
    if args.out:
        save_corpus(corp, args.out)
    print(f"ok: {len(corp)} utterances, {len(corp.speaker_ids())} speakers")
    return 0


def cmd_split(args):
    corp = _load_corpus_arg(args)
    result = split_spk_diverse_sess(corp, args.fraction, seed=args.seed)
    with open(args.out, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(result.to_json() + "\n")
    print(f"ok: {len(result.train)} train / {len(result.validation)} validation")
    return 0


def _train_side(corpus, split_path):
    by_id = {u.utt_id: u for u in corpus}
    if split_path:
        with open(split_path, "r", encoding="utf-8") as handle:
            split = SplitResult.from_json(handle.read())
        return [by_id[i] for i in split.train], split
    return list(corpus), None


def cmd_vocab(args):
    corp = _load_corpus_arg(args)
    train_utts, _ = _train_side(corp, args.split)
    vocab = build_vocab(train_utts, max_size=args.max_size)
    vocab.save(args.out)
    print(f"ok: {len(vocab)} tokens")
    return 0


def _encoder_config_from_args(args, vocab_size):
    return EncoderConfig(
        vocab_size=vocab_size, embed_dim=args.embed_dim,
        hidden_dim=args.hidden_dim, penult_dim=args.penult_dim,
        dropout_p=args.dropout_p, max_seq_len=args.max_seq_len)


def _train_config_from_args(args):
    return TrainConfig(
        epochs=args.epochs, batch_size=args.batch_size, base_lr=args.base_lr,
        warmup_fraction=args.warmup_fraction, weight_decay=args.weight_decay,
        beta1=args.beta1, beta2=args.beta2, eps=args.eps,
        shuffle_seed=args.shuffle_seed, dropout_seed=args.dropout_seed,
        init_seed=args.init_seed)


def cmd_train(args):
    corp = _load_corpus_arg(args)
    with open(args.split, "r", encoding="utf-8") as handle:
        split = SplitResult.from_json(handle.read())
    vocab = Vocab.load(args.vocab)
    encoder_config = _encoder_config_from_args(args, len(vocab))
    train_config = _train_config_from_args(args)
    aam_config = AAMConfig(margin=args.margin, scale=args.scale)

    os.makedirs(args.out, exist_ok=True)
    log, checkpoints = train(corp, split, vocab, encoder_config, train_config,
                             aam_config, out_dir=args.out)
    log.save_csv(os.path.join(args.out, "trainlog.csv"))
    best = select_checkpoint(log, checkpoints)
    speakers = sorted({u.speaker_id for u in corp
                       if u.utt_id in set(split.train)})
    best_path = os.path.join(args.out, "best.ckpt")
    save_checkpoint(best_path, best.params, best.classifier, encoder_config,
                    seed=train_config.init_seed, epoch=best.epoch,
                    class_speakers=speakers)
    for e in log.epochs:
        print(f"epoch {e.epoch}: train_loss {e.train_loss:.4f} "
              f"val_loss {e.val_loss:.4f} val_acc {e.val_acc:.4f}")
    print(f"ok: selected epoch {best.epoch} -> {best_path}")
    return 0


def cmd_embed(args):
    corp = _load_corpus_arg(args)
    params, _, config, _ = load_checkpoint(args.checkpoint)
    vocab = Vocab.load(args.vocab)
    records = embed_corpus(params, config, vocab, corp)
    asv.save_embeddings(records, args.out)
    print(f"ok: {len(records)} embeddings")
    return 0


def _enroll_all(records, normalize):
    by_speaker = {}
    for rec in records:
        by_speaker.setdefault(rec.speaker_id, []).append(rec)
    return [asv.enroll(by_speaker[spk], normalize_utterances=normalize)
            for spk in sorted(by_speaker)]


def cmd_enroll(args):
    records = asv.load_embeddings(args.embeddings)
    models = _enroll_all(records, args.normalize_enrollment)
    asv.save_enrollments(models, args.out,
                         normalize_enrollment=args.normalize_enrollment)
    print(f"ok: {len(models)} speakers enrolled")
    return 0


def cmd_trial(args):
    enrollments = asv.load_enrollments(args.enrollments)
    records = asv.load_embeddings(args.trials)
    scores = asv.make_trials(enrollments, records,
                             same_sex_only=args.same_sex_only)
    asv.save_scores_csv(scores, args.out)
    print(f"ok: {len(scores)} trials")
    return 0


def _write_eval_outputs(summary, scores, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    if scores is not None:
        asv.save_scores_csv(scores, os.path.join(out_dir, "scores.csv"))
    asv.save_speaker_eers_csv(summary, os.path.join(out_dir, "speaker_eer.csv"))
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8",
              newline="\n") as handle:
        handle.write(asv.summary_to_json(summary))


def cmd_eval(args):
    if args.scores:
        scores = asv.load_scores_csv(args.scores)
        sex_of = {}
        if args.enrollments:
            sex_of = {e.speaker_id: e.sex
                      for e in asv.load_enrollments(args.enrollments)}
        eers = asv.eers_by_speaker(scores)
        summary = asv.summarize(eers, sex_of,
                                normalize_enrollment=args.normalize_enrollment)
        _write_eval_outputs(summary, None, args.out)
    else:
        if not (args.enroll and args.trials):
            print("error: eval needs either --scores or both --enroll and "
                  "--trials", file=sys.stderr)
            return 1
        enroll_records = asv.load_embeddings(args.enroll)
        trial_records = asv.load_embeddings(args.trials)
        models = _enroll_all(enroll_records, args.normalize_enrollment)
        scores = asv.make_trials(models, trial_records,
                                 same_sex_only=args.same_sex_only)
        eers = asv.eers_by_speaker(scores)
        sex_of = {m.speaker_id: m.sex for m in models}
        summary = asv.summarize(eers, sex_of,
                                normalize_enrollment=args.normalize_enrollment)
        _write_eval_outputs(summary, scores, args.out)
    for sex, mean in summary.mean_clipped_eer.items():
        print(f"mean clipped EER [{sex}]: {mean:.2f}%")
    print(f"mean clipped EER [overall]: {summary.mean_clipped_eer_overall:.2f}%")
    return 0


def _select_attribution_utterances(corpus, thresholds, num_speakers,
                                   utts_per_speaker, seed):
    rng = np.random.default_rng(seed)
    eligible = sorted({u.speaker_id for u in corpus} & set(thresholds))
    chosen = [eligible[i] for i in
              rng.permutation(len(eligible))[:num_speakers]]
    picked = []
    for spk in sorted(chosen):
        utts = [u for u in corpus if u.speaker_id == spk]
        idx = rng.permutation(len(utts))[:utts_per_speaker]
        picked.extend(utts[i] for i in sorted(idx))
    return picked


def cmd_attribute(args):
    corp = _load_corpus_arg(args)
    params, _, config, _ = load_checkpoint(args.checkpoint)
    vocab = Vocab.load(args.vocab)
    enrollments = asv.load_enrollments(args.enrollments)
    thresholds = asv.load_speaker_thresholds_csv(args.eer)
    attr_config = AttributionConfig(steps=args.steps, baseline=args.baseline)

    if args.speakers:
        wanted = set(args.speakers.split(","))
        utterances = [u for u in corp if u.speaker_id in wanted]
    else:
        utterances = _select_attribution_utterances(
            corp, thresholds, args.num_speakers, args.utts_per_speaker,
            args.selection_seed)
    reports_list = attribute_batch(utterances, enrollments, thresholds,
                                   params, config, vocab, attr_config)
    reports.save_attribution_reports(reports_list, args.out)
    print(f"ok: {len(reports_list)} attribution reports")
    return 0


def cmd_report(args):
    os.makedirs(args.out, exist_ok=True)
    if args.scores:
        scores = asv.load_scores_csv(args.scores)
        hist = reports.score_histograms(scores, bin_width=args.bin_width)
        reports.save_json(hist, os.path.join(args.out, "hist.json"))
    if args.eer:
        import csv
        with open(args.eer, "r", encoding="utf-8", newline="") as handle:
            eers = {row["speaker_id"]: float(row["eer_percent"])
                    for row in csv.DictReader(handle)}
        radar = reports.radar_data({args.series_name: eers})
        reports.save_json(radar, os.path.join(args.out, "radar.json"))
    if args.attributions:
        loaded = reports.load_attribution_reports(args.attributions)
        html_doc = reports.render_word_importance(loaded, format="html")
        with open(os.path.join(args.out, "attributions.html"), "w",
                  encoding="utf-8", newline="\n") as handle:
            handle.write(html_doc)
    print("ok: report artifacts written")
    return 0


def cmd_synth(args):
    spec = SyntheticCorpusSpec(
        num_speakers=args.num_speakers,
        utterances_per_speaker=args.utts_per_speaker,
        topic_keywords_per_speaker=args.keywords_per_speaker,
        shared_vocab_size=args.shared_vocab_size,
        topical_word_rate=args.topical_rate,
        seed=args.seed)
    topical, control = generate_synthetic_corpus(spec, role=args.role)
    save_corpus(topical, args.out)
    if args.control_out:
        save_corpus(control, args.control_out)
    print(f"ok: {len(topical)} utterances per corpus")
    return 0


# ---------------------------------------------------------------------------
# pipeline

PIPELINE_DEFAULTS = {
    "variant": "topical",
    "synthetic": {
        "num_speakers": 20,
        "utterances_per_speaker": 40,
        "topic_keywords_per_speaker": 8,
        "shared_vocab_size": 500,
        "topical_word_rate": 0.3,
        "seed": 42,
        "eval_utterances_per_speaker": 10,
    },
    "split": {"validation_fraction": 0.1, "seed": 7},
    "vocab": {"max_size": 2000},
    "encoder": {"embed_dim": 64, "hidden_dim": 64, "penult_dim": 192,
                "dropout_p": 0.1, "max_seq_len": 128},
    # desk-scale settings: small corpora need small batches and a higher
    # learning rate than the headline defaults to move at all
    "train": {"epochs": 12, "batch_size": 32, "base_lr": 5e-3,
              "warmup_fraction": 0.1, "weight_decay": 0.01,
              "beta1": 0.9, "beta2": 0.999, "eps": 1e-8,
              "shuffle_seed": 1, "dropout_seed": 2, "init_seed": 3},
    "aam": {"margin": 0.2, "scale": 30.0},
    "eval": {"normalize_enrollment": True, "same_sex_only": True},
    "attribution": {"steps": 50, "baseline": "pad_embedding",
                    "num_speakers": 3, "utterances_per_speaker": 5,
                    "selection_seed": 5},
    "report": {"bin_width": 0.05},
}


def _merged_config(path):
    config = json.loads(json.dumps(PIPELINE_DEFAULTS))  # deep copy
    if path:
        with open(path, "r", encoding="utf-8") as handle:
            user = json.load(handle)
        for key, value in user.items():
            if isinstance(value, dict) and isinstance(config.get(key), dict):
                config[key].update(value)
            else:
                config[key] = value
    return config


def _pipeline_corpora(config, out_dir):
    if "corpus" in config:
        paths = config["corpus"]
        fmt = paths.get("format", "ndjson")
        return (load_corpus(paths["train"], fmt),
                load_corpus(paths["enroll"], fmt),
                load_corpus(paths["trial"], fmt))
    syn = config["synthetic"]
    variant = config.get("variant", "topical")
    pick = 0 if variant == "topical" else 1
    spec = SyntheticCorpusSpec(
        num_speakers=syn["num_speakers"],
        utterances_per_speaker=syn["utterances_per_speaker"],
        topic_keywords_per_speaker=syn["topic_keywords_per_speaker"],
        shared_vocab_size=syn["shared_vocab_size"],
        topical_word_rate=syn["topical_word_rate"],
        seed=syn["seed"])
    eval_spec = dataclasses.replace(
        spec, utterances_per_speaker=syn["eval_utterances_per_speaker"])
    train_c = generate_synthetic_corpus(spec, role="train")[pick]
    enroll_c = generate_synthetic_corpus(eval_spec, role="enroll")[pick]
    trial_c = generate_synthetic_corpus(eval_spec, role="trial")[pick]
    save_corpus(train_c, os.path.join(out_dir, "train_corpus.ndjson"))
    save_corpus(enroll_c, os.path.join(out_dir, "enroll_corpus.ndjson"))
    save_corpus(trial_c, os.path.join(out_dir, "trial_corpus.ndjson"))
    return train_c, enroll_c, trial_c


def run_pipeline(config, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    train_c, enroll_c, trial_c = _pipeline_corpora(config, out_dir)

    split = split_spk_diverse_sess(train_c,
                                  config["split"]["validation_fraction"],
                                  seed=config["split"]["seed"])
    with open(os.path.join(out_dir, "split.json"), "w", encoding="utf-8",
              newline="\n") as handle:
        handle.write(split.to_json() + "\n")

    by_id = {u.utt_id: u for u in train_c}
    vocab = build_vocab([by_id[i] for i in split.train],
                        max_size=config["vocab"]["max_size"])
    vocab.save(os.path.join(out_dir, "vocab.ndjson"))

    encoder_config = EncoderConfig(vocab_size=len(vocab), **config["encoder"])
    train_config = TrainConfig(**config["train"])
    aam_config = AAMConfig(**config["aam"])

    ckpt_dir = os.path.join(out_dir, "checkpoints")
    log, checkpoints = train(train_c, split, vocab, encoder_config,
                             train_config, aam_config, out_dir=ckpt_dir)
    log.save_csv(os.path.join(out_dir, "trainlog.csv"))
    best = select_checkpoint(log, checkpoints)
    speakers = sorted({u.speaker_id for u in train_c
                       if u.utt_id in set(split.train)})
    best_path = os.path.join(out_dir, "best.ckpt")
    save_checkpoint(best_path, best.params, best.classifier, encoder_config,
                    seed=train_config.init_seed, epoch=best.epoch,
                    class_speakers=speakers)

    enroll_records = embed_corpus(best.params, encoder_config, vocab, enroll_c)
    trial_records = embed_corpus(best.params, encoder_config, vocab, trial_c)
    asv.save_embeddings(enroll_records,
                        os.path.join(out_dir, "enroll_embeddings.ndjson"))
    asv.save_embeddings(trial_records,
                        os.path.join(out_dir, "trial_embeddings.ndjson"))

    normalize = config["eval"]["normalize_enrollment"]
    models = _enroll_all(enroll_records, normalize)
    asv.save_enrollments(models, os.path.join(out_dir, "enrollments.ndjson"),
                         normalize_enrollment=normalize)
    scores = asv.make_trials(models, trial_records,
                             same_sex_only=config["eval"]["same_sex_only"])
    eers = asv.eers_by_speaker(scores)
    sex_of = {m.speaker_id: m.sex for m in models}
    summary = asv.summarize(eers, sex_of, normalize_enrollment=normalize)
    _write_eval_outputs(summary, scores, out_dir)

    hist = reports.score_histograms(scores,
                                    bin_width=config["report"]["bin_width"])
    reports.save_json(hist, os.path.join(out_dir, "hist.json"))
    radar = reports.radar_data(
        {"text_attack": {e.speaker_id: e.eer_percent for e in eers}})
    reports.save_json(radar, os.path.join(out_dir, "radar.json"))

    attr_cfg = config["attribution"]
    thresholds = {e.speaker_id: e.threshold for e in eers}
    utterances = _select_attribution_utterances(
        trial_c, thresholds, attr_cfg["num_speakers"],
        attr_cfg["utterances_per_speaker"], attr_cfg["selection_seed"])
    attr_reports = attribute_batch(
        utterances, models, thresholds, best.params, encoder_config, vocab,
        AttributionConfig(steps=attr_cfg["steps"],
                          baseline=attr_cfg["baseline"]))
    reports.save_attribution_reports(
        attr_reports, os.path.join(out_dir, "attributions.ndjson"))
    html_doc = reports.render_word_importance(attr_reports, format="html")
    with open(os.path.join(out_dir, "attributions.html"), "w",
              encoding="utf-8", newline="\n") as handle:
        handle.write(html_doc)

    return summary


def cmd_pipeline(args):
    config = _merged_config(args.config)
    if args.variant:
        config["variant"] = args.variant
    summary = run_pipeline(config, args.out)
    for sex, mean in summary.mean_clipped_eer.items():
        print(f"mean clipped EER [{sex}]: {mean:.2f}%")
    print(f"mean clipped EER [overall]: {summary.mean_clipped_eer_overall:.2f}%")
    return 0


# ---------------------------------------------------------------------------

def build_parser():
    parser = _Parser(prog="textasv",
                     description="Text-based speaker verification attack "
                                 "and privacy evaluation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a corpus file")
    _add_corpus_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("split", help="speaker/session-diverse split")
    _add_corpus_args(p)
    p.add_argument("--fraction", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("vocab", help="build the training vocabulary")
    _add_corpus_args(p)
    p.add_argument("--split")
    p.add_argument("--max-size", type=int, default=2000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_vocab)

    p = sub.add_parser("train", help="train the encoder and AAM head")
    _add_corpus_args(p)
    p.add_argument("--split", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--base-lr", type=float, default=1e-4)
    p.add_argument("--warmup-fraction", type=float, default=0.1)
    p.add_argument("--weight-decay", type=float, default=0.01)
    p.add_argument("--beta1", type=float, default=0.9)
    p.add_argument("--beta2", type=float, default=0.999)
    p.add_argument("--eps", type=float, default=1e-8)
    p.add_argument("--shuffle-seed", type=int, default=0)
    p.add_argument("--dropout-seed", type=int, default=1)
    p.add_argument("--init-seed", type=int, default=2)
    p.add_argument("--embed-dim", type=int, default=64)
    p.add_argument("--hidden-dim", type=int, default=64)
    p.add_argument("--penult-dim", type=int, default=192)
    p.add_argument("--dropout-p", type=float, default=0.1)
    p.add_argument("--max-seq-len", type=int, default=128)
    p.add_argument("--margin", type=float, default=0.2)
    p.add_argument("--scale", type=float, default=30.0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("embed", help="embed a corpus with a checkpoint")
    _add_corpus_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("enroll", help="build speaker enrollment models")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--normalize-enrollment", type=_onoff, default=True,
                   metavar="{on,off}")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_enroll)

    p = sub.add_parser("trial", help="score trials against enrollments")
    p.add_argument("--enrollments", required=True)
    p.add_argument("--trials", required=True)
    p.add_argument("--same-sex-only", type=_onoff, default=True,
                   metavar="{on,off}")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_trial)

    p = sub.add_parser("eval", help="per-speaker EERs and clipped summary")
    p.add_argument("--scores")
    p.add_argument("--enroll")
    p.add_argument("--trials")
    p.add_argument("--enrollments",
                   help="optional enrollment file for sex labels with --scores")
    p.add_argument("--normalize-enrollment", type=_onoff, default=True,
                   metavar="{on,off}")
    p.add_argument("--same-sex-only", type=_onoff, default=True,
                   metavar="{on,off}")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("attribute", help="integrated-gradients reports")
    _add_corpus_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--enrollments", required=True)
    p.add_argument("--eer", required=True,
                   help="speaker_eer.csv with per-speaker thresholds")
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--baseline", choices=("pad_embedding", "zero_embedding"),
                   default="pad_embedding")
    p.add_argument("--speakers", help="comma-separated speaker ids")
    p.add_argument("--num-speakers", type=int, default=3)
    p.add_argument("--utts-per-speaker", type=int, default=5)
    p.add_argument("--selection-seed", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_attribute)

    p = sub.add_parser("report", help="histograms, radar data, HTML rendering")
    p.add_argument("--scores")
    p.add_argument("--eer")
    p.add_argument("--attributions")
    p.add_argument("--bin-width", type=float, default=0.05)
    p.add_argument("--series-name", default="text_attack")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("synth", help="generate a synthetic topical corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--control-out")
    p.add_argument("--num-speakers", type=int, default=20)
    p.add_argument("--utts-per-speaker", type=int, default=40)
    p.add_argument("--keywords-per-speaker", type=int, default=8)
    p.add_argument("--shared-vocab-size", type=int, default=500)
    p.add_argument("--topical-rate", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--role", default="train",
                   choices=("train", "enroll", "trial"))
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pipeline", help="end-to-end run from a JSON config")
    p.add_argument("--config", help="JSON config; defaults used when omitted")
    p.add_argument("--variant", choices=("topical", "control"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TextAsvError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
