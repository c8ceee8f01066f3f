"""Analysis artifacts: score histograms, per-speaker EER radar data, and
word-importance renderings. Everything is emitted as data (JSON/CSV) or
simple HTML/markdown; plotting is left to external tools."""

import html
import json
import math

import numpy as np

from .attrib import AttributionReport, TokenAttribution


def score_histograms(trial_scores, bin_width=0.05):
    """Per enrollment speaker, positive and negative score counts over
    fixed-width bins spanning [-1, 1]. Scores at the upper edge land in
    the last bin."""
    if not 0.0 < bin_width <= 2.0:
        raise ValueError("bin_width must be in (0, 2]")
    n_bins = math.ceil(2.0 / bin_width)
    edges = [-1.0 + i * bin_width for i in range(n_bins)] + [1.0]
    speakers = {}
    for s in trial_scores:
        series = speakers.setdefault(
            s.enroll_speaker_id,
            {"positive": [0] * n_bins, "negative": [0] * n_bins})
        idx = min(int((s.score - (-1.0)) // bin_width), n_bins - 1)
        idx = max(idx, 0)
        series[s.label][idx] += 1
    return {"bin_width": bin_width, "num_bins": n_bins, "edges": edges,
            "speakers": {k: speakers[k] for k in sorted(speakers)}}


def radar_data(series_by_system):
    """Spokes are the union of enrollment speaker ids (sorted); each
    system contributes one EER value per spoke (None when missing)."""
    spokes = sorted({spk for eers in series_by_system.values()
                     for spk in eers})
    series = []
    for name in sorted(series_by_system):
        eers = series_by_system[name]
        series.append({"name": name,
                       "eer_percent": [eers.get(spk) for spk in spokes]})
    return {"spokes": spokes, "series": series}


def save_json(obj, path):
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        json.dump(obj, handle, indent=2, sort_keys=True)
        handle.write("\n")


def load_json(path):
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


def save_attribution_reports(reports, path):
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for r in reports:
            obj = {
                "utt_id": r.utt_id,
                "enroll_speaker_id": r.enroll_speaker_id,
                "true_label": r.true_label,
                "decision": r.decision,
                "raw_score": r.raw_score,
                "threshold": r.threshold,
                "margin_to_threshold": r.margin_to_threshold,
                "attribution_score": r.attribution_score,
                "completeness_residual": r.completeness_residual,
                "tokens": [{"token": t.token, "importance": t.importance}
                           for t in r.tokens],
            }
            handle.write(json.dumps(obj, sort_keys=True) + "\n")


def load_attribution_reports(path):
    reports = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            obj = json.loads(line)
            reports.append(AttributionReport(
                utt_id=obj["utt_id"],
                enroll_speaker_id=obj["enroll_speaker_id"],
                true_label=obj["true_label"],
                decision=obj["decision"],
                raw_score=obj["raw_score"],
                threshold=obj["threshold"],
                margin_to_threshold=obj["margin_to_threshold"],
                tokens=[TokenAttribution(t["token"], t["importance"])
                        for t in obj["tokens"]],
                attribution_score=obj["attribution_score"],
                completeness_residual=obj["completeness_residual"]))
    return reports


def _intensity(importance, peak):
    return abs(importance) / peak if peak > 0.0 else 0.0


def _html_token(attr, peak):
    alpha = _intensity(attr.importance, peak)
    if alpha == 0.0:
        return html.escape(attr.token)
    color = "0,160,0" if attr.importance > 0 else "200,0,0"
    return (f'<span style="background-color: rgba({color},{alpha:.3f})" '
            f'title="{attr.importance:+.4f}">{html.escape(attr.token)}</span>')


def render_word_importance(reports, format="html"):
    """Token sequences with signed importance mapped to green/red
    intensity, normalized per report by its max |importance|."""
    if format not in ("html", "markdown"):
        raise ValueError(f"unknown format {format!r}")
    ordered = sorted(reports, key=lambda r: (r.enroll_speaker_id, r.utt_id))

    if format == "markdown":
        lines = ["# Word importance", ""]
        for r in ordered:
            peak = max((abs(t.importance) for t in r.tokens), default=0.0)
            lines.append(f"## {r.enroll_speaker_id} / {r.utt_id}")
            lines.append(f"- decision: **{r.decision}** "
                         f"(true label {r.true_label})")
            lines.append(f"- raw score {r.raw_score:.4f}, threshold "
                         f"{r.threshold:.4f}, attribution score "
                         f"{r.attribution_score:.4f}")
            cells = " ".join(
                f"`{t.token}`({t.importance / peak:+.2f})" if peak > 0.0
                else f"`{t.token}`"
                for t in r.tokens)
            lines.append("")
            lines.append(cells)
            lines.append("")
        return "\n".join(lines)

    body = ["<!DOCTYPE html>", "<html><head><meta charset='utf-8'>",
            "<title>Word importance</title></head>",
            "<body style='font-family: sans-serif'>",
            "<h1>Word importance</h1>"]
    for r in ordered:
        peak = max((abs(t.importance) for t in r.tokens), default=0.0)
        body.append("<section>")
        body.append(f"<h2>{html.escape(r.enroll_speaker_id)} / "
                    f"{html.escape(r.utt_id)}</h2>")
        body.append(f"<p>decision <b>{r.decision}</b> (true label "
                    f"{r.true_label}); raw score {r.raw_score:.4f}; "
                    f"threshold {r.threshold:.4f}; margin "
                    f"{r.margin_to_threshold:+.4f}; attribution score "
                    f"{r.attribution_score:.4f}</p>")
        tokens = " ".join(_html_token(t, peak) for t in r.tokens)
        body.append(f"<p>{tokens}</p>")
        body.append("</section>")
    body.append("</body></html>")
    return "\n".join(body)
