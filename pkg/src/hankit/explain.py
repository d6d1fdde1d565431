"""Attention-based explanations.

The last layer's attention weights rank a user's tweets and concept
mappings by how much they drove the prediction; the full per-layer traces
are also exported for heat-map style inspection. Emission is plain text,
JSON lines, or a flat CSV; rendering figures from these is the CLI's job,
this module stays read-only and plotting-free.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .classifier import HanModel, predict_record
from .data import UserRecord
from .encoder import AttentionTrace
from .errors import HankitError

REPORT_FORMATS = ("text", "json-lines", "heat-csv")

LABEL_NAMES = {0: "control", 1: "depressed"}


class ReportError(HankitError):
    pass


@dataclass
class RankedItem:
    rank: int
    index: int
    weight: float
    text: str


@dataclass
class ExplanationReport:
    user_id: str
    probs: np.ndarray
    label: int
    tweets: list[RankedItem]
    mcms: list[RankedItem]
    tweet_trace: AttentionTrace
    mcm_trace: AttentionTrace | None


def attention_trace(model: HanModel, record: UserRecord) -> tuple[AttentionTrace, AttentionTrace | None]:
    """Inference-mode traces for one user; the placeholder branch reports None."""
    _, tweet_trace, mcm_trace = predict_record(model, record)
    if not record.mcms:
        mcm_trace = None
    return tweet_trace, mcm_trace


def top_k(trace: AttentionTrace, items: list[str], k: int) -> list[RankedItem]:
    """Top unmasked items by last-layer weight; ties keep the lower index."""
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    last = trace.weights[-1]
    order = sorted(
        (i for i in range(len(last)) if trace.mask[i]),
        key=lambda i: (-last[i], i),
    )
    return [
        RankedItem(rank=r + 1, index=i, weight=float(last[i]), text=items[i] if i < len(items) else "")
        for r, i in enumerate(order[:k])
    ]


def build_report(model: HanModel, record: UserRecord, k: int = 5) -> ExplanationReport:
    pred, tweet_trace, mcm_trace = predict_record(model, record)
    if not record.mcms:
        mcm_trace = None
    return ExplanationReport(
        user_id=record.user_id,
        probs=pred.probs,
        label=pred.label,
        tweets=top_k(tweet_trace, record.tweets, k),
        mcms=top_k(mcm_trace, record.mcms, k) if mcm_trace is not None else [],
        tweet_trace=tweet_trace,
        mcm_trace=mcm_trace,
    )


def render_text(report: ExplanationReport) -> str:
    """Two ranked columns, most attended first; a missing mapping cell reads "none"."""
    lines = [
        f"user {report.user_id}",
        f"predicted {LABEL_NAMES[report.label]}"
        f" (p_control={report.probs[0]:.4f}, p_depressed={report.probs[1]:.4f})",
        "rank | tweet | concept mapping",
    ]
    for r in range(max(len(report.tweets), len(report.mcms), 1)):
        tweet = report.tweets[r].text if r < len(report.tweets) else ""
        mcm = report.mcms[r].text if r < len(report.mcms) else "none"
        lines.append(f"{r + 1}. {tweet} | {mcm}")
    return "\n".join(lines) + "\n"


def render_json_lines(report: ExplanationReport) -> str:
    doc = {
        "user_id": report.user_id,
        "probs": [float(p) for p in report.probs],
        "label": report.label,
        "tweets": [
            {"rank": it.rank, "index": it.index, "weight": it.weight, "text": it.text}
            for it in report.tweets
        ],
        "mcms": [
            {"rank": it.rank, "index": it.index, "weight": it.weight, "text": it.text}
            for it in report.mcms
        ],
    }
    return json.dumps(doc, separators=(",", ":")) + "\n"


def render_heat_csv(report: ExplanationReport) -> str:
    """Flat rows (branch, layer, item index, weight); weights round-trip exactly."""
    lines = ["branch,layer,index,weight"]
    branches = [report.tweet_trace]
    if report.mcm_trace is not None:
        branches.append(report.mcm_trace)
    for trace in branches:
        for layer, weights in enumerate(trace.weights):
            for index, weight in enumerate(weights):
                lines.append(f"{trace.branch},{layer},{index},{float(weight)!r}")
    return "\n".join(lines) + "\n"


def parse_heat_csv(text: str) -> dict[str, list[np.ndarray]]:
    """Rebuild {branch: [per-layer weight arrays]} from render_heat_csv output."""
    per_branch: dict[str, dict[int, dict[int, float]]] = {}
    lines = text.strip().splitlines()
    if not lines or lines[0] != "branch,layer,index,weight":
        raise ReportError("missing heat-csv header")
    for line in lines[1:]:
        branch, layer, index, weight = line.split(",")
        per_branch.setdefault(branch, {}).setdefault(int(layer), {})[int(index)] = float(weight)
    out: dict[str, list[np.ndarray]] = {}
    for branch, layers in per_branch.items():
        out[branch] = [
            np.array([cells[i] for i in sorted(cells)])
            for _, cells in sorted(layers.items())
        ]
    return out


_RENDERERS = {
    "text": render_text,
    "json-lines": render_json_lines,
    "heat-csv": render_heat_csv,
}


def emit_report(report: ExplanationReport, fmt: str, path) -> None:
    """Render and write; unknown formats and unwritable paths raise."""
    if fmt not in _RENDERERS:
        raise ReportError(f"unknown report format {fmt!r}; expected one of {', '.join(REPORT_FORMATS)}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_RENDERERS[fmt](report))
