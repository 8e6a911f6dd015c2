"""Text-side evaluation: word error rate, answer-containment accuracy, reports.

Normalization is deliberately simple and applied identically to both sides of
every comparison: case-fold, replace punctuation with spaces, collapse
whitespace.  It is not a full English text normalizer; scores computed here
are consistent within this toolkit but not comparable to pipelines using a
richer normalizer.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Sequence

from . import records

_PUNCT = re.compile(r"[^\w\s]|_")


def normalize(text: str) -> list[str]:
    """Token list after case-folding, punctuation removal, and whitespace
    collapsing.  Idempotent: normalizing the rejoined tokens is a no-op."""
    return _PUNCT.sub(" ", text.casefold()).split()


def normalize_text(text: str) -> str:
    return " ".join(normalize(text))


def edit_distance(ref: Sequence[str], hyp: Sequence[str]) -> int:
    """Levenshtein distance over token sequences (unit costs)."""
    if len(ref) < len(hyp):
        ref, hyp = hyp, ref
    previous = list(range(len(hyp) + 1))
    for i, ref_tok in enumerate(ref, start=1):
        current = [i]
        for j, hyp_tok in enumerate(hyp, start=1):
            if ref_tok == hyp_tok:
                current.append(previous[j - 1])
            else:
                current.append(1 + min(previous[j - 1], previous[j], current[-1]))
        previous = current
    return previous[-1]


def wer(reference: str, hypothesis: str) -> float:
    """(substitutions + insertions + deletions) / reference length, on
    normalized tokens."""
    ref = normalize(reference)
    if not ref:
        raise ValueError("reference normalizes to zero tokens")
    return edit_distance(ref, normalize(hypothesis)) / len(ref)


def spokenqa_accuracy(items: Sequence[tuple[str, Sequence[str]]]) -> float:
    """Fraction of items whose normalized response contains any normalized
    reference answer as a substring."""
    if not items:
        raise ValueError("no items to score")
    hits = sum(1 for response, answers in items if _contains_answer(response, answers))
    return hits / len(items)


def _contains_answer(response: str, answers: Sequence[str]) -> bool:
    normalized = normalize_text(response)
    return any(normalize_text(answer) in normalized for answer in answers)


@dataclass
class MetricReport:
    """Aggregated evaluation results.  WER fields are None when no text pairs
    were scored; QA fields likewise.  Latency breakdown records and opaque
    externally produced scores pass through untouched."""

    per_item_wer: list[float] = field(default_factory=list)
    corpus_wer: float | None = None
    total_edit_distance: int | None = None
    total_reference_tokens: int | None = None
    qa_accuracy: float | None = None
    qa_items: int = 0
    wer_items: int = 0
    latency: list[dict] = field(default_factory=list)
    judge_score_mean: float | None = None
    mos_mean: float | None = None

    def to_record(self) -> dict:
        return {
            "schema": "metric-report/v1",
            "wer_items": self.wer_items,
            "per_item_wer": self.per_item_wer,
            "corpus_wer": self.corpus_wer,
            "total_edit_distance": self.total_edit_distance,
            "total_reference_tokens": self.total_reference_tokens,
            "qa_items": self.qa_items,
            "qa_accuracy": self.qa_accuracy,
            "latency": self.latency,
            "judge_score_mean": self.judge_score_mean,
            "mos_mean": self.mos_mean,
        }

    def to_rows(self) -> list[dict]:
        """Line-delimited export: one row per scored item plus a corpus row."""
        rows = [
            {"schema": "metric-report-row/v1", "kind": "item", "index": i, "wer": value}
            for i, value in enumerate(self.per_item_wer)
        ]
        corpus = dict(self.to_record())
        corpus["schema"] = "metric-report-row/v1"
        corpus["kind"] = "corpus"
        del corpus["per_item_wer"]
        rows.append(corpus)
        return rows


def aggregate_report(
    wer_items: Sequence[tuple[str, str]] = (),
    qa_items: Sequence[tuple[str, Sequence[str]]] = (),
    latency_breakdowns: Sequence[dict] = (),
    judge_scores: Sequence[float] = (),
    mos_scores: Sequence[float] = (),
) -> MetricReport:
    """Deterministic aggregation; corpus WER weights items by reference length.

    ``judge_scores`` and ``mos_scores`` are opaque per-item numbers produced
    by external models; they are averaged for reporting, never computed here.
    """
    report = MetricReport(latency=list(latency_breakdowns))
    if wer_items:
        distance_total = 0
        ref_total = 0
        for reference, hypothesis in wer_items:
            ref = normalize(reference)
            if not ref:
                raise ValueError("reference normalizes to zero tokens")
            distance = edit_distance(ref, normalize(hypothesis))
            report.per_item_wer.append(distance / len(ref))
            distance_total += distance
            ref_total += len(ref)
        report.wer_items = len(wer_items)
        report.total_edit_distance = distance_total
        report.total_reference_tokens = ref_total
        report.corpus_wer = distance_total / ref_total
    if qa_items:
        report.qa_items = len(qa_items)
        report.qa_accuracy = spokenqa_accuracy(qa_items)
    if judge_scores:
        report.judge_score_mean = sum(judge_scores) / len(judge_scores)
    if mos_scores:
        report.mos_mean = sum(mos_scores) / len(mos_scores)
    return report


# ---------------------------------------------------------------------------
# record-file front ends

# wer item:  {"schema": "wer-item/v1", "reference": ..., "hypothesis": ...}
# qa item:   {"schema": "qa-item/v1", "response": ..., "answers": [...],
#             optional "judge_score", "mos"}


def load_wer_items(path) -> list[tuple[str, str]]:
    rows = records.read_jsonl(path, schema="wer-item/v1")
    return [(r["reference"], r["hypothesis"]) for r in rows]


def load_qa_items(path) -> list[dict]:
    return records.read_jsonl(path, schema="qa-item/v1")


def report_from_files(
    wer_path=None, qa_path=None, latency_path=None
) -> MetricReport:
    wer_items = load_wer_items(wer_path) if wer_path else []
    qa_rows = load_qa_items(qa_path) if qa_path else []
    latency = records.read_jsonl(latency_path, schema="latency-breakdown/v1") if latency_path else []
    return aggregate_report(
        wer_items=wer_items,
        qa_items=[(r["response"], r["answers"]) for r in qa_rows],
        latency_breakdowns=latency,
        judge_scores=[r["judge_score"] for r in qa_rows if "judge_score" in r],
        mos_scores=[r["mos"] for r in qa_rows if "mos" in r],
    )
