"""Synthesize a dialogue corpus, then score responses with the text metrics.

The corpus uses the offline stub generator (deterministic under a seed) with
the standard voice policy: a fresh prompt-voice id per dialogue, one response
voice across the corpus.  The evaluation half computes word error rate and
answer-containment accuracy, and folds a latency breakdown into one report.
"""

import collections

import numpy as np

from streamvox.datagen import generate_corpus, sample_turn_count, turn_count_pmf
from streamvox.evalkit import aggregate_report, spokenqa_accuracy, wer
from streamvox.pipeline import first_chunk_latency, scale_timings
from streamvox.schedule import SchedulePolicy

# -- corpus ------------------------------------------------------------------
corpus = generate_corpus(count=200, seed=7)
turns = collections.Counter(len(d.turns) for d in corpus)
print(f"{len(corpus)} dialogues; turn counts: {dict(sorted(turns.items()))}")
print(f"distinct prompt voices:  {len({d.voice_prompt_id for d in corpus})}")
print(f"distinct response voices: {len({d.response_voice_id for d in corpus})}")

first = corpus[0]
print(f"\nfirst dialogue ({first.id}, prompt voice {first.voice_prompt_id}):")
for i, (instruction, response) in enumerate(first.turns, start=1):
    print(f"  turn {i}: {instruction}")
    print(f"          {response}")

# The sampler follows Poisson(2) clipped to 1..5; compare a quick empirical
# histogram against the analytic distribution.
rng = np.random.default_rng(0)
draws = collections.Counter(sample_turn_count(rng) for _ in range(10_000))
print("\nturn-count sampler vs analytic pmf:")
for k, p in turn_count_pmf().items():
    print(f"  {k}: empirical {draws[k] / 10_000:.4f}   analytic {p:.4f}")

# -- evaluation --------------------------------------------------------------
# Pretend transcripts: the 'speech side' dropped or mangled the occasional word.
pairs = [
    ("let's start with the basics", "let's start with the basics"),
    ("here is the next step in more detail", "here is the next step in detail"),
    ("building on turn two", "building on turn 2"),
]
print("\nper-item word error rate:")
for reference, hypothesis in pairs:
    print(f"  {wer(reference, hypothesis):.3f}  {reference!r} vs {hypothesis!r}")

qa_items = [
    ("the capital of france is paris", ["Paris"]),
    ("it rains a lot there", ["Rome"]),
    ("roughly 42 percent", ["42", "forty two"]),
]
print(f"answer containment accuracy: {spokenqa_accuracy(qa_items):.3f}")

breakdown = first_chunk_latency(scale_timings("7b"), SchedulePolicy(3, 10))
report = aggregate_report(
    wer_items=pairs,
    qa_items=qa_items,
    latency_breakdowns=[breakdown.to_record()],
    judge_scores=[4.2, 3.9, 4.5],  # opaque externally produced numbers
)
print("\naggregate report:")
for key, value in sorted(report.to_record().items()):
    if key not in ("schema", "latency", "per_item_wer"):
        print(f"  {key}: {value}")
print(f"  first-chunk latency pass-through: {report.latency[0]['total_ms']:.2f} ms")
