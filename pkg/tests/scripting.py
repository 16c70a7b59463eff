"""Builders for scripted-provider fixtures shared by the tests."""
from __future__ import annotations

from anchorwork.provider import ScriptEntry, ScriptedProvider

ANSWER = "<answer>\\boxed{42}</answer>"
FRAME = "Wait a minute, by searching information about {rag_query}, I found that {rag_result}. "

REASONING = (
    "We need the expected heterozygosity under the infinite sites model. "
    "The Watterson estimator relates segregating sites to theta, and theta equals four times "
    "the effective population size times the mutation rate. "
)

CORPUS = [
    {"id": "d1", "title": "Watterson", "body": "watterson estimator theta four"},
    {"id": "d2", "title": "Population", "body": "effective population size"},
    {"id": "d3", "title": "Cooking", "body": "unrelated cooking text"},
]


def entry(role, key, response="", **kw):
    return ScriptEntry(role, key, response, **kw)


def base_entries(scores=(4, 4, 4), ranker="0"):
    """Every role answers through a wildcard; everything passes quality round 0."""
    return [
        entry("proposer", "*", REASONING + ANSWER, tokens_out=60),
        entry("corrector", "*", "Checked. " + REASONING + ANSWER, tokens_out=62),
        entry("refiner", "*", "Refined. " + REASONING + ANSWER, tokens_out=63),
        entry("evaluator", "*", '{"quality_scores": [%s, %s, %s], "suggestion": ""}' % scores, tokens_out=20),
        entry("ranker", "*", ranker, tokens_out=1),
        entry("monitor", "*", "no", tokens_out=1),
        entry("querier", "*", "Watterson estimator", tokens_out=4),
        entry("injector", "*", FRAME, tokens_out=40),
    ]


def golden_entries():
    """K=5, slot 2 fails quality once, slots 1 and 3 trigger the monitor once each."""
    entries = base_entries()
    for slot in (1, 3):
        entries.append(
            entry("proposer", f"c{slot}/propose", segments=(REASONING, "So the answer follows. " + ANSWER), tokens_out=50)
        )
        entries.append(entry("monitor", f"c{slot}/propose/w0", "yes", tokens_out=1))
    entries.append(
        entry("evaluator", "c2/eval0", '{"quality_scores": [2, 2, 2], "suggestion": "state the formula"}', tokens_out=20)
    )
    return entries


def provider(entries) -> ScriptedProvider:
    return ScriptedProvider(entries)


def all_pass_entries():
    """Same as the base script: no monitor trigger, every candidate passes round 0."""
    return base_entries()
