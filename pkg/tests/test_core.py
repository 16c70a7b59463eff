"""Scoring arithmetic, thresholds, ledgers and config validation."""
from __future__ import annotations

from dataclasses import fields

import pytest
from hypothesis import given
from hypothesis import strategies as st

from anchorwork.core import (
    COUNTER_MAX,
    ZERO_LEDGER,
    Candidate,
    ConfigError,
    CostLedger,
    Mode,
    Problem,
    QualityReport,
    ScoreDomainError,
    Stage,
    WorkflowConfig,
    composite_score,
    merge_ledgers,
    passes_threshold,
)

scores = st.floats(min_value=0.0, max_value=5.0, allow_nan=False)
counts = st.integers(min_value=0, max_value=2**40)
ledgers = st.builds(CostLedger, *[counts for _ in fields(CostLedger)])


@pytest.mark.parametrize(
    "triple, expected",
    [((5, 5, 5), 5.0), ((0, 0, 0), 0.0), ((5, 2, 5), 3.2)],
)
def test_composite_examples(triple, expected):
    assert composite_score(*triple) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("bad", [-0.01, 5.01, float("nan"), float("inf")])
def test_composite_rejects_out_of_range(bad):
    with pytest.raises(ScoreDomainError):
        composite_score(bad, 1, 1)
    with pytest.raises(ScoreDomainError):
        composite_score(1, 1, bad)


@given(scores, scores, scores, st.floats(min_value=0.0, max_value=5.0))
def test_composite_is_monotone(l, a, e, bump):
    base = composite_score(l, a, e)
    assert composite_score(min(5.0, l + bump), a, e) >= base
    assert composite_score(l, min(5.0, a + bump), e) >= base
    assert composite_score(l, a, min(5.0, e + bump)) >= base


@given(scores, scores, scores)
def test_composite_permutation_sensitive(l, a, e):
    swapped = composite_score(a, l, e)
    if l == a:
        assert swapped == composite_score(l, a, e)
    elif abs(l - a) > 1e-6:
        assert swapped != pytest.approx(composite_score(l, a, e), abs=1e-9)


@pytest.mark.parametrize("composite, tau, expected", [(3.0, 3.0, True), (2.99, 3.0, False), (5.0, 3.0, True)])
def test_passes_threshold_examples(composite, tau, expected):
    assert passes_threshold(composite, tau) is expected


@given(scores, scores, scores, st.floats(min_value=0.0, max_value=5.0))
def test_report_passed_agrees_with_threshold(l, a, e, tau):
    r = QualityReport.build(l, a, e, tau=tau)
    assert r.passed == passes_threshold(r.composite, tau)
    assert abs(r.composite - (0.2 * l + 0.6 * a + 0.2 * e)) <= 1e-9


def test_ledger_examples():
    assert merge_ledgers(CostLedger(tokens_out=100), CostLedger(tokens_out=50)).tokens_out == 150
    a = CostLedger(1, 2, 3, 4, 5, 6, 7, 8)
    assert merge_ledgers(a, ZERO_LEDGER) == a
    assert a + ZERO_LEDGER == a


@given(ledgers, ledgers, ledgers)
def test_ledger_is_commutative_monoid(a, b, c):
    assert merge_ledgers(merge_ledgers(a, b), c) == merge_ledgers(a, merge_ledgers(b, c))
    assert merge_ledgers(a, b) == merge_ledgers(b, a)
    assert merge_ledgers(ZERO_LEDGER, a) == a
    # oracle: plain integer addition per field
    ab = merge_ledgers(a, b)
    for f in fields(CostLedger):
        assert getattr(ab, f.name) == getattr(a, f.name) + getattr(b, f.name)


def test_ledger_overflow_and_negative():
    big = CostLedger(tokens_in=COUNTER_MAX)
    with pytest.raises(OverflowError):
        merge_ledgers(big, CostLedger(tokens_in=1))
    with pytest.raises(ValueError):
        CostLedger(agent_steps=-1)


def test_ledger_round_trip():
    a = CostLedger(1, 2, 3, 4, 5, 6, 7, 8)
    assert CostLedger.from_dict(a.to_dict()) == a
    assert a.total_tokens == 3


def test_config_defaults_follow_hyperparameter_table():
    cfg = WorkflowConfig()
    assert (cfg.k_proposers, cfg.temperature, cfg.max_tokens) == (5, 0.5, 65536)
    assert (cfg.rag_chunk, cfg.rag_overlapping, cfg.query_top_k, cfg.max_rag) == (512, 128, 3, 2)
    assert cfg.tau == 3.0 and cfg.weights == (0.2, 0.6, 0.2)
    assert cfg.model_for("monitor") == "gpt-4.1-mini"
    assert cfg.model_for("proposer") == "deepseek-v3.1"
    assert WorkflowConfig(role_models={"querier": "small"}).model_for("querier") == "small"


@pytest.mark.parametrize(
    "changes, field_name",
    [
        ({"rag_overlapping": 512}, "rag_overlapping"),
        ({"rag_overlapping": 0}, "rag_overlapping"),
        ({"query_top_k": 0}, "query_top_k"),
        ({"max_rag": -1}, "max_rag"),
        ({"weights": (0.3, 0.6, 0.2)}, "weights"),
        ({"t_max": 0}, "t_max"),
    ],
)
def test_config_invariants(changes, field_name):
    with pytest.raises(ConfigError) as info:
        WorkflowConfig(**changes)
    assert field_name in [f for f, _ in info.value.problems]


def test_config_from_dict_diagnostics():
    with pytest.raises(ConfigError) as info:
        WorkflowConfig.from_dict({"k_proposer": 5, "mode": "monitor"})
    assert info.value.problems == [("k_proposer", "unknown key")]
    with pytest.raises(ConfigError) as info:
        WorkflowConfig.from_dict({"mode": "sometimes"})
    assert info.value.problems[0][0] == "mode"
    with pytest.raises(ConfigError) as info:
        WorkflowConfig.from_dict({"k_proposers": "five"})
    assert info.value.problems[0][0] == "k_proposers"
    cfg = WorkflowConfig.from_dict({"mode": "none", "seed": 3})
    assert cfg.mode is Mode.NONE and cfg.seed == 3
    assert WorkflowConfig.from_dict(cfg.to_dict()) == cfg


def test_problem_and_candidate():
    p = Problem.from_dict({"id": "q1", "question": "Pick one", "answer": "B", "choices": ["x", "y"]})
    assert p.gold_answer == "B"
    assert p.prompt_text().endswith("A. x\nB. y")
    with pytest.raises(ValueError):
        Problem("", "q")
    with pytest.raises(ValueError):
        Problem("q", "")
    c = Candidate("q1/c0/refined", "q1", "text", 0, Stage.HSR_REFINED, "4", "q1/c0", ("q1/c1",), "q1/c0", 0)
    assert Candidate.from_dict(c.to_dict()) == c
