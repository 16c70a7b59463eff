"""Role agents: proposer, corrector, HSR refiner, QAIR evaluator and ranker."""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .core import Candidate, CostLedger, Mode, Problem, QualityReport, Stage
from .judge import extract_final_answer
from .monitor import Monitor, with_output
from .provider import Message, ProviderError, assistant, load_template, render_prompt, render_refinement, user
from .runtime import CallLogRecord, Runtime, Trace
from .tools import ToolBox, find_code_blocks

_INT = re.compile(r"^\s*(\d+)\s*$")


class EvaluationError(ValueError):
    """The evaluator returned unparseable output twice."""

    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


def toolbox_for(rt: Runtime) -> ToolBox:
    return ToolBox(rt.index, rt.web, rt.config.query_top_k, enabled=rt.config.mode is not Mode.NONE)


def _generate_once(rt: Runtime, trace: Trace, role: str, template_id: str, messages, key: str, step: bool) -> str:
    if rt.config.mode is Mode.MONITOR:
        return Monitor(rt).generate(trace, role, template_id, messages, key, step=step).text
    return rt.call(trace, role, template_id, messages, key, step=step).text


def generate(rt: Runtime, trace: Trace, role: str, template_id: str, messages: Sequence[Message], key: str) -> str:
    """One role invocation, including its tool rounds.

    Each reply containing ``<code>`` blocks is executed and the executor
    feedback is sent back as a tool message, up to ``tool_round_cap`` rounds.
    Returns the assistant turns joined by newlines.
    """
    cfg = rt.config
    tools = toolbox_for(rt)
    msgs = list(messages)
    text = _generate_once(rt, trace, role, template_id, msgs, key, True)
    parts = [text]
    rounds = 0
    while rounds < cfg.tool_round_cap and find_code_blocks(text):
        rounds += 1
        calls, feedback = tools.execute_tool_block(text)
        trace.calls.append(
            CallLogRecord(
                "tool",
                "",
                f"{key}/t{rounds}",
                "",
                CostLedger(retrieval_calls=len(calls), agent_steps=int(cfg.count_tool_rounds)),
            )
        )
        msgs = with_output(msgs, text) + [Message("tool", feedback or "(no output)")]
        text = _generate_once(rt, trace, role, template_id, msgs, f"{key}/t{rounds}", False)
        parts.append(text)
    return "\n".join(p for p in parts if p)


def propose(rt: Runtime, problem: Problem, slot: int, trace: Trace) -> Optional[Candidate]:
    """One proposer run; None if the provider failed (the slot drops out)."""
    messages = [
        user(render_prompt("proposer", {"query": problem.prompt_text()})),
        assistant(load_template("refinement_prefix") + "\n"),
    ]
    try:
        text = generate(rt, trace, "proposer", "proposer", messages, rt.key(f"c{slot}", "propose"))
    except ProviderError as exc:
        trace.warn(f"proposer {slot} for {problem.id} failed: {exc}")
        return None
    if not text.strip():
        trace.warn(f"proposer {slot} for {problem.id} returned no text")
        return None
    return Candidate(
        id=f"{problem.id}/c{slot}/proposed",
        problem_id=problem.id,
        text=text,
        slot=slot,
        stage=Stage.PROPOSED,
        final_answer=extract_final_answer(text),
    )


def correct(
    rt: Runtime,
    problem: Problem,
    candidate: Candidate,
    trace: Trace,
    suggestion: Optional[str] = None,
    round_no: Optional[int] = None,
) -> Candidate:
    """Local repair without access to other candidates.

    With a suggestion this is a QAIR revision (``round_no`` is the QAIR
    round); without one it is the pre-refinement correction pass. Provider
    failure passes the input through unchanged.
    """
    if not candidate.text:
        raise ValueError("candidate text must be non-empty")
    if suggestion is not None:
        template_id = "corrector_revise"
        bindings = {"query": problem.prompt_text(), "solution": candidate.text, "suggestion": suggestion}
        key = rt.key(f"c{candidate.slot}", f"revise{round_no}")
        stage, tag = Stage.QAIR_REVISED, f"rev{round_no}"
    else:
        template_id = "corrector"
        bindings = {"query": problem.prompt_text(), "solution": candidate.text}
        key = rt.key(f"c{candidate.slot}", "correct")
        stage, tag = Stage.CORRECTED, "corrected"
    messages = [user(render_prompt(template_id, bindings))]
    try:
        text = generate(rt, trace, "corrector", template_id, messages, key)
    except ProviderError as exc:
        trace.warn(f"corrector failed for {candidate.id}: {exc}; keeping input")
        return candidate
    if not text.strip():
        trace.warn(f"corrector returned no text for {candidate.id}; keeping input")
        return candidate
    return Candidate(
        id=f"{problem.id}/c{candidate.slot}/{tag}",
        problem_id=problem.id,
        text=text,
        slot=candidate.slot,
        stage=stage,
        final_answer=extract_final_answer(text),
        parent_id=candidate.id,
        revision_round=candidate.revision_round + 1,
    )


def refine(rt: Runtime, problem: Problem, anchor: Candidate, references: Sequence[Candidate], trace: Trace) -> Candidate:
    prompt = render_refinement(problem.prompt_text(), anchor.text, [r.text for r in references])
    messages = [user(prompt), assistant(load_template("refinement_prefix") + "\n")]
    try:
        text = generate(rt, trace, "refiner", "refinement", messages, rt.key(f"c{anchor.slot}", "refine"))
    except ProviderError as exc:
        trace.warn(f"refinement failed for anchor {anchor.id}: {exc}; keeping anchor")
        return anchor
    if not text.strip():
        trace.warn(f"refiner returned no text for anchor {anchor.id}; keeping anchor")
        return anchor
    return Candidate(
        id=f"{problem.id}/c{anchor.slot}/refined",
        problem_id=problem.id,
        text=text,
        slot=anchor.slot,
        stage=Stage.HSR_REFINED,
        final_answer=extract_final_answer(text),
        anchor_of=anchor.id,
        reference_ids=tuple(r.id for r in references),
        parent_id=anchor.id,
        revision_round=0,
    )


def hsr_round(rt: Runtime, problem: Problem, candidates: Sequence[Candidate], trace: Trace) -> list[Candidate]:
    """Every candidate takes a turn as anchor, repaired against all the others."""
    candidates = list(candidates)
    if not candidates:
        raise ValueError("hsr_round needs at least one candidate")
    if len(candidates) == 1:
        return candidates

    def one(i: int, child: Trace) -> Candidate:
        refs = candidates[:i] + candidates[i + 1 :]
        return refine(rt, problem, candidates[i], refs, child)

    return rt.fan_out(one, range(len(candidates)), trace)


def _loads_lenient(text: str):
    candidates = [text.strip()]
    m = re.search(r"\{.*\}", text, re.DOTALL)
    if m:
        candidates.append(m.group(0))
        candidates.append(re.sub(r"//[^\n]*", "", m.group(0)))
    for c in candidates:
        try:
            return json.loads(c)
        except (json.JSONDecodeError, ValueError):
            continue
    return None


def parse_quality(text: str) -> Optional[tuple[list[float], str]]:
    data = _loads_lenient(text)
    if not isinstance(data, dict):
        return None
    scores = data.get("quality_scores")
    if not isinstance(scores, list) or len(scores) != 3:
        return None
    try:
        scores = [float(s) for s in scores]
    except (TypeError, ValueError):
        return None
    if any(math.isnan(s) for s in scores):
        return None
    suggestion = data.get("suggestion", "")
    return scores, suggestion if isinstance(suggestion, str) else json.dumps(suggestion)


def evaluate_quality(rt: Runtime, problem: Problem, candidate: Candidate, trace: Trace, round_no: int = 0) -> QualityReport:
    """Score logic/answer/explanation; one re-prompt on malformed JSON."""
    if not candidate.text:
        raise ValueError("candidate text must be non-empty")
    cfg = rt.config
    key = rt.key(f"c{candidate.slot}", f"eval{round_no}")
    messages = [user(render_prompt("evaluator", {"query": problem.prompt_text(), "solution": candidate.text}))]
    out = rt.call(trace, "evaluator", "evaluator", messages, key)
    parsed = parse_quality(out.text)
    if parsed is None:
        messages = messages + [assistant(out.text), user(load_template("format_retry"))]
        out = rt.call(trace, "evaluator", "evaluator", messages, f"{key}/retry", step=False)
        parsed = parse_quality(out.text)
        if parsed is None:
            raise EvaluationError(f"evaluator output for {candidate.id} is not valid JSON", out.text)
    scores, suggestion = parsed
    clamped = [min(5.0, max(0.0, s)) for s in scores]
    if clamped != scores:
        trace.warn(f"evaluator scores {scores} for {candidate.id} clamped to [0, 5]")
    return QualityReport.build(*clamped, suggestion=suggestion, tau=cfg.tau, weights=cfg.weights)


@dataclass
class QairState:
    round: int
    evaluated: list[str]
    failed: list[str]
    reports: dict[str, QualityReport] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "evaluated": list(self.evaluated),
            "failed": list(self.failed),
            "reports": {k: v.to_dict() for k, v in self.reports.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QairState":
        reports = {k: QualityReport.from_dict(v) for k, v in d.get("reports", {}).items()}
        return cls(d["round"], d["evaluated"], d["failed"], reports)


def qair_loop(
    rt: Runtime, problem: Problem, candidates: Sequence[Candidate], trace: Trace
) -> tuple[list[Candidate], list[QairState], dict[str, QualityReport]]:
    """Evaluate, then revise and re-evaluate only the failures.

    Round 0 evaluates everything. While failures remain and fewer than
    ``t_max`` revision rounds have run, each failure is revised with its
    suggestion and only the revisions are evaluated next round. Passed
    candidates are never evaluated again. A candidate whose evaluation
    errors keeps a failing placeholder report and leaves the loop.
    """
    cfg = rt.config
    if not candidates:
        raise ValueError("qair_loop needs at least one candidate")
    latest = {c.slot: c for c in candidates}
    reports: dict[str, QualityReport] = {}
    states: list[QairState] = []
    current = list(candidates)
    t = 0
    while True:

        def judge_one(c: Candidate, child: Trace):
            try:
                return evaluate_quality(rt, problem, c, child, t), False
            except (EvaluationError, ProviderError) as exc:
                child.warn(f"evaluation of {c.id} failed: {exc}")
                return QualityReport.failed(f"evaluation failed: {exc}"), True

        results = rt.fan_out(judge_one, current, trace)
        round_reports = {}
        failed = []
        for c, (report, errored) in zip(current, results):
            round_reports[c.id] = report
            reports[c.id] = report
            if not report.passed and not errored:
                failed.append(c)
        states.append(QairState(t, [c.id for c in current], [c.id for c in failed], round_reports))
        if not failed or t >= cfg.t_max:
            break
        t += 1

        def revise(c: Candidate, child: Trace, round_no=t) -> Candidate:
            return correct(rt, problem, c, child, suggestion=reports[c.id].suggestion, round_no=round_no)

        current = rt.fan_out(revise, failed, trace)
        for c in current:
            latest[c.slot] = c
    final = [latest[s] for s in sorted(latest)]
    return final, states, {c.id: reports[c.id] for c in final}


def _fallback_rank(candidates: Sequence[Candidate], reports: dict[str, QualityReport]) -> Candidate:
    def score(c: Candidate) -> float:
        r = reports.get(c.id)
        return r.composite if r is not None else -math.inf

    return min(candidates, key=lambda c: (-score(c), c.slot))


def rank(
    rt: Runtime,
    problem: Problem,
    candidates: Sequence[Candidate],
    reports: dict[str, QualityReport],
    trace: Trace,
) -> Candidate:
    """Pick the final candidate.

    With ``llm_ranker`` the provider names an index into the slot-ordered
    list; anything unparseable or out of range falls back to the highest
    composite score, ties to the lowest slot.
    """
    ordered = sorted(candidates, key=lambda c: c.slot)
    if not ordered:
        raise ValueError("rank needs at least one candidate")
    if len(ordered) == 1:
        return ordered[0]
    if rt.config.llm_ranker:
        listing = "\n\n".join(f"Candidate {i}:\n{c.text}" for i, c in enumerate(ordered))
        prompt = render_prompt("ranker", {"query": problem.prompt_text(), "candidates": listing})
        try:
            out = rt.call(trace, "ranker", "ranker", [user(prompt)], rt.key("rank"))
        except ProviderError as exc:
            trace.warn(f"ranker failed for {problem.id}: {exc}; using composite fallback")
        else:
            m = _INT.match(out.text)
            if m and int(m.group(1)) < len(ordered):
                return ordered[int(m.group(1))]
            trace.warn(f"ranker reply {out.text.strip()[:40]!r} for {problem.id} unusable; using composite fallback")
    return _fallback_rank(ordered, reports)
