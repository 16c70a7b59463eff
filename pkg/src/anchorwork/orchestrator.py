"""End-to-end workflow: propose, correct, rotate anchors, quality loop, rank.

``solve`` runs one (problem, attempt); ``run_batch`` runs many with bounded
parallelism and records per-run failures instead of aborting the batch.
"""
from __future__ import annotations

import logging
import re
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

from .core import Candidate, CostLedger, Mode, Problem, QualityReport, WorkflowConfig
from .monitor import TriggerEvent
from .provider import Provider, ProviderError
from .retrieval import LexicalIndex, WebStub
from .runtime import CallLogRecord, Mapper, Runtime, Trace, derive_seed, thread_mapper
from .stages import QairState, correct, hsr_round, propose, qair_loop, rank

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

# keys of RunOutcome.candidates, in pipeline order
PHASES = ("proposed", "corrected", "refined", "final_pool")


class RunError(RuntimeError):
    """A run could not produce any candidate."""


@dataclass
class RunOutcome:
    problem_id: str
    attempt: int
    seed: int
    mode: Mode
    final: Candidate
    candidates: dict[str, list[Candidate]]
    reports: dict[str, QualityReport]
    qair_states: list[QairState]
    trigger_events: list[TriggerEvent]
    ledger: CostLedger
    calls: list[CallLogRecord] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def injections(self) -> int:
        return sum(e.status == "injected" for e in self.trigger_events)

    def to_dict(self, include_timing: bool = False) -> dict:
        """Serializable form; the call log is written separately and wall time only on request."""
        d = {
            "schema_version": SCHEMA_VERSION,
            "problem_id": self.problem_id,
            "attempt": self.attempt,
            "seed": self.seed,
            "mode": self.mode.value,
            "final": self.final.to_dict(),
            "candidates": {k: [c.to_dict() for c in v] for k, v in self.candidates.items()},
            "reports": {k: v.to_dict() for k, v in self.reports.items()},
            "qair_states": [s.to_dict() for s in self.qair_states],
            "trigger_events": [e.to_dict() for e in self.trigger_events],
            "injections": self.injections,
            "ledger": self.ledger.to_dict(),
            "warnings": list(self.warnings),
        }
        if include_timing:
            d["wall_time"] = self.wall_time
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunOutcome":
        return cls(
            problem_id=d["problem_id"],
            attempt=d["attempt"],
            seed=d["seed"],
            mode=Mode(d["mode"]),
            final=Candidate.from_dict(d["final"]),
            candidates={k: [Candidate.from_dict(c) for c in v] for k, v in d["candidates"].items()},
            reports={k: QualityReport.from_dict(v) for k, v in d["reports"].items()},
            qair_states=[QairState.from_dict(s) for s in d["qair_states"]],
            trigger_events=[TriggerEvent.from_dict(e) for e in d["trigger_events"]],
            ledger=CostLedger.from_dict(d["ledger"]),
            warnings=list(d.get("warnings", [])),
            wall_time=d.get("wall_time", 0.0),
        )


@dataclass
class RunFailure:
    """Error record for a (problem, attempt) that produced no outcome."""

    problem_id: str
    attempt: int
    seed: int
    error_type: str
    message: str
    provider_error: bool = False

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "problem_id": self.problem_id,
            "attempt": self.attempt,
            "seed": self.seed,
            "error": {"type": self.error_type, "message": self.message, "provider": self.provider_error},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunFailure":
        err = d["error"]
        return cls(d["problem_id"], d["attempt"], d["seed"], err["type"], err["message"], err.get("provider", False))


BatchResult = Union[RunOutcome, RunFailure]


def outcome_from_dict(d: dict) -> BatchResult:
    return RunFailure.from_dict(d) if "error" in d else RunOutcome.from_dict(d)


def solve(
    problem: Problem,
    config: WorkflowConfig,
    provider: Provider,
    index: Optional[LexicalIndex] = None,
    web: Optional[WebStub] = None,
    *,
    attempt: int = 0,
    mapper: Optional[Mapper] = None,
) -> RunOutcome:
    """Run the full pipeline once for ``problem``.

    Raises :class:`RunError` if every proposer fails.
    """
    started = time.perf_counter()
    seed = derive_seed(config.seed, problem.id, attempt)
    rt = Runtime(provider, config, index, web, seed=seed, prefix=f"{problem.id}/{attempt}", mapper=mapper)
    trace = Trace()

    proposed = [c for c in rt.fan_out(lambda slot, t: propose(rt, problem, slot, t), range(config.k_proposers), trace) if c]
    if not proposed:
        raise RunError(f"all {config.k_proposers} proposers failed for {problem.id}")

    if config.pre_correct:
        corrected = rt.fan_out(lambda c, t: correct(rt, problem, c, t), proposed, trace)
    else:
        corrected = list(proposed)
    refined = hsr_round(rt, problem, corrected, trace)
    pool, states, reports = qair_loop(rt, problem, refined, trace)
    final = rank(rt, problem, pool, reports, trace)

    return RunOutcome(
        problem_id=problem.id,
        attempt=attempt,
        seed=seed,
        mode=config.mode,
        final=final,
        candidates={"proposed": proposed, "corrected": corrected, "refined": refined, "final_pool": pool},
        reports=reports,
        qair_states=states,
        trigger_events=list(trace.events),
        ledger=trace.ledger(),
        calls=list(trace.calls),
        warnings=list(trace.warnings),
        wall_time=time.perf_counter() - started,
    )


def run_batch(
    problems: Sequence[Problem],
    config: WorkflowConfig,
    provider: Provider,
    attempts: int = 1,
    index: Optional[LexicalIndex] = None,
    web: Optional[WebStub] = None,
    *,
    mapper: Optional[Mapper] = None,
    batch_mapper: Optional[Mapper] = None,
) -> list[BatchResult]:
    """Solve every problem ``attempts`` times, ordered by (problem, attempt)."""
    if attempts < 1:
        raise ValueError("attempts must be >= 1")
    ids = [p.id for p in problems]
    if len(set(ids)) != len(ids):
        raise ValueError("problem ids must be unique within a run")
    jobs = [(p, a) for p in problems for a in range(attempts)]

    def one(job) -> BatchResult:
        problem, attempt = job
        try:
            return solve(problem, config, provider, index, web, attempt=attempt, mapper=mapper)
        except (RunError, ProviderError, ValueError) as exc:
            log.warning("run %s/%d failed: %s", problem.id, attempt, exc)
            return RunFailure(
                problem.id,
                attempt,
                derive_seed(config.seed, problem.id, attempt),
                type(exc).__name__,
                str(exc),
                provider_error=isinstance(exc, (RunError, ProviderError)),
            )

    return (batch_mapper or thread_mapper(config.max_workers))(one, jobs)


STEP_ROLES = ("proposer", "corrector", "refiner", "evaluator", "ranker", "querier", "injector")
_FOLLOW_UP = re.compile(r"/(k\d+|t\d+|retry)$")


def recount_steps(calls: Sequence[Union[CallLogRecord, dict]], count_tool_rounds: bool = True) -> int:
    """Agent steps recomputed from roles and call keys alone.

    A step is the first call of a role invocation (continuations, tool-round
    follow-ups and format retries are not) or, optionally, a tool round.
    """
    steps = 0
    for c in calls:
        role, key = (c["role"], c["key"]) if isinstance(c, dict) else (c.role, c.key)
        if role == "tool":
            steps += int(count_tool_rounds)
        elif role in STEP_ROLES and not _FOLLOW_UP.search(key):
            steps += 1
    return steps


__all__ = [
    "PHASES",
    "SCHEMA_VERSION",
    "BatchResult",
    "RunError",
    "RunFailure",
    "RunOutcome",
    "outcome_from_dict",
    "recount_steps",
    "run_batch",
    "solve",
]
