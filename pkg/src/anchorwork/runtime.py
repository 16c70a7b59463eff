"""Call metering and ordered fan-out shared by every stage.

Each unit of work appends to its own :class:`Trace`; parallel work gets one
child trace per item and the children are merged back in item order. Nothing
is shared mutably, so the merged log does not depend on which task finished
first.
"""
from __future__ import annotations

import hashlib
import logging
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, TypeVar

from .core import CostLedger, WorkflowConfig, sum_ledgers
from .provider import Completion, GenerationParams, Message, Provider, make_match_key
from .retrieval import Evidence, LexicalIndex, WebStub

log = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

GENERATION_ROLES = ("proposer", "corrector", "refiner")


@dataclass(frozen=True)
class CallLogRecord:
    """One metered event: a provider call, a retrieval, or a tool round."""

    role: str
    template_id: str
    key: str
    match_key: str
    ledger: CostLedger
    duration: float = 0.0

    def to_dict(self, include_timing: bool = True) -> dict:
        d = {
            "role": self.role,
            "template_id": self.template_id,
            "key": self.key,
            "match_key": self.match_key,
            **self.ledger.to_dict(),
        }
        if include_timing:
            d["duration"] = round(self.duration, 6)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CallLogRecord":
        return cls(
            d["role"], d["template_id"], d["key"], d["match_key"], CostLedger.from_dict(d), d.get("duration", 0.0)
        )


@dataclass
class Trace:
    calls: list[CallLogRecord] = field(default_factory=list)
    events: list = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def warn(self, msg: str) -> None:
        log.warning(msg)
        self.warnings.append(msg)

    def extend(self, other: "Trace") -> None:
        self.calls.extend(other.calls)
        self.events.extend(other.events)
        self.warnings.extend(other.warnings)

    def ledger(self) -> CostLedger:
        return sum_ledgers(c.ledger for c in self.calls)


Mapper = Callable[[Callable[[T], R], Sequence[T]], list]


def thread_mapper(max_workers: int) -> Mapper:
    def run(fn, items):
        items = list(items)
        if len(items) <= 1 or max_workers == 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(max_workers=min(max_workers, len(items))) as pool:
            return list(pool.map(fn, items))

    return run


def shuffled_mapper(seed: int) -> Mapper:
    """Runs items one at a time in a seeded random order; results stay in item order.

    Used to check that outcomes are independent of task completion order.
    """
    rng = random.Random(seed)

    def run(fn, items):
        items = list(items)
        order = list(range(len(items)))
        rng.shuffle(order)
        out = [None] * len(items)
        for i in order:
            out[i] = fn(items[i])
        return out

    return run


def derive_seed(seed: int, problem_id: str, attempt: int) -> int:
    digest = hashlib.sha256(f"{seed}\x1f{problem_id}\x1f{attempt}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


class Runtime:
    """Everything a stage needs for one (problem, attempt) run."""

    def __init__(
        self,
        provider: Provider,
        config: WorkflowConfig,
        index: Optional[LexicalIndex] = None,
        web: Optional[WebStub] = None,
        *,
        seed: Optional[int] = None,
        prefix: str = "",
        mapper: Optional[Mapper] = None,
    ):
        self.provider = provider
        self.config = config
        self.index = index
        self.web = web if web is not None else WebStub(index, top_k=config.query_top_k)
        self.seed = config.seed if seed is None else seed
        self.prefix = prefix
        self.mapper = mapper or thread_mapper(config.max_workers)

    def key(self, *parts) -> str:
        return "/".join(str(p) for p in (self.prefix, *parts) if p != "")

    def params(self, role: str, max_tokens: Optional[int] = None) -> GenerationParams:
        return GenerationParams(
            temperature=self.config.temperature,
            max_tokens=max_tokens or self.config.max_tokens,
            model=self.config.model_for(role),
            seed=self.seed,
        )

    def call(
        self,
        trace: Trace,
        role: str,
        template_id: str,
        messages: Sequence[Message],
        key: str,
        *,
        step: bool = True,
        max_tokens: Optional[int] = None,
    ) -> Completion:
        """Call the provider and meter it into ``trace``.

        ``step`` marks the first call of a role invocation; continuation calls
        of the same invocation pass ``step=False``. Monitor probes never count
        as steps.
        """
        start = time.perf_counter()
        out = self.provider.complete(role, messages, self.params(role, max_tokens), key)
        ledger = CostLedger(
            tokens_in=out.tokens_in,
            tokens_out=out.tokens_out,
            llm_calls=1,
            agent_steps=int(step and role != "monitor"),
            monitor_probes=int(role == "monitor"),
            injected_tokens=out.tokens_out if role == "injector" else 0,
            chars_generated=len(out.text) if role in GENERATION_ROLES else 0,
        )
        trace.calls.append(
            CallLogRecord(role, template_id, key, make_match_key(role, messages), ledger, time.perf_counter() - start)
        )
        return out

    def retrieve(self, trace: Trace, query: str, key: str) -> Evidence:
        if self.index is None:
            evidence = Evidence(query)
        else:
            evidence = self.index.search_top_k(query, self.config.query_top_k)
        trace.calls.append(CallLogRecord("retriever", "", key, "", CostLedger(retrieval_calls=1)))
        return evidence

    def fan_out(self, fn: Callable[[T, Trace], R], items: Sequence[T], trace: Trace) -> list[R]:
        """Apply ``fn`` to every item (possibly concurrently), merging child traces in item order."""

        def run(item):
            child = Trace()
            return fn(item, child), child

        results = self.mapper(run, list(items))
        out = []
        for value, child in results:
            trace.extend(child)
            out.append(value)
        return out
