"""Implicit retrieval during generation: monitor, querier and injector.

Providers return whole completions; streaming is simulated by sliding
overlapping windows over the generated text. When a window triggers and the
insertion budget allows, the query/retrieve/inject chain runs, the text after
that window is dropped, and generation resumes from
``output so far + injection`` with a continuation call.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .provider import Message, assistant, render_prompt, user
from .retrieval import Evidence
from .runtime import Runtime, Trace

# TriggerEvent.status values
INJECTED = "injected"
NO_TRIGGER = "no"
UNPARSED = "unparsed"
BUDGET = "budget"
ABORTED = "aborted"
NO_EVIDENCE = "no_evidence"
INJECTOR_FAILED = "injector_failed"

_WORD = re.compile(r"[A-Za-z]+")
_SLOTS = re.compile(r"\{(rag_query|rag_result)\}")


@dataclass(frozen=True)
class Window:
    start: int
    end: int
    text: str = ""
    is_tail: bool = False

    def to_dict(self) -> dict:
        return {"start": self.start, "end": self.end, "text": self.text, "is_tail": self.is_tail}


def windows(stream_length: int, chunk: int, overlap: int, flush: bool = True) -> list[Window]:
    """Window offsets over a stream of ``stream_length`` characters.

    Full windows start at multiples of ``chunk - overlap``. With ``flush``, a
    shorter tail window starting at the next multiple covers whatever the full
    windows left uncovered.
    """
    if not (0 < overlap < chunk):
        raise ValueError(f"need 0 < overlap < chunk, got overlap={overlap}, chunk={chunk}")
    if stream_length < 0:
        raise ValueError("stream_length must be >= 0")
    stride = chunk - overlap
    out = []
    start = 0
    while start + chunk <= stream_length:
        out.append(Window(start, start + chunk))
        start += stride
    covered = out[-1].end if out else 0
    if flush and stream_length > covered:
        out.append(Window(start, stream_length, is_tail=True))
    return out


def windows_over(text: str, chunk: int, overlap: int, flush: bool = True, offset: int = 0) -> list[Window]:
    return [
        Window(w.start + offset, w.end + offset, text[w.start : w.end], w.is_tail)
        for w in windows(len(text), chunk, overlap, flush)
    ]


@dataclass(frozen=True)
class TriggerEvent:
    window: Window
    decision: bool
    status: str
    query: Optional[str] = None
    evidence: Optional[Evidence] = None
    injection: Optional[str] = None
    injected_tokens: int = 0
    warning: Optional[str] = None
    role: str = ""
    key: str = ""

    def to_dict(self) -> dict:
        return {
            "role": self.role,
            "key": self.key,
            "window": self.window.to_dict(),
            "decision": self.decision,
            "status": self.status,
            "query": self.query,
            "evidence": self.evidence.to_dict() if self.evidence is not None else None,
            "injection": self.injection,
            "injected_tokens": self.injected_tokens,
            "warning": self.warning,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TriggerEvent":
        return cls(
            window=Window(**d["window"]),
            decision=d["decision"],
            status=d["status"],
            query=d.get("query"),
            evidence=Evidence.from_dict(d["evidence"]) if d.get("evidence") else None,
            injection=d.get("injection"),
            injected_tokens=d.get("injected_tokens", 0),
            warning=d.get("warning"),
            role=d.get("role", ""),
            key=d.get("key", ""),
        )


def parse_decision(text: str) -> Optional[bool]:
    """First alphabetic token, case-insensitive: yes -> True, no -> False, else None."""
    m = _WORD.search(text)
    if not m:
        return None
    word = m.group(0).lower()
    return {"yes": True, "no": False}.get(word)


def normalize_query(text: str) -> str:
    for line in text.strip().splitlines():
        line = line.strip().strip("\"'`“”").strip()
        if line:
            return line
    return ""


def with_output(messages: Sequence[Message], output: str) -> list[Message]:
    """Messages for continuing a generation whose output so far is ``output``."""
    msgs = list(messages)
    if msgs and msgs[-1].role == "assistant":
        msgs[-1] = assistant(msgs[-1].content + output)
    else:
        msgs.append(assistant(output))
    return msgs


@dataclass
class Generation:
    text: str
    events: list[TriggerEvent] = field(default_factory=list)
    tokens_used: int = 0

    @property
    def injections(self) -> int:
        return sum(e.status == INJECTED for e in self.events)


class Monitor:
    def __init__(self, rt: Runtime):
        self.rt = rt

    def decide(self, trace: Trace, window: Window, key: str) -> tuple[bool, Optional[str]]:
        """Ask the monitor about one window. Unparseable answers fail closed."""
        if not window.text:
            raise ValueError("window text must be non-empty")
        prompt = render_prompt("monitor", {"text": window.text})
        out = self.rt.call(trace, "monitor", "monitor", [user(prompt)], key)
        decision = parse_decision(out.text)
        if decision is None:
            warning = f"unparseable monitor response {out.text.strip()[:40]!r} at {key}; treated as no"
            trace.warn(warning)
            return False, warning
        return decision, None

    def generate_query(self, trace: Trace, window: Window, key: str) -> str:
        """One search query for the window; empty string means the trigger is aborted."""
        if not window.text:
            raise ValueError("window text must be non-empty")
        prompt = render_prompt("querier", {"text": window.text})
        out = self.rt.call(trace, "querier", "querier", [user(prompt)], key)
        return normalize_query(out.text)

    def compose_injection(
        self, trace: Trace, context: str, query: str, evidence: Evidence, key: str
    ) -> Optional[tuple[str, int]]:
        """Injector continuation text and its token count, or None if the provider failed.

        Literal ``{rag_query}`` / ``{rag_result}`` slots in the response are
        filled in, which lets replay scripts emit the standard frame.
        """
        if not evidence.snippets:
            raise ValueError("evidence must contain at least one snippet")
        rag_result = evidence.render()
        prompt = render_prompt("injector", {"text": context, "rag_query": query, "rag_result": rag_result})
        try:
            out = self.rt.call(trace, "injector", "injector", [user(prompt)], key)
        except Exception as exc:  # provider failure after retries: skip the injection
            trace.warn(f"injector failed at {key}: {exc}")
            return None
        slots = {"rag_query": query, "rag_result": rag_result}
        text = _SLOTS.sub(lambda m: slots[m.group(1)], out.text)
        return text, out.tokens_out

    def _probe(self, trace, role, window, key, context, budget_left) -> tuple[TriggerEvent, Optional[str]]:
        common = dict(window=window, role=role, key=key)
        decision, warning = self.decide(trace, window, key)
        if not decision:
            return TriggerEvent(decision=False, status=UNPARSED if warning else NO_TRIGGER, warning=warning, **common), None
        if budget_left <= 0:
            return TriggerEvent(decision=True, status=BUDGET, **common), None
        query = self.generate_query(trace, window, f"{key}/query")
        if not query:
            trace.warn(f"empty query at {key}; trigger aborted")
            return TriggerEvent(decision=True, status=ABORTED, **common), None
        evidence = self.rt.retrieve(trace, query, f"{key}/retrieve")
        if not evidence.snippets:
            return TriggerEvent(decision=True, status=NO_EVIDENCE, query=query, evidence=evidence, **common), None
        composed = self.compose_injection(trace, context, query, evidence, f"{key}/inject")
        if composed is None:
            return (
                TriggerEvent(decision=True, status=INJECTOR_FAILED, query=query, evidence=evidence, **common),
                None,
            )
        text, tokens = composed
        event = TriggerEvent(
            decision=True,
            status=INJECTED,
            query=query,
            evidence=evidence,
            injection=text,
            injected_tokens=tokens,
            **common,
        )
        return event, text

    def generate(
        self,
        trace: Trace,
        role: str,
        template_id: str,
        messages: Sequence[Message],
        key: str,
        *,
        step: bool = True,
    ) -> Generation:
        """Monitored generation.

        At most ``max_rag`` injections happen per call; later triggers are
        logged with status ``budget``. Injected tokens count against
        ``max_tokens``.
        """
        cfg = self.rt.config
        out = self.rt.call(trace, role, template_id, messages, key, step=step)
        used = out.tokens_out
        segment = out.text
        context = ""
        events: list[TriggerEvent] = []
        injections = 0
        probe_no = 0
        continuation = 0
        while True:
            cut = None
            for w in windows_over(segment, cfg.rag_chunk, cfg.rag_overlapping, cfg.flush_tail, offset=len(context)):
                event, text = self._probe(
                    trace,
                    role,
                    w,
                    f"{key}/w{probe_no}",
                    context + segment[: w.end - len(context)],
                    cfg.max_rag - injections,
                )
                probe_no += 1
                events.append(event)
                if text is not None:
                    injections += 1
                    used += event.injected_tokens
                    cut = (w.end - len(context), text)
                    break
            if cut is None:
                context += segment
                break
            local_end, injection = cut
            context += segment[:local_end] + injection
            remaining = cfg.max_tokens - used
            if remaining < 1:
                trace.warn(f"{key}: token budget exhausted after injection")
                break
            continuation += 1
            out = self.rt.call(
                trace,
                role,
                template_id,
                with_output(messages, context),
                f"{key}/k{continuation}",
                step=False,
                max_tokens=remaining,
            )
            used += out.tokens_out
            segment = out.text
            if not segment:
                break
        trace.events.extend(events)
        return Generation(context, events, used)
