"""Deterministic scripted provider for offline replay.

Entries are matched on ``(agent_role, match_key)`` against the engine's
logical call key, most specific first:

1. ``match_key == key``
2. ``match_key`` is ``"#<hex>"`` and the call's content hash starts with ``<hex>``
3. ``key`` ends with ``"/" + match_key`` (longest such entry wins)
4. ``key`` is ``<base>/k<n>`` (the n-th continuation of a monitored
   generation) and ``<base>`` resolves to an entry with ``segments``:
   the entry answers with ``segments[n]``, or an empty completion once the
   segments run out
5. ``match_key == "*"`` (role-wide default; also the base for step 4)
"""
from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .base import (
    Completion,
    GenerationParams,
    Message,
    ProviderError,
    ScriptMissError,
    estimate_tokens,
    make_match_key,
)

_CONTINUATION = re.compile(r"^(.*)/k(\d+)$")


@dataclass(frozen=True)
class ScriptEntry:
    agent_role: str
    match_key: str
    response: str = ""
    tokens_in: Optional[int] = None
    tokens_out: Optional[int] = None
    segments: Optional[tuple[str, ...]] = None
    variants: Optional[tuple[str, ...]] = None
    error: Optional[str] = None
    finish_reason: str = "stop"

    @classmethod
    def from_dict(cls, d: dict) -> "ScriptEntry":
        d = dict(d)
        for name in ("segments", "variants"):
            if d.get(name) is not None:
                d[name] = tuple(d[name])
        return cls(**d)

    def to_dict(self) -> dict:
        out = {"agent_role": self.agent_role, "match_key": self.match_key, "response": self.response}
        for name in ("tokens_in", "tokens_out", "error"):
            if getattr(self, name) is not None:
                out[name] = getattr(self, name)
        for name in ("segments", "variants"):
            if getattr(self, name) is not None:
                out[name] = list(getattr(self, name))
        if self.finish_reason != "stop":
            out["finish_reason"] = self.finish_reason
        return out


class ScriptedProvider:
    """Read-only after construction, so safe to share across threads."""

    def __init__(self, entries: Iterable[ScriptEntry] = ()):
        self._by_role: dict[str, dict[str, ScriptEntry]] = {}
        for e in entries:
            table = self._by_role.setdefault(e.agent_role, {})
            if e.match_key in table:
                raise ValueError(f"duplicate script entry ({e.agent_role!r}, {e.match_key!r})")
            table[e.match_key] = e

    @classmethod
    def from_jsonl(cls, path) -> "ScriptedProvider":
        entries = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    entries.append(ScriptEntry.from_dict(json.loads(line)))
                except (json.JSONDecodeError, TypeError) as exc:
                    raise ValueError(f"{path}:{lineno}: bad script entry: {exc}") from exc
        return cls(entries)

    def entries(self) -> list[ScriptEntry]:
        return [e for table in self._by_role.values() for e in table.values()]

    def _resolve(self, table: dict[str, ScriptEntry], key: str, messages, role: str) -> Optional[ScriptEntry]:
        if key in table:
            return table[key]
        digest = None
        best = None
        for mk, entry in table.items():
            if mk.startswith("#"):
                digest = digest or make_match_key(role, messages)
                if digest.startswith(mk[1:]):
                    return entry
            elif mk != "*" and key.endswith("/" + mk):
                if best is None or len(mk) > len(best.match_key):
                    best = entry
        return best

    def lookup(self, agent_role: str, key: str, messages: Sequence[Message] = ()) -> tuple[ScriptEntry, int]:
        """Return the matching entry and the segment index to answer with."""
        table = self._by_role.get(agent_role, {})
        entry = self._resolve(table, key, messages, agent_role)
        if entry is not None:
            return entry, 0
        m = _CONTINUATION.match(key)
        if m:
            base = self._resolve(table, m.group(1), messages, agent_role) or table.get("*")
            if base is not None and base.segments is not None:
                return base, int(m.group(2))
        if "*" in table:
            return table["*"], 0
        raise ScriptMissError(agent_role, key)

    def complete(
        self,
        agent_role: str,
        messages: Sequence[Message],
        params: GenerationParams,
        key: str = "",
    ) -> Completion:
        if not messages:
            raise ValueError("messages must be non-empty")
        entry, seg = self.lookup(agent_role, key, messages)
        if entry.error is not None:
            raise ProviderError(f"scripted failure for ({agent_role!r}, {key!r}): {entry.error}")
        if entry.segments is not None:
            if seg >= len(entry.segments):
                return Completion("", 0, 0, "stop")
            text = entry.segments[seg]
        elif entry.variants:
            text = entry.variants[params.seed % len(entry.variants)]
        else:
            text = entry.response
        tokens_in = entry.tokens_in
        if tokens_in is None:
            tokens_in = estimate_tokens("".join(m.content for m in messages))
        tokens_out = entry.tokens_out if entry.tokens_out is not None else estimate_tokens(text)
        return Completion(text, tokens_in, tokens_out, entry.finish_reason)


@dataclass
class CallRecord:
    agent_role: str
    key: str
    messages: tuple[Message, ...]
    text: Optional[str] = None
    error: Optional[str] = None


class RecordingProvider:
    """Wraps a provider and keeps every call (thread-safe) for inspection."""

    def __init__(self, inner):
        self.inner = inner
        self.calls: list[CallRecord] = []
        self._lock = threading.Lock()

    def complete(self, agent_role, messages, params, key=""):
        rec = CallRecord(agent_role, key, tuple(messages))
        try:
            out = self.inner.complete(agent_role, messages, params, key)
            rec.text = out.text
            return out
        except Exception as exc:
            rec.error = str(exc)
            raise
        finally:
            with self._lock:
                self.calls.append(rec)

    def calls_for(self, agent_role: str) -> list[CallRecord]:
        return [c for c in self.calls if c.agent_role == agent_role]
