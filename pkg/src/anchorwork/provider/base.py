from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Optional, Protocol, Sequence

ROLES = ("system", "user", "assistant", "tool")
AGENT_ROLES = (
    "proposer",
    "corrector",
    "refiner",
    "evaluator",
    "ranker",
    "monitor",
    "querier",
    "injector",
    "judge",
    "summarizer",
)


class ProviderError(RuntimeError):
    """Non-retryable provider failure."""


class TransientProviderError(ProviderError):
    """Transport-level failure; safe to retry."""


class ScriptMissError(ProviderError):
    def __init__(self, agent_role: str, key: str):
        self.agent_role = agent_role
        self.key = key
        super().__init__(f"no script entry for ({agent_role!r}, {key!r})")


@dataclass(frozen=True)
class Message:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown message role {self.role!r}")
        if not self.content and self.role != "assistant":
            raise ValueError(f"empty content is only allowed for assistant prefixes, got role {self.role!r}")

    def to_dict(self) -> dict:
        return {"role": self.role, "content": self.content}


def user(content: str) -> Message:
    return Message("user", content)


def assistant(content: str) -> Message:
    return Message("assistant", content)


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.5
    max_tokens: int = 65536
    model: Optional[str] = None
    seed: int = 0

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")


@dataclass(frozen=True)
class Completion:
    text: str
    tokens_in: int = 0
    tokens_out: int = 0
    finish_reason: str = "stop"

    def __post_init__(self):
        if self.tokens_out < 0 or self.tokens_in < 0:
            raise ValueError("token counts must be nonnegative")
        if self.finish_reason not in ("stop", "length", "error"):
            raise ValueError(f"bad finish_reason {self.finish_reason!r}")


class Provider(Protocol):
    def complete(
        self,
        agent_role: str,
        messages: Sequence[Message],
        params: GenerationParams,
        key: str = "",
    ) -> Completion:
        """Return one completion for ``messages``.

        ``key`` is the engine's logical call key. Live providers ignore it;
        the scripted provider uses it for lookup.
        """
        ...


def make_match_key(agent_role: str, messages: Sequence[Message]) -> str:
    """Stable content hash of a call: sha256 over role and message contents."""
    h = hashlib.sha256()
    h.update(agent_role.encode("utf-8"))
    for m in messages:
        h.update(b"\x1e")
        h.update(m.role.encode("utf-8"))
        h.update(b"\x1f")
        h.update(m.content.encode("utf-8"))
    return h.hexdigest()


def estimate_tokens(text: str) -> int:
    # rough 4-chars-per-token estimate, used only when a count is not supplied
    return (len(text) + 3) // 4
