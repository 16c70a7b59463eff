"""Domain types, quality-score arithmetic and the mergeable cost ledger."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from enum import Enum
from typing import Any, Mapping, Optional, Sequence

SCORE_MIN = 0.0
SCORE_MAX = 5.0
DEFAULT_WEIGHTS = (0.2, 0.6, 0.2)
COUNTER_MAX = 2**63 - 1


class ScoreDomainError(ValueError):
    """A quality score fell outside [0, 5]."""


class ConfigError(ValueError):
    """Invalid workflow configuration; ``problems`` holds (field, message) pairs."""

    def __init__(self, problems: Sequence[tuple[str, str]]):
        self.problems = list(problems)
        detail = "; ".join(f"{name}: {msg}" for name, msg in self.problems)
        super().__init__(f"invalid config: {detail}")


class Mode(str, Enum):
    NONE = "none"
    EXPLICIT = "explicit"
    MONITOR = "monitor"


class Stage(str, Enum):
    PROPOSED = "proposed"
    CORRECTED = "corrected"
    HSR_REFINED = "hsr_refined"
    QAIR_REVISED = "qair_revised"
    RANKED = "ranked"


@dataclass(frozen=True)
class Problem:
    id: str
    question: str
    gold_answer: Optional[str] = None
    choices: Optional[tuple[str, ...]] = None
    category: Optional[str] = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("problem id must be non-empty")
        if not self.question:
            raise ValueError(f"problem {self.id!r} has an empty question")
        if self.choices is not None and not isinstance(self.choices, tuple):
            object.__setattr__(self, "choices", tuple(self.choices))

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Problem":
        return cls(
            id=str(d["id"]),
            question=d["question"],
            gold_answer=d.get("answer", d.get("gold_answer")),
            choices=tuple(d["choices"]) if d.get("choices") else None,
            category=d.get("category"),
        )

    def prompt_text(self) -> str:
        """Question text with lettered choices appended, if any."""
        if not self.choices:
            return self.question
        letters = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
        opts = "\n".join(f"{letters[i]}. {c}" for i, c in enumerate(self.choices))
        return f"{self.question}\n\n{opts}"


@dataclass(frozen=True)
class Candidate:
    """One solution artifact and its lineage.

    ``slot`` is the proposer index the candidate descends from; it is the
    stable tie-breaker used by ranking.
    """

    id: str
    problem_id: str
    text: str
    slot: int
    stage: Stage = Stage.PROPOSED
    final_answer: Optional[str] = None
    anchor_of: Optional[str] = None
    reference_ids: tuple[str, ...] = ()
    parent_id: Optional[str] = None
    revision_round: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stage"] = self.stage.value
        d["reference_ids"] = list(self.reference_ids)
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Candidate":
        d = dict(d)
        d["stage"] = Stage(d["stage"])
        d["reference_ids"] = tuple(d.get("reference_ids", ()))
        return cls(**d)


def _check_score(name: str, value: float) -> None:
    if not (SCORE_MIN <= value <= SCORE_MAX) or math.isnan(value):
        raise ScoreDomainError(f"{name} score {value!r} outside [0, 5]")


def composite_score(
    logic: float,
    answer: float,
    explanation: float,
    weights: Sequence[float] = DEFAULT_WEIGHTS,
) -> float:
    """Weighted sum of the three quality dimensions.

    Scores must already be in [0, 5]; clamping belongs to the parser, so an
    out-of-range value here is a bug and raises :class:`ScoreDomainError`.
    """
    _check_score("logic", logic)
    _check_score("answer", answer)
    _check_score("explanation", explanation)
    w_logic, w_answer, w_expl = weights
    return w_logic * logic + w_answer * answer + w_expl * explanation


def passes_threshold(composite: float, tau: float) -> bool:
    # inclusive: a candidate "meeting" tau is retained
    return composite >= tau


@dataclass(frozen=True)
class QualityReport:
    logic: float
    answer: float
    explanation: float
    composite: float
    suggestion: str
    passed: bool

    @classmethod
    def build(
        cls,
        logic: float,
        answer: float,
        explanation: float,
        suggestion: str = "",
        tau: float = 3.0,
        weights: Sequence[float] = DEFAULT_WEIGHTS,
    ) -> "QualityReport":
        comp = composite_score(logic, answer, explanation, weights)
        return cls(logic, answer, explanation, comp, suggestion, passes_threshold(comp, tau))

    @classmethod
    def failed(cls, reason: str) -> "QualityReport":
        """Placeholder report for a candidate whose evaluation errored."""
        return cls(0.0, 0.0, 0.0, 0.0, reason, False)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "QualityReport":
        return cls(**d)


@dataclass(frozen=True)
class CostLedger:
    tokens_in: int = 0
    tokens_out: int = 0
    llm_calls: int = 0
    retrieval_calls: int = 0
    agent_steps: int = 0
    monitor_probes: int = 0
    injected_tokens: int = 0
    chars_generated: int = 0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if v < 0:
                raise ValueError(f"ledger field {f.name} is negative: {v}")
            if v > COUNTER_MAX:
                raise OverflowError(f"ledger field {f.name} exceeds 64-bit range")

    def __add__(self, other: "CostLedger") -> "CostLedger":
        return merge_ledgers(self, other)

    @property
    def total_tokens(self) -> int:
        return self.tokens_in + self.tokens_out

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "CostLedger":
        return cls(**{f.name: int(d.get(f.name, 0)) for f in fields(cls)})


ZERO_LEDGER = CostLedger()


def merge_ledgers(a: CostLedger, b: CostLedger) -> CostLedger:
    """Fieldwise sum; raises OverflowError instead of wrapping."""
    return CostLedger(**{f.name: getattr(a, f.name) + getattr(b, f.name) for f in fields(CostLedger)})


def sum_ledgers(ledgers) -> CostLedger:
    total = ZERO_LEDGER
    for led in ledgers:
        total = merge_ledgers(total, led)
    return total


_FIELD_TYPES = {
    "model": str,
    "monitor_model": str,
    "role_models": dict,
    "k_proposers": int,
    "temperature": float,
    "max_tokens": int,
    "rag_chunk": int,
    "rag_overlapping": int,
    "query_top_k": int,
    "max_rag": int,
    "tau": float,
    "weights": list,
    "t_max": int,
    "mode": str,
    "seed": int,
    "pre_correct": bool,
    "llm_ranker": bool,
    "tool_round_cap": int,
    "count_tool_rounds": bool,
    "flush_tail": bool,
    "max_workers": int,
}


def _type_ok(name: str, value: Any) -> bool:
    want = _FIELD_TYPES.get(name)
    if want is None:
        return True
    if want is bool:
        return isinstance(value, bool)
    if want is int:
        return isinstance(value, int) and not isinstance(value, bool)
    if want is float:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if want is list:
        return isinstance(value, (list, tuple))
    if want is str and name == "mode":
        return isinstance(value, (str, Mode))
    return isinstance(value, want)


@dataclass(frozen=True)
class WorkflowConfig:
    """Engine configuration; key names follow the hyperparameter table."""

    model: str = "deepseek-v3.1"
    monitor_model: str = "gpt-4.1-mini"
    role_models: Mapping[str, str] = field(default_factory=dict)
    k_proposers: int = 5
    temperature: float = 0.5
    max_tokens: int = 65536
    rag_chunk: int = 512
    rag_overlapping: int = 128
    query_top_k: int = 3
    max_rag: int = 2
    tau: float = 3.0
    weights: tuple[float, float, float] = DEFAULT_WEIGHTS
    t_max: int = 3
    mode: Mode = Mode.MONITOR
    seed: int = 0
    pre_correct: bool = True
    llm_ranker: bool = True
    tool_round_cap: int = 10
    count_tool_rounds: bool = True
    flush_tail: bool = True
    max_workers: int = 8

    def __post_init__(self):
        if not isinstance(self.mode, Mode):
            object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "role_models", dict(self.role_models))
        problems = self.check()
        if problems:
            raise ConfigError(problems)

    def check(self) -> list[tuple[str, str]]:
        out = []
        if self.k_proposers < 1:
            out.append(("k_proposers", "must be >= 1"))
        if self.temperature < 0:
            out.append(("temperature", "must be >= 0"))
        if self.max_tokens < 1:
            out.append(("max_tokens", "must be >= 1"))
        if not (0 < self.rag_overlapping < self.rag_chunk):
            out.append(("rag_overlapping", "need 0 < rag_overlapping < rag_chunk"))
        if self.query_top_k < 1:
            out.append(("query_top_k", "must be >= 1"))
        if self.max_rag < 0:
            out.append(("max_rag", "must be >= 0"))
        if not math.isfinite(self.tau):
            out.append(("tau", "must be finite"))
        if len(self.weights) != 3 or any(w < 0 for w in self.weights):
            out.append(("weights", "need three nonnegative weights"))
        elif abs(sum(self.weights) - 1.0) > 1e-9:
            out.append(("weights", "must sum to 1"))
        if self.t_max < 1:
            out.append(("t_max", "must be >= 1"))
        if self.tool_round_cap < 0:
            out.append(("tool_round_cap", "must be >= 0"))
        if self.max_workers < 1:
            out.append(("max_workers", "must be >= 1"))
        return out

    def model_for(self, role: str) -> str:
        if role in self.role_models:
            return self.role_models[role]
        return self.monitor_model if role == "monitor" else self.model

    def with_(self, **changes) -> "WorkflowConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mode"] = self.mode.value
        d["weights"] = list(self.weights)
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "WorkflowConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError([(k, "unknown key") for k in unknown])
        kwargs = dict(d)
        bad = [(k, f"expected {_FIELD_TYPES[k].__name__}, got {type(v).__name__}") for k, v in kwargs.items() if not _type_ok(k, v)]
        if bad:
            raise ConfigError(bad)
        if "mode" in kwargs:
            try:
                kwargs["mode"] = Mode(kwargs["mode"])
            except ValueError:
                raise ConfigError([("mode", f"expected one of none/explicit/monitor, got {kwargs['mode']!r}")])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError([("config", str(exc))]) from exc
