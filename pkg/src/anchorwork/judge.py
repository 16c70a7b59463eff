"""Benchmark judging: answer extraction, auto-judge, graded scores, pass@k and slope fits."""
from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import asdict, dataclass
from itertools import combinations
from typing import Optional, Sequence

from .provider import GenerationParams, Provider, ProviderError, assistant, load_template, render_prompt, user

log = logging.getLogger(__name__)

# reference slopes of accuracy on consistency reported for the two task families;
# they come from live LLM grading and are documented, never asserted
REFERENCE_SLOPES = {"retrieval": 0.369, "reasoning": 0.851}

_ANSWER = re.compile(r"<answer>(.*?)</answer>", re.DOTALL)
_NUMBER = re.compile(r"[-+]?\d*\.?\d+(?:[eE][-+]?\d+)?")


class JudgeError(ValueError):
    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


def _boxed(content: str) -> Optional[str]:
    start = content.rfind("\\boxed{")
    if start < 0:
        return None
    i = start + len("\\boxed{")
    depth = 1
    for j in range(i, len(content)):
        if content[j] == "{":
            depth += 1
        elif content[j] == "}":
            depth -= 1
            if depth == 0:
                return content[i:j]
    return content[i:]


def extract_final_answer(text: str) -> Optional[str]:
    """Content of the last ``<answer>`` block, unwrapped from ``\\boxed{}`` if present."""
    blocks = _ANSWER.findall(text or "")
    if not blocks:
        return None
    content = blocks[-1]
    boxed = _boxed(content)
    return (boxed if boxed is not None else content).strip()


@dataclass(frozen=True)
class Verdict:
    extracted_final_answer: Optional[str]
    reasoning: str
    correct: bool
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 100.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 100]")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ScoredPair:
    consistency: float
    accuracy: float

    def __post_init__(self):
        for name in ("consistency", "accuracy"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} {v} outside [0, 1]")


def _json_object(text: str):
    for candidate in (text.strip(), *re.findall(r"\{.*\}", text, re.DOTALL)):
        try:
            return json.loads(candidate)
        except (json.JSONDecodeError, ValueError):
            continue
    return None


def parse_verdict(text: str) -> Optional[Verdict]:
    data = _json_object(text)
    if not isinstance(data, dict):
        return None
    correct = str(data.get("correct", "")).strip().lower()
    if correct not in ("yes", "no"):
        return None
    raw_conf = data.get("confidence")
    if raw_conf is None or str(raw_conf).strip() in ("", "..."):
        confidence = 100.0
    else:
        m = _NUMBER.search(str(raw_conf))
        if not m:
            return None
        confidence = min(100.0, max(0.0, float(m.group(0))))
    extracted = data.get("extracted_final_answer")
    if extracted is not None:
        extracted = str(extracted)
        if extracted.strip() == "None":
            extracted = None
    return Verdict(extracted, str(data.get("reasoning", "")), correct == "yes", confidence)


def _clamp_unit(value: float, what: str) -> float:
    if value < 0.0 or value > 1.0:
        log.warning("%s %.4g outside [0, 1]; clamped", what, value)
        return min(1.0, max(0.0, value))
    return value


class Judge:
    """Runs the grading prompts against any provider (normally a scripted one offline)."""

    def __init__(self, provider: Provider, params: Optional[GenerationParams] = None):
        self.provider = provider
        self.params = params or GenerationParams(temperature=0.0, max_tokens=4096, model="o3-mini")

    def _ask_twice(self, template_id: str, bindings: dict, key: str, parse):
        messages = [user(render_prompt(template_id, bindings))]
        out = self.provider.complete("judge", messages, self.params, key)
        parsed = parse(out.text)
        if parsed is None:
            messages = messages + [assistant(out.text), user(load_template("format_retry"))]
            out = self.provider.complete("judge", messages, self.params, f"{key}/retry")
            parsed = parse(out.text)
            if parsed is None:
                raise JudgeError(f"unparseable {template_id} output at {key}", out.text)
        return parsed

    def auto_judge(self, question: str, response: str, gold: str, key: str = "judge") -> Verdict:
        if not gold:
            raise ValueError("gold answer must be non-empty")
        bindings = {"question": question, "response": response, "correct_answer": gold}
        return self._ask_twice("judge", bindings, key, parse_verdict)

    def score_accuracy(
        self,
        question: str,
        gold: str,
        rationale: str,
        finals: Sequence[Optional[str]],
        responses: Sequence[str],
        key: str = "accuracy",
    ) -> list[float]:
        """Graded accuracy in [0, 1] for up to five responses, in input order."""
        if len(finals) != len(responses):
            raise ValueError("finals and responses must have the same length")
        if len(responses) > 5:
            raise ValueError("at most five responses per grading batch")
        bindings = {
            "q": question,
            "gt": gold,
            "r": rationale or "",
            "final_items": json.dumps([f if f is not None else "" for f in finals], ensure_ascii=False),
            "resp_items": json.dumps(list(responses), ensure_ascii=False),
        }
        out = self.provider.complete("judge", [user(render_prompt("accuracy", bindings))], self.params, key)
        data = _json_object(out.text)
        items = data.get("items") if isinstance(data, dict) else None
        if not isinstance(items, list) or len(items) != len(responses):
            raise JudgeError(f"malformed accuracy output at {key}", out.text)
        scores = []
        for item in items:
            try:
                value = float(item["accuracy"])
            except (KeyError, TypeError, ValueError) as exc:
                raise JudgeError(f"malformed accuracy item at {key}: {exc}", out.text) from exc
            if math.isnan(value):
                raise JudgeError(f"NaN accuracy at {key}", out.text)
            scores.append(_clamp_unit(value, "accuracy"))
        return scores

    def score_consistency(self, a: str, b: str, key: str = "consistency") -> float:
        if not a or not b:
            raise ValueError("both solutions must be non-empty")

        def parse(text: str) -> Optional[float]:
            m = _NUMBER.search(text)
            return float(m.group(0)) if m else None

        value = self._ask_twice("consistency", {"solution1": a, "solution2": b}, key, parse)
        return _clamp_unit(value, "consistency")

    def mean_pairwise_consistency(self, solutions: Sequence[str], key: str = "consistency") -> float:
        """Average consistency over all unordered pairs; one grader call per pair."""
        if len(solutions) < 2:
            raise ValueError("need at least two solutions")
        scores = [
            self.score_consistency(solutions[i], solutions[j], f"{key}/{i}-{j}")
            for i, j in combinations(range(len(solutions)), 2)
        ]
        return sum(scores) / len(scores)


def pass_at_k(verdicts: Sequence[Sequence[bool]], k: int) -> float:
    """Fraction of problems with at least one correct verdict among their first ``k`` attempts."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not verdicts:
        raise ValueError("no problems to score")
    for i, attempts in enumerate(verdicts):
        if len(attempts) < k:
            raise ValueError(f"problem {i} has {len(attempts)} attempts, fewer than k={k}")
    return sum(any(a[:k]) for a in verdicts) / len(verdicts)


def fit_slope(points: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """Ordinary least squares line through (x, y) points: returns (slope, intercept)."""
    if len(points) < 2:
        raise ValueError("need at least two points")
    n = len(points)
    mx = sum(p[0] for p in points) / n
    my = sum(p[1] for p in points) / n
    sxx = sum((x - mx) ** 2 for x, _ in points)
    if sxx == 0.0:
        raise ValueError("all x values are equal; slope undefined")
    sxy = sum((x - mx) * (y - my) for x, y in points)
    slope = sxy / sxx
    return slope, my - slope * mx


def slopes_by_category(rows: Sequence[tuple[str, ScoredPair]]) -> dict[str, tuple[float, float]]:
    """Fit accuracy against consistency separately for each task category."""
    groups: dict[str, list[tuple[float, float]]] = {}
    for category, pair in rows:
        groups.setdefault(category, []).append((pair.consistency, pair.accuracy))
    return {cat: fit_slope(pts) for cat, pts in sorted(groups.items()) if len(pts) >= 2}


__all__ = [
    "REFERENCE_SLOPES",
    "Judge",
    "JudgeError",
    "ProviderError",
    "ScoredPair",
    "Verdict",
    "extract_final_answer",
    "fit_slope",
    "parse_verdict",
    "pass_at_k",
    "slopes_by_category",
]
