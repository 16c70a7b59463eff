"""Multi-agent solve pipeline with implicit retrieval, anchor rotation and quality-gated revision."""
from __future__ import annotations

__version__ = "0.1.0"

from .core import (
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
from .judge import Judge, ScoredPair, Verdict, extract_final_answer, fit_slope, pass_at_k
from .monitor import Monitor, TriggerEvent, Window, windows
from .orchestrator import RunFailure, RunOutcome, recount_steps, run_batch, solve
from .provider import ChatCompletionProvider, Message, ScriptedProvider, ScriptEntry, make_match_key, render_prompt
from .retrieval import Document, Evidence, HashingEmbedder, KeywordProfile, LexicalIndex, WebStub, filter_corpus, keep_document
from .tools import ToolCall, execute_tool_block

__all__ = [
    "Candidate",
    "ChatCompletionProvider",
    "ConfigError",
    "CostLedger",
    "Document",
    "Evidence",
    "HashingEmbedder",
    "Judge",
    "KeywordProfile",
    "LexicalIndex",
    "Message",
    "Mode",
    "Monitor",
    "Problem",
    "QualityReport",
    "RunFailure",
    "RunOutcome",
    "ScoreDomainError",
    "ScoredPair",
    "ScriptEntry",
    "ScriptedProvider",
    "Stage",
    "ToolCall",
    "TriggerEvent",
    "Verdict",
    "WebStub",
    "Window",
    "WorkflowConfig",
    "composite_score",
    "execute_tool_block",
    "extract_final_answer",
    "filter_corpus",
    "fit_slope",
    "keep_document",
    "make_match_key",
    "merge_ledgers",
    "pass_at_k",
    "passes_threshold",
    "recount_steps",
    "render_prompt",
    "run_batch",
    "solve",
    "windows",
]
