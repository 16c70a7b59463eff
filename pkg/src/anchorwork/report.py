"""Results files and the tool-tax report.

Line-delimited JSON is written with sorted keys and compact separators so
repeated scripted runs give byte-identical files. Every writer goes through a
temporary file and ``os.replace``.
"""
from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .core import CostLedger, sum_ledgers
from .orchestrator import SCHEMA_VERSION, BatchResult, RunFailure, RunOutcome, outcome_from_dict

RESULTS = "results.jsonl"
CALLS = "calls.jsonl"
EVENTS = "events.jsonl"
MANIFEST = "manifest.json"
REPORT = "report.csv"

REPORT_COLUMNS = (
    "mode",
    "runs",
    "total_tokens_k",
    "agent_steps",
    "monitor_probes",
    "retrieval_calls",
    "injections",
    "triggers_per_10k_chars",
    "tokens_per_trigger",
    "injected_tokens_per_10k_chars",
    "identity_product",
    "identity_delta",
)


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def jsonl_text(rows: Iterable[dict]) -> str:
    return "".join(dumps(r) + "\n" for r in rows)


def read_jsonl(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def read_jsonl_lenient(path) -> tuple[list[dict], int]:
    """Parsed objects and the number of lines that were not JSON objects."""
    rows, bad = [], 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                bad += 1
                continue
            if isinstance(obj, dict):
                rows.append(obj)
            else:
                bad += 1
    return rows, bad


def result_rows(results: Sequence[BatchResult]) -> list[dict]:
    return [r.to_dict() for r in results]


def call_rows(results: Sequence[BatchResult], include_timing: bool = True) -> list[dict]:
    rows = []
    for r in results:
        if isinstance(r, RunOutcome):
            for seq, c in enumerate(r.calls):
                rows.append({"problem_id": r.problem_id, "attempt": r.attempt, "seq": seq, **c.to_dict(include_timing)})
    return rows


def event_rows(results: Sequence[BatchResult]) -> list[dict]:
    rows = []
    for r in results:
        if isinstance(r, RunOutcome):
            for seq, e in enumerate(r.trigger_events):
                rows.append({"problem_id": r.problem_id, "attempt": r.attempt, "seq": seq, "mode": r.mode.value, **e.to_dict()})
    return rows


def write_results(out_dir, results: Sequence[BatchResult]) -> dict[str, Path]:
    """Write results, calls and events files; returns their paths."""
    out_dir = Path(out_dir)
    paths = {name: out_dir / name for name in (RESULTS, CALLS, EVENTS)}
    atomic_write(paths[RESULTS], jsonl_text(result_rows(results)))
    atomic_write(paths[CALLS], jsonl_text(call_rows(results)))
    atomic_write(paths[EVENTS], jsonl_text(event_rows(results)))
    return paths


def read_results(path) -> list[BatchResult]:
    out = []
    for d in read_jsonl(path):
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {d.get('schema_version')!r} in {path}")
        out.append(outcome_from_dict(d))
    return out


@dataclass(frozen=True)
class ModeStats:
    """Aggregated cost of all runs in one mode."""

    mode: str
    runs: int
    ledger: CostLedger
    injections: int

    @property
    def triggers_per_10k_chars(self) -> float:
        chars = self.ledger.chars_generated
        return self.injections * 1e4 / chars if chars else 0.0

    @property
    def tokens_per_trigger(self) -> float:
        return self.ledger.injected_tokens / self.injections if self.injections else 0.0

    @property
    def injected_tokens_per_10k_chars(self) -> float:
        chars = self.ledger.chars_generated
        return self.ledger.injected_tokens * 1e4 / chars if chars else 0.0

    @property
    def identity_product(self) -> float:
        return self.triggers_per_10k_chars * self.tokens_per_trigger

    @property
    def identity_delta(self) -> float:
        return abs(self.identity_product - self.injected_tokens_per_10k_chars)

    def row(self) -> dict:
        return {
            "mode": self.mode,
            "runs": self.runs,
            "total_tokens_k": f"{self.ledger.total_tokens / 1000:.3f}",
            "agent_steps": self.ledger.agent_steps,
            "monitor_probes": self.ledger.monitor_probes,
            "retrieval_calls": self.ledger.retrieval_calls,
            "injections": self.injections,
            "triggers_per_10k_chars": f"{self.triggers_per_10k_chars:.6f}",
            "tokens_per_trigger": f"{self.tokens_per_trigger:.6f}",
            "injected_tokens_per_10k_chars": f"{self.injected_tokens_per_10k_chars:.6f}",
            "identity_product": f"{self.identity_product:.6f}",
            "identity_delta": f"{self.identity_delta:.6f}",
        }


def mode_stats(outcomes: Iterable[RunOutcome]) -> list[ModeStats]:
    """One entry per mode present, sorted by mode name; failures are skipped."""
    groups: dict[str, list[RunOutcome]] = {}
    for o in outcomes:
        if isinstance(o, RunFailure):
            continue
        groups.setdefault(o.mode.value, []).append(o)
    return [
        ModeStats(mode, len(runs), sum_ledgers(r.ledger for r in runs), sum(r.injections for r in runs))
        for mode, runs in sorted(groups.items())
    ]


def report_csv(stats: Sequence[ModeStats]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for s in stats:
        writer.writerow(s.row())
    return buf.getvalue()


def read_report(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def write_report(results_dir, out_path=None) -> Path:
    """Build report.csv from every results file under ``results_dir``.

    ``results_dir`` may hold a results.jsonl directly or one per
    subdirectory (for example one per mode).
    """
    results_dir = Path(results_dir)
    files = sorted(results_dir.glob(RESULTS)) + sorted(results_dir.glob(f"*/{RESULTS}"))
    if not files:
        raise FileNotFoundError(f"no {RESULTS} under {results_dir}")
    outcomes = [r for f in files for r in read_results(f)]
    out_path = Path(out_path) if out_path else results_dir / REPORT
    atomic_write(out_path, report_csv(mode_stats(outcomes)))
    return out_path


__all__ = [
    "CALLS",
    "EVENTS",
    "MANIFEST",
    "REPORT",
    "REPORT_COLUMNS",
    "RESULTS",
    "ModeStats",
    "atomic_write",
    "call_rows",
    "dumps",
    "event_rows",
    "jsonl_text",
    "mode_stats",
    "read_jsonl",
    "read_jsonl_lenient",
    "read_report",
    "read_results",
    "report_csv",
    "result_rows",
    "write_report",
    "write_results",
]
