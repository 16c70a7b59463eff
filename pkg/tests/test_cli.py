"""Command-line entry points, output files and exit codes."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import pytest

from anchorwork.cli import main
from anchorwork.core import CostLedger
from anchorwork.report import REPORT_COLUMNS, ModeStats, read_jsonl, read_report

DATA = Path(__file__).parent / "data"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def run_golden(capsys, out_dir, *extra):
    return run(
        capsys, "run", "--problems", DATA / "problems.jsonl", "--config", DATA / "config.json",
        "--script", DATA / "golden_script.jsonl", "--corpus", DATA / "corpus.jsonl", "--out", out_dir, *extra,
    )


def test_run_writes_all_outputs(tmp_path, capsys):
    code, _, err = run_golden(capsys, tmp_path / "a")
    assert code == 0, err
    names = {p.name for p in (tmp_path / "a").iterdir()}
    assert {"results.jsonl", "calls.jsonl", "events.jsonl", "manifest.json"} <= names
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["config"]["mode"] == "monitor" and manifest["runs"] == 1
    assert manifest["problems_digest"].startswith("sha256:") and len(manifest["problems_digest"]) == 71
    assert manifest["script_digest"]
    (row,) = read_jsonl(tmp_path / "a" / "results.jsonl")
    assert row["schema_version"] == 1 and row["injections"] == 2
    events = read_jsonl(tmp_path / "a" / "events.jsonl")
    assert [e["status"] for e in events].count("injected") == 2
    assert {"problem_id", "attempt", "seq", "mode"} <= set(events[0])
    calls = read_jsonl(tmp_path / "a" / "calls.jsonl")
    assert sum(c["agent_steps"] for c in calls) == row["ledger"]["agent_steps"]


def test_run_is_byte_identical_across_invocations(tmp_path, capsys):
    run_golden(capsys, tmp_path / "a")
    run_golden(capsys, tmp_path / "b")
    for name in ("results.jsonl", "events.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_run_mode_flag_overrides_config(tmp_path, capsys):
    code, _, _ = run_golden(capsys, tmp_path / "n", "--mode", "none", "--attempts", "5")
    assert code == 0
    rows = read_jsonl(tmp_path / "n" / "results.jsonl")
    assert [r["attempt"] for r in rows] == [0, 1, 2, 3, 4]
    assert all(r["mode"] == "none" and r["ledger"]["monitor_probes"] == 0 for r in rows)


def test_run_bad_config_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"k_proposer": 5}))
    code, _, err = run(capsys, "run", "--problems", DATA / "problems.jsonl", "--config", bad, "--out", tmp_path / "o")
    assert code == 2
    payload = json.loads(err.strip().splitlines()[-1])
    assert payload["error"] == "config" and payload["fields"][0]["field"] == "k_proposer"
    code, _, _ = run(capsys, "run", "--problems", tmp_path / "missing.jsonl", "--out", tmp_path / "o")
    assert code == 2
    code, _, _ = run(capsys, "run", "--nope")
    assert code == 2


def test_run_unreachable_endpoint_exits_3(tmp_path, capsys):
    code, _, err = run(
        capsys, "run", "--problems", DATA / "problems.jsonl", "--mode", "none", "--out", tmp_path / "o",
        "--base-url", "http://127.0.0.1:9/v1", "--retry-backoff", "0",
    )
    assert code == 3
    assert json.loads(err.strip().splitlines()[-1])["error"] == "run"
    (row,) = read_jsonl(tmp_path / "o" / "results.jsonl")
    assert row["error"]["provider"] is True


def write_corpus(path, lines):
    path.write_text("".join(lines))
    return path


def test_corpus_filter_counts(tmp_path, capsys):
    kw = tmp_path / "kw.json"
    kw.write_text(json.dumps({"positive": ["alpha", "beta", "gamma"], "negative": ["omega", "sigma"]}))
    docs = [
        {"id": "d1", "title": "", "body": "alpha beta gamma"},
        {"id": "d2", "title": "", "body": "omega sigma"},
        {"id": "d3", "title": "", "body": "alpha"},
        {"id": "d4", "title": "", "body": "omega"},
    ]
    src = write_corpus(tmp_path / "c.jsonl", [json.dumps(d) + "\n" for d in docs])
    code, out, _ = run(capsys, "corpus", "filter", src, "--keywords", kw, "--out", tmp_path / "kept.jsonl")
    assert code == 0
    assert json.loads(out) == {"input_count": 4, "kept_count": 2, "skipped_lines": 0}
    assert [d["id"] for d in read_jsonl(tmp_path / "kept.jsonl")] == ["d1", "d3"]

    empty = write_corpus(tmp_path / "e.jsonl", [])
    code, out, _ = run(capsys, "corpus", "filter", empty, "--out", tmp_path / "k2.jsonl")
    assert json.loads(out) == {"input_count": 0, "kept_count": 0, "skipped_lines": 0}

    corrupt = write_corpus(tmp_path / "x.jsonl", [json.dumps(docs[0]) + "\n", "{not json\n"])
    code, out, _ = run(capsys, "corpus", "filter", corrupt, "--keywords", kw, "--out", tmp_path / "k3.jsonl")
    assert code == 0 and json.loads(out) == {"input_count": 1, "kept_count": 1, "skipped_lines": 1}


def test_corpus_index_and_summarize(tmp_path, capsys):
    code, out, _ = run(capsys, "corpus", "index", DATA / "corpus.jsonl", "--out", tmp_path / "index.json")
    assert code == 0 and json.loads(out)["chunks"] == 3
    code, _, _ = run_golden(capsys, tmp_path / "r", "--index", tmp_path / "index.json")
    assert code == 0
    script = tmp_path / "s.jsonl"
    script.write_text(json.dumps({"agent_role": "summarizer", "match_key": "*", "response": "- point"}) + "\n")
    code, out, _ = run(capsys, "corpus", "summarize", DATA / "corpus.jsonl", "--script", script, "--out", tmp_path / "sum.jsonl")
    assert code == 0
    assert [d["body"] for d in read_jsonl(tmp_path / "sum.jsonl")] == ["- point"] * 3


def test_judge_command(tmp_path, capsys):
    run_golden(capsys, tmp_path / "r", "--attempts", "5")
    verdict = {"extracted_final_answer": "42", "reasoning": "same", "correct": "yes", "confidence": "95"}
    script = tmp_path / "judge.jsonl"
    script.write_text(json.dumps({"agent_role": "judge", "match_key": "*", "response": json.dumps(verdict)}) + "\n")
    code, out, _ = run(
        capsys, "judge", "--results", tmp_path / "r" / "results.jsonl", "--problems", DATA / "problems.jsonl",
        "--script", script, "--out", tmp_path / "j",
    )
    assert code == 0
    assert json.loads(out) == {"problems": 1, "pass@1": 1.0, "pass@5": 1.0}
    rows = read_jsonl(tmp_path / "j" / "verdicts.jsonl")
    assert len(rows) == 5 and all(r["correct"] for r in rows)
    with open(tmp_path / "j" / "summary.csv", newline="") as fh:
        (summary,) = list(csv.DictReader(fh))
    assert summary["pass1"] == "1" and summary["pass5"] == "1"


def test_report_command(tmp_path, capsys):
    run_golden(capsys, tmp_path / "res" / "monitor")
    run_golden(capsys, tmp_path / "res" / "none", "--mode", "none")
    code, out, _ = run(capsys, "report", tmp_path / "res")
    assert code == 0
    rows = read_report(tmp_path / "res" / "report.csv")
    assert list(rows[0]) == list(REPORT_COLUMNS)
    assert [r["mode"] for r in rows] == ["monitor", "none"]
    none = rows[1]
    assert none["injections"] == "0" and float(none["triggers_per_10k_chars"]) == 0.0
    assert float(rows[0]["identity_delta"]) <= 0.01
    assert out == (tmp_path / "res" / "report.csv").read_text()
    code, _, _ = run(capsys, "report", tmp_path / "empty")
    assert code == 2


def test_report_rates_reproduce_reference_figures():
    stats = ModeStats("monitor", 1, CostLedger(injected_tokens=64125, chars_generated=1_000_000), 364)
    assert stats.triggers_per_10k_chars == pytest.approx(3.64, abs=1e-12)
    assert stats.tokens_per_trigger == pytest.approx(176.167, abs=1e-3)
    assert stats.injected_tokens_per_10k_chars == pytest.approx(641.25, abs=1e-12)
    assert stats.identity_delta <= 1e-9
    assert abs(3.64 * 176.17 - 641.25) <= 0.01
    zero = ModeStats("none", 1, CostLedger(chars_generated=500), 0)
    assert (zero.triggers_per_10k_chars, zero.tokens_per_trigger, zero.injected_tokens_per_10k_chars) == (0.0, 0.0, 0.0)
