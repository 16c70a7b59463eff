"""Command line: ``anchorwork run | corpus | judge | report``.

Exit codes: 0 ok, 2 usage or config problem, 3 provider failure, 4 internal error.
Errors are printed to stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .core import ConfigError, Problem, WorkflowConfig
from .judge import Judge, JudgeError, pass_at_k
from .orchestrator import RunFailure, RunOutcome, run_batch
from .provider import ChatCompletionProvider, GenerationParams, ProviderError, ScriptedProvider, render_prompt, user
from .report import (
    MANIFEST,
    atomic_write,
    dumps,
    jsonl_text,
    read_jsonl_lenient,
    read_results,
    write_report,
    write_results,
)
from .retrieval import Document, KeywordProfile, LexicalIndex, filter_corpus
from .runtime import thread_mapper

log = logging.getLogger("anchorwork")

OK, USAGE, PROVIDER, INTERNAL = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _fail(code: int, kind: str, message: str, **extra) -> int:
    print(dumps({"error": kind, "message": message, **extra}), file=sys.stderr)
    return code


def digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return "sha256:" + h.hexdigest()


def load_problems(path) -> list[Problem]:
    problems = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                problems.append(Problem.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise UsageError(f"{path}:{lineno}: bad problem: {exc}") from exc
    return problems


def load_config(path: Optional[str], mode: Optional[str]) -> WorkflowConfig:
    data = {}
    if path:
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise UsageError(f"{path}: not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise UsageError(f"{path}: config must be a JSON object")
    if mode:
        data["mode"] = mode  # the flag wins over the file
    return WorkflowConfig.from_dict(data)


def load_documents(path) -> tuple[list[Document], int]:
    rows, bad = read_jsonl_lenient(path)
    docs = []
    for row in rows:
        try:
            docs.append(Document.from_dict(row))
        except (KeyError, TypeError, ValueError) as exc:
            log.warning("skipping corpus record: %s", exc)
            bad += 1
    if bad:
        log.warning("%s: skipped %d malformed line(s)", path, bad)
    return docs, bad


def make_provider(args, model: str):
    if getattr(args, "script", None):
        return ScriptedProvider.from_jsonl(args.script)
    return ChatCompletionProvider(
        model, base_url=args.base_url, max_in_flight=args.max_in_flight, backoff=args.retry_backoff
    )


def _index_for(args, chunk: int) -> Optional[LexicalIndex]:
    if args.index:
        return LexicalIndex.load(args.index)
    if args.corpus:
        docs, _ = load_documents(args.corpus)
        return LexicalIndex.build(docs, chunk)
    return None


def cmd_run(args) -> int:
    started = datetime.now(timezone.utc)
    config = load_config(args.config, args.mode)
    problems = load_problems(args.problems)
    index = _index_for(args, config.rag_chunk)
    provider = make_provider(args, config.model)
    results = run_batch(problems, config, provider, attempts=args.attempts, index=index)

    out = Path(args.out)
    write_results(out, results)
    failures = [r for r in results if isinstance(r, RunFailure)]
    manifest = {
        "schema_version": 1,
        "engine_version": __version__,
        "config": config.to_dict(),
        "attempts": args.attempts,
        "problems_file": str(args.problems),
        "problems_digest": digest(args.problems),
        "script_digest": digest(args.script) if args.script else None,
        "index_digest": digest(args.index) if args.index else (digest(args.corpus) if args.corpus else None),
        "runs": len(results),
        "failures": len(failures),
        "started_at": started.isoformat(),
        "finished_at": datetime.now(timezone.utc).isoformat(),
        "wall_time": {f"{r.problem_id}/{r.attempt}": round(r.wall_time, 6) for r in results if isinstance(r, RunOutcome)},
    }
    atomic_write(out / MANIFEST, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    if results and len(failures) == len(results):
        code = PROVIDER if any(f.provider_error for f in failures) else INTERNAL
        return _fail(code, "run", "every run failed", first=failures[0].to_dict()["error"])
    return OK


def cmd_corpus_filter(args) -> int:
    docs, bad = load_documents(args.corpus)
    profile = KeywordProfile.default()
    if args.keywords:
        with open(args.keywords, encoding="utf-8") as fh:
            kw = json.load(fh)
        profile = KeywordProfile(list(kw["positive"]), list(kw["negative"]))
    kept = filter_corpus(
        docs, profile, pos_threshold=args.pos_threshold, neg_threshold=args.neg_threshold, prefix_chars=args.prefix_chars
    )
    atomic_write(args.out, jsonl_text(d.to_dict() for d in kept))
    print(dumps({"input_count": len(docs), "kept_count": len(kept), "skipped_lines": bad}))
    return OK


def cmd_corpus_index(args) -> int:
    docs, bad = load_documents(args.corpus)
    index = LexicalIndex.build(docs, args.chunk)
    index.save(args.out)
    print(dumps({"documents": len(docs), "chunks": len(index), "skipped_lines": bad}))
    return OK


def cmd_corpus_summarize(args) -> int:
    docs, bad = load_documents(args.corpus)
    provider = make_provider(args, args.model)
    params = GenerationParams(temperature=0.0, max_tokens=4096, model=args.model)

    def one(doc: Document) -> dict:
        prompt = render_prompt("summarize", {"paper_content": f"{doc.title}\n\n{doc.body}"})
        out = provider.complete("summarizer", [user(prompt)], params, f"summarize/{doc.id}")
        return Document(doc.id, doc.title, out.text or doc.body).to_dict()

    rows = thread_mapper(args.max_in_flight)(one, docs)
    atomic_write(args.out, jsonl_text(rows))
    print(dumps({"documents": len(rows), "skipped_lines": bad}))
    return OK


def cmd_judge(args) -> int:
    problems = {p.id: p for p in load_problems(args.problems)}
    outcomes = [r for r in read_results(args.results) if isinstance(r, RunOutcome)]
    judge = Judge(make_provider(args, args.model), GenerationParams(temperature=0.0, max_tokens=4096, model=args.model))

    by_problem: dict[str, list[RunOutcome]] = {}
    for o in outcomes:
        if o.problem_id not in problems or not problems[o.problem_id].gold_answer:
            log.warning("no gold answer for %s; not judged", o.problem_id)
            continue
        by_problem.setdefault(o.problem_id, []).append(o)
    order = [pid for pid in problems if pid in by_problem]

    def judge_problem(pid: str):
        p = problems[pid]
        runs = sorted(by_problem[pid], key=lambda o: o.attempt)
        rows = []
        for o in runs:
            row = {"schema_version": 1, "problem_id": pid, "attempt": o.attempt}
            try:
                row.update(judge.auto_judge(p.prompt_text(), o.final.text, p.gold_answer, f"{pid}/{o.attempt}/judge").to_dict())
            except (JudgeError, ProviderError) as exc:
                row.update({"correct": False, "error": str(exc)})
            rows.append(row)
        consistency = None
        if args.graded:
            for start in range(0, len(runs), 5):
                batch = runs[start : start + 5]
                scores = judge.score_accuracy(
                    p.prompt_text(),
                    p.gold_answer,
                    "",
                    [o.final.final_answer for o in batch],
                    [o.final.text for o in batch],
                    f"{pid}/accuracy/{start // 5}",
                )
                for row, score in zip(rows[start : start + 5], scores):
                    row["accuracy"] = score
            if len(runs) >= 2:
                consistency = judge.mean_pairwise_consistency([o.final.text for o in runs], f"{pid}/consistency")
        return rows, consistency

    judged = thread_mapper(args.max_in_flight)(judge_problem, order)
    verdict_rows = [row for rows, _ in judged for row in rows]
    out = Path(args.out)
    atomic_write(out / "verdicts.jsonl", jsonl_text(verdict_rows))

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["problem_id", "pass1", "pass5", "mean_accuracy", "mean_consistency"])
    matrix = []
    for pid, (rows, consistency) in zip(order, judged):
        flags = [bool(r["correct"]) for r in rows]
        matrix.append(flags)
        acc = [r["accuracy"] for r in rows if "accuracy" in r]
        writer.writerow(
            [
                pid,
                int(pass_at_k([flags], 1)),
                int(pass_at_k([flags], 5)) if len(flags) >= 5 else "",
                f"{sum(acc) / len(acc):.6f}" if acc else "",
                f"{consistency:.6f}" if consistency is not None else "",
            ]
        )
    atomic_write(out / "summary.csv", buf.getvalue())
    summary = {"problems": len(matrix)}
    for k in (1, 5):
        if matrix and all(len(m) >= k for m in matrix):
            summary[f"pass@{k}"] = pass_at_k(matrix, k)
    print(dumps(summary))
    return OK


def cmd_report(args) -> int:
    path = write_report(args.results_dir, args.out)
    sys.stdout.write(Path(path).read_text(encoding="utf-8"))
    return OK


def _add_provider_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--script", help="replay responses from a script JSONL instead of calling an endpoint")
    p.add_argument("--base-url", help="chat-completion endpoint (default: $ANCHORWORK_BASE_URL)")
    p.add_argument("--max-in-flight", type=int, default=8, help="bound on concurrent requests")
    p.add_argument("--retry-backoff", type=float, default=1.0, help="seconds before the first transport retry")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anchorwork", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"anchorwork {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log warnings to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="solve a problems file")
    run.add_argument("--problems", required=True)
    run.add_argument("--config", help="JSON config file")
    run.add_argument("--mode", choices=["none", "explicit", "monitor"], help="overrides the config file")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--attempts", type=int, default=1)
    run.add_argument("--corpus", help="corpus JSONL to index for retrieval")
    run.add_argument("--index", help="prebuilt index JSON (takes precedence over --corpus)")
    _add_provider_args(run)
    run.set_defaults(func=cmd_run)

    corpus = sub.add_parser("corpus", help="filter, index or summarize a corpus")
    csub = corpus.add_subparsers(dest="corpus_command", required=True)
    filt = csub.add_parser("filter", help="keep documents close to the positive keywords")
    filt.add_argument("corpus")
    filt.add_argument("--out", required=True)
    filt.add_argument("--keywords", help="JSON {positive: [...], negative: [...]}")
    filt.add_argument("--pos-threshold", type=float, default=0.2)
    filt.add_argument("--neg-threshold", type=float, default=0.1)
    filt.add_argument("--prefix-chars", type=int, default=2000)
    filt.set_defaults(func=cmd_corpus_filter)
    idx = csub.add_parser("index", help="build the lexical index artifact")
    idx.add_argument("corpus")
    idx.add_argument("--out", required=True)
    idx.add_argument("--chunk", type=int, default=512)
    idx.set_defaults(func=cmd_corpus_index)
    summ = csub.add_parser("summarize", help="replace each body with bullet-point summaries")
    summ.add_argument("corpus")
    summ.add_argument("--out", required=True)
    summ.add_argument("--model", default="deepseek-v3.1")
    _add_provider_args(summ)
    summ.set_defaults(func=cmd_corpus_summarize)

    judge = sub.add_parser("judge", help="grade a results file against gold answers")
    judge.add_argument("--results", required=True)
    judge.add_argument("--problems", required=True)
    judge.add_argument("--out", required=True)
    judge.add_argument("--model", default="o3-mini")
    judge.add_argument("--graded", action="store_true", help="also score accuracy and pairwise consistency")
    _add_provider_args(judge)
    judge.set_defaults(func=cmd_judge)

    report = sub.add_parser("report", help="write report.csv from results files")
    report.add_argument("results_dir")
    report.add_argument("--out", help="default: <results_dir>/report.csv")
    report.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return OK if exc.code == 0 else USAGE
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail(USAGE, "config", str(exc), fields=[{"field": f, "message": m} for f, m in exc.problems])
    except (UsageError, FileNotFoundError, IsADirectoryError) as exc:
        return _fail(USAGE, "usage", str(exc))
    except ProviderError as exc:
        return _fail(PROVIDER, "provider", str(exc))
    except Exception as exc:  # anything else is a bug; report it machine-readably
        log.exception("internal error")
        return _fail(INTERNAL, "internal", f"{type(exc).__name__}: {exc}")


if __name__ == "__main__":
    sys.exit(main())
