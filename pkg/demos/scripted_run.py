"""Solve one problem end to end against a scripted provider.

Run from the repository root:  python3 demos/scripted_run.py
"""
from __future__ import annotations

from pathlib import Path

from anchorwork import LexicalIndex, Problem, ScriptedProvider, WorkflowConfig, solve
from anchorwork.cli import load_documents

DATA = Path(__file__).resolve().parent.parent / "tests" / "data"


def main() -> None:
    docs, _ = load_documents(DATA / "corpus.jsonl")
    index = LexicalIndex.build(docs)
    provider = ScriptedProvider.from_jsonl(DATA / "golden_script.jsonl")
    problem = Problem("p1", "What is theta for the sample?", "42")

    out = solve(problem, WorkflowConfig(mode="monitor", seed=7), provider, index)

    print(f"final answer: {out.final.final_answer} (slot {out.final.slot}, {out.final.stage.value})")
    for state in out.qair_states:
        print(f"quality round {state.round}: evaluated {len(state.evaluated)}, failed {state.failed}")
    for event in out.trigger_events:
        if event.status == "injected":
            print(f"injected at {event.key}: {event.injection.strip()[:80]}...")
    for name, value in out.ledger.to_dict().items():
        print(f"  {name:16} {value}")


if __name__ == "__main__":
    main()
