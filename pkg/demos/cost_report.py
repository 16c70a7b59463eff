"""Run the scripted fixture in all three modes and print the cost report.

Writes into a temporary directory through the same code path as
``anchorwork run`` and ``anchorwork report``.
"""
from __future__ import annotations

import tempfile
from pathlib import Path

from anchorwork.cli import main as cli

DATA = Path(__file__).resolve().parent.parent / "tests" / "data"


def main() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        for mode in ("none", "explicit", "monitor"):
            cli([
                "run", "--problems", str(DATA / "problems.jsonl"), "--config", str(DATA / "config.json"),
                "--mode", mode, "--script", str(DATA / "golden_script.jsonl"),
                "--corpus", str(DATA / "corpus.jsonl"), "--out", str(Path(tmp) / mode),
            ])
        cli(["report", tmp])


if __name__ == "__main__":
    main()
