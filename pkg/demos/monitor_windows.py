"""Watch the monitor read a generation window by window and splice in evidence."""
from __future__ import annotations

from anchorwork import LexicalIndex, ScriptedProvider, WorkflowConfig
from anchorwork.monitor import Monitor, windows
from anchorwork.provider import ScriptEntry, user
from anchorwork.retrieval import Document
from anchorwork.runtime import Runtime, Trace

FRAME = "Wait a minute, by searching information about {rag_query}, I found that {rag_result}. "


def main() -> None:
    print("windows over 1000 chars:", [(w.start, w.end, w.is_tail) for w in windows(1000, 512, 128)])

    index = LexicalIndex.build([Document("d1", "Watterson", "watterson estimator: theta = 4 Ne mu")])
    script = [
        ScriptEntry("proposer", "*", segments=("x" * 600, "Using that, theta follows. ")),
        ScriptEntry("monitor", "w0", "yes"),
        ScriptEntry("monitor", "*", "no"),
        ScriptEntry("querier", "*", "watterson estimator"),
        ScriptEntry("injector", "*", FRAME, tokens_out=18),
    ]
    rt = Runtime(ScriptedProvider(script), WorkflowConfig(mode="monitor"), index, prefix="demo/0")
    trace = Trace()
    gen = Monitor(rt).generate(trace, "proposer", "proposer", [user("estimate theta")], "demo/0/c0/propose")

    for event in gen.events:
        print(f"{event.key}: [{event.window.start}, {event.window.end}) -> {event.status}")
    print("transcript tail:", gen.text[500:])
    print("probes", trace.ledger().monitor_probes, "retrievals", trace.ledger().retrieval_calls)


if __name__ == "__main__":
    main()
