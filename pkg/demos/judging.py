"""Grade answers with a scripted judge and compute pass@k and a slope fit."""
from __future__ import annotations

import json

from anchorwork.judge import Judge, extract_final_answer, fit_slope, pass_at_k
from anchorwork.provider import ScriptedProvider, ScriptEntry


def main() -> None:
    verdict = {"extracted_final_answer": "42", "reasoning": "matches", "correct": "yes", "confidence": "90"}
    judge = Judge(ScriptedProvider([ScriptEntry("judge", "*", json.dumps(verdict))]))
    response = "theta = 4 Ne mu, so <answer>\\boxed{42}</answer>"
    print("extracted:", extract_final_answer(response))
    print("verdict:", judge.auto_judge("What is theta?", response, "42").to_dict())

    attempts = [[False, False, True, False, False], [True] * 5, [False] * 5]
    for k in (1, 3, 5):
        print(f"pass@{k} = {pass_at_k(attempts, k):.3f}")

    slope, intercept = fit_slope([(0.2, 0.3), (0.5, 0.45), (0.9, 0.8)])
    print(f"accuracy ~ {slope:.3f} * consistency + {intercept:.3f}")


if __name__ == "__main__":
    main()
