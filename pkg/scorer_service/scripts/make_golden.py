#!/usr/bin/env python3
"""Regenerate tests/golden_scores.json for the pinned scorer models.

Run this only when a model version is deliberately bumped; the test suite
asserts the recorded values at 1e-4.
"""

from __future__ import annotations

import json
from pathlib import Path

from scorer_service.config import ServiceConfig
from scorer_service.scorers import build_scorer

FIXTURE_PAIRS = [
    ["start insulin at bedtime", "start insulin at bedtime"],
    ["start insulin at bedtime", "start insulin in the morning"],
    ["the patient has sepsis", "the patient has pneumonia"],
    ["amoxicillin 500 mg three times daily", "amoxicillin 250 mg twice daily"],
    ["urgent ct of the head", "routine outpatient review"],
    ["no further imaging is needed", "a repeat chest radiograph in six weeks"],
    ["", ""],
    ["some words", ""],
]


def main() -> None:
    config = ServiceConfig()
    golden = {
        "models": {"bertscore": config.bertscore_model,
                   "bleurt": config.bleurt_model},
        "pairs": FIXTURE_PAIRS,
        "scores": {},
    }
    for metric in ("bertscore", "bleurt"):
        scorer = build_scorer(metric, golden["models"][metric])
        golden["scores"][metric] = scorer.score_batch(
            [tuple(p) for p in FIXTURE_PAIRS])
    out = Path(__file__).resolve().parent.parent / "tests" / "golden_scores.json"
    out.write_text(json.dumps(golden, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
