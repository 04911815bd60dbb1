#!/usr/bin/env python3
"""Record the full demo pipeline into a replay session file.

Runs index, reason-bank build, all three methods, evaluation, and the
ablation grid against the scripted mock backend, recording every chat
request into the session file named by the config. Afterwards the same
config can be run with `--backend replay` and zero scripted replies.
"""

from __future__ import annotations

import argparse
import sys

from medcorr.cli import main as medcorr


def run(config: str) -> int:
    steps = [
        ["index", "--config", config],
        ["reasons", "build", "--config", config],
        ["run", "cot", "--config", config],
        ["run", "reason", "--config", config],
        ["run", "ensemble", "--config", config],
        ["ablate", "--config", config, "--shots", "2,3,4,5", "--cot", "both"],
    ]
    for step in steps:
        print(f"$ medcorr {' '.join(step)}")
        rc = medcorr(step)
        if rc != 0:
            return rc
    return 0


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default="configs/demo.json")
    args = parser.parse_args()
    sys.exit(run(args.config))


if __name__ == "__main__":
    main()
