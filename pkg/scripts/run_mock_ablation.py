"""Offline ablation sweep: full pipeline plus every ablation variant on the demo goals.

Runs against the simulated mock responder by default, so it needs no network.
Pass ``--config configs/openai_mini.yaml`` (with EDUAGENT_API_KEY set) for a real run.

    python3 scripts/run_mock_ablation.py --out runs/ablation
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from qgflow.cli import main as qgflow
from qgflow.orchestrator import ABLATIONS

ROOT = Path(__file__).resolve().parents[1]


def run(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--goals", default=str(ROOT / "configs" / "goals_demo.jsonl"))
    ap.add_argument("--config", default=str(ROOT / "configs" / "mock.yaml"))
    ap.add_argument("--out", default="runs/ablation")
    ap.add_argument("--samples", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    out = Path(args.out)
    rc = qgflow([
        "ablate", args.goals, "--config", args.config, "--out", str(out),
        "--ablations", ",".join(ABLATIONS), "--samples", str(args.samples), "--seed", str(args.seed),
    ])
    if rc == 2:
        return rc
    # per-variant diversity so the table has something beyond status counts
    variants = ["full", *ABLATIONS]
    rc_eval = qgflow([
        "eval", args.goals, "--config", args.config, "--out", str(out / "eval"),
        "--methods", *[str(out / v) for v in variants], "--diversity", "--seed", str(args.seed),
    ])
    with open(out / "ablation_table.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    print()
    for row in rows:
        print(f"{row['variant']:<20} accepted={row['accepted']:>3} best_effort={row['best_effort']:>3} "
              f"failed={row['failed']:>3} cost=${float(row['cost_usd']):.5f}")
    return max(rc, rc_eval)


if __name__ == "__main__":
    sys.exit(run())
