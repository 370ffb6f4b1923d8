"""Single-call baseline vs the full agent loop: diversity, goal consistency, pairwise win rate.

    python3 scripts/run_baseline_comparison.py --out runs/compare
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from qgflow.cli import main as qgflow

ROOT = Path(__file__).resolve().parents[1]


def run(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--goals", default=str(ROOT / "configs" / "goals_demo.jsonl"))
    ap.add_argument("--config", default=str(ROOT / "configs" / "mock.yaml"))
    ap.add_argument("--out", default="runs/compare")
    ap.add_argument("--samples", type=int, default=3)
    ap.add_argument("--judges", default="", help="comma list of judge models; default is the config model")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    out = Path(args.out)
    common = ["--config", args.config, "--samples", str(args.samples), "--seed", str(args.seed)]
    rcs = [
        qgflow(["generate", args.goals, "--out", str(out / "baseline"), "--baseline", *common]),
        qgflow(["generate", args.goals, "--out", str(out / "agents"), *common]),
    ]
    if 2 in rcs:
        return 2
    judge = ["--judges", args.judges] if args.judges else []
    rcs.append(qgflow([
        "eval", args.goals, "--config", args.config, "--out", str(out / "eval"), "--seed", str(args.seed),
        "--methods", str(out / "baseline"), str(out / "agents"),
        "--diversity", "--consistency", "--winrate", *judge,
    ]))
    print(f"\nreports in {out / 'eval'}")
    return max(rcs)


if __name__ == "__main__":
    sys.exit(run())
