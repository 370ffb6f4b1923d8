"""Command line entry point: ``qgflow {generate,ablate,eval,inspect}``.

Exit codes: 0 success, 1 at least one failed run, 2 configuration or input error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Sequence

from .config import RunConfig, build_agents, build_gateway, build_store, load_config, with_provider_kind
from .core import EducationalGoal, Question
from .errors import ConfigError, MisalignedOutputs, QGError
from .evaluation import (
    MethodSummary,
    average_diversity,
    judge_consistency,
    mean_consistency,
    winrate_matrix,
    write_reports,
)
from .gateway import ledger_report
from .metrics import OpenAICompatibleEmbedder, diversity_report
from .orchestrator import ABLATIONS, Pipeline, TerminalStatus

log = logging.getLogger("qgflow")

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


@dataclass(frozen=True)
class GoalRecord:
    goal_id: str
    goal: EducationalGoal
    gold: Question | None = None


def read_goals(path: str | Path) -> tuple[list[GoalRecord], bytes]:
    """Parse a JSONL goal file; any bad line is a config error."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read goal file {path}: {exc}") from exc
    records: list[GoalRecord] = []
    seen: set[str] = set()
    for lineno, line in enumerate(raw.decode("utf-8", errors="strict").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            goal = EducationalGoal.from_dict(rec)
            gold = Question.from_dict(rec["gold"]) if rec.get("gold") else None
        except (json.JSONDecodeError, ValueError, TypeError, AttributeError) as exc:
            raise ConfigError(f"{path}:{lineno}: bad goal record ({exc})") from exc
        goal_id = str(rec.get("id") or f"goal-{lineno}")
        if goal_id in seen:
            raise ConfigError(f"{path}:{lineno}: duplicate goal id {goal_id!r}")
        seen.add(goal_id)
        records.append(GoalRecord(goal_id, goal, gold))
    if not records:
        raise ConfigError(f"{path}: no goals")
    return records, raw


def _dump(path: Path, obj: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_manifest(out: Path, cfg: RunConfig, goal_file: str | None, raw: bytes | None, seed: int, started: str, **extra) -> None:
    _dump(
        out / "manifest.json",
        {
            "config": cfg.snapshot(),
            "goal_file": goal_file,
            "goal_file_sha256": hashlib.sha256(raw).hexdigest() if raw is not None else None,
            "output_dir": str(out),
            "seed": seed,
            "started_at": started,
            "finished_at": _now(),
            **extra,
        },
    )


def _parse_ablations(text: str | None) -> list[str]:
    names = [a.strip() for a in (text or "").split(",") if a.strip()]
    bad = [a for a in names if a not in ABLATIONS]
    if bad:
        raise ConfigError(f"unknown ablation(s) {', '.join(bad)}; valid names: {', '.join(ABLATIONS)}")
    return names


# --- generate -------------------------------------------------------------------


def generate_into(
    out: Path,
    goals: list[GoalRecord],
    raw: bytes,
    goal_file: str,
    cfg: RunConfig,
    seed: int,
    parallelism: int,
    samples: int = 1,
    baseline: bool = False,
    provider: Any = None,
) -> dict[str, Any]:
    started = _now()
    gateway = build_gateway(cfg, seed, provider=provider)
    pipeline = Pipeline(build_agents(cfg, gateway), build_store(cfg), cfg.pipeline)
    run_ids = [g.goal_id if samples == 1 else f"{g.goal_id}#{k}" for g in goals for k in range(samples)]
    flat_goals = [g.goal for g in goals for _ in range(samples)]
    if baseline:
        outcomes = [pipeline.run_baseline(g, rid) for g, rid in zip(flat_goals, run_ids)]
    else:
        outcomes = pipeline.run_batch(flat_goals, parallelism, run_ids)
    counts = {s.value: 0 for s in TerminalStatus}
    timings = {}
    for rec_i, rec in enumerate(goals):
        block = outcomes[rec_i * samples : (rec_i + 1) * samples]
        questions = []
        statuses = []
        for k, (question, trace) in enumerate(block):
            counts[trace.terminal_status.value] += 1
            statuses.append(trace.terminal_status.value)
            timings[trace.run_id] = round(trace.wall_clock_s, 4)
            name = rec.goal_id if samples == 1 else f"{rec.goal_id}__s{k}"
            _dump(out / "traces" / f"{name}.json", trace.to_dict(include_timing=False))
            if question is not None:
                questions.append(question.to_dict())
        _dump(
            out / "questions" / f"{rec.goal_id}.json",
            {"goal_id": rec.goal_id, "goal": rec.goal.to_dict(), "statuses": statuses, "questions": questions},
        )
    cost = ledger_report(gateway.ledger, run_count=len(run_ids))
    summary = {**counts, "runs": len(run_ids), "cost": cost.to_dict()}
    _dump(out / "summary.json", summary)
    write_manifest(out, cfg, goal_file, raw, seed, started, timings_s=timings, parallelism=parallelism)
    return summary


def _summary_line(summary: dict[str, Any]) -> str:
    return (
        f"{summary['accepted']} accepted, {summary['best_effort']} best_effort, {summary['failed']} failed; "
        f"total cost ${summary['cost']['overall']['cost_usd']:.6f}"
    )


def cmd_generate(args: argparse.Namespace, provider: Any = None) -> int:
    cfg = _config_from_args(args)
    ablations = _parse_ablations(args.ablations)
    if ablations:
        cfg = replace(cfg, pipeline=replace(cfg.pipeline, ablations=frozenset(ablations)))
    goals, raw = read_goals(args.goals)
    out = Path(args.out)
    summary = generate_into(
        out, goals, raw, args.goals, cfg, args.seed, args.parallelism, args.samples, args.baseline, provider
    )
    print(_summary_line(summary))
    return EXIT_FAILED if summary["failed"] else EXIT_OK


# --- ablate --------------------------------------------------------------------

ABLATION_TABLE_COLUMNS = [
    "variant", "accepted", "best_effort", "failed", "cost_usd",
    "bleu", "meteor_lite", "rouge_l", "embed_sim",
    "knowledge", "difficulty", "competence", "solvability", "win_rate",
]


def cmd_ablate(args: argparse.Namespace, provider_factory: Any = None) -> int:
    cfg = _config_from_args(args)
    ablations = _parse_ablations(args.ablations)
    if not ablations:
        raise ConfigError(f"--ablations is required; valid names: {', '.join(ABLATIONS)}")
    goals, raw = read_goals(args.goals)
    out = Path(args.out)
    started = _now()
    rows = []
    any_failed = False
    for variant in ["full", *ablations]:
        flags = frozenset() if variant == "full" else frozenset({variant})
        vcfg = replace(cfg, pipeline=replace(cfg.pipeline, ablations=flags))
        provider = provider_factory() if provider_factory else None
        summary = generate_into(
            out / variant, goals, raw, args.goals, vcfg, args.seed, args.parallelism, args.samples, False, provider
        )
        any_failed |= bool(summary["failed"])
        print(f"[{variant}] {_summary_line(summary)}")
        rows.append(
            {
                "variant": variant,
                "accepted": summary["accepted"],
                "best_effort": summary["best_effort"],
                "failed": summary["failed"],
                "cost_usd": f"{summary['cost']['overall']['cost_usd']:.8f}",
            }
        )
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=ABLATION_TABLE_COLUMNS, lineterminator="\n", restval="")
    w.writeheader()
    w.writerows(rows)
    (out / "ablation_table.csv").write_text(buf.getvalue(), encoding="utf-8")
    write_manifest(out, cfg, args.goals, raw, args.seed, started, variants=["full", *ablations])
    return EXIT_FAILED if any_failed else EXIT_OK


# --- eval ----------------------------------------------------------------------


def load_method_questions(directory: str | Path) -> dict[str, list[Question]]:
    """goal_id -> questions, from a ``generate`` output dir or a dir of question files."""
    d = Path(directory)
    qdir = d / "questions" if (d / "questions").is_dir() else d
    if not qdir.is_dir():
        raise ConfigError(f"{directory} is not a directory")
    out: dict[str, list[Question]] = {}
    for f in sorted(qdir.glob("*.json")):
        if f.name in ("manifest.json", "summary.json"):
            continue
        try:
            doc = json.loads(f.read_text(encoding="utf-8"))
            items = doc.get("questions") if isinstance(doc, dict) and "questions" in doc else doc
            if isinstance(items, dict):
                items = [items]
            gid = doc.get("goal_id", f.stem) if isinstance(doc, dict) else f.stem
            out[gid] = [Question.from_dict(q) for q in items]
        except (json.JSONDecodeError, ValueError, TypeError, AttributeError) as exc:
            raise ConfigError(f"{f}: bad question file ({exc})") from exc
    return out


def cmd_eval(args: argparse.Namespace, provider: Any = None) -> int:
    cfg = _config_from_args(args)
    goals, raw = read_goals(args.goals)
    modes = {"diversity": args.diversity, "consistency": args.consistency, "winrate": args.winrate}
    if not any(modes.values()):
        modes = {k: True for k in modes}
    labels: list[str] = []
    methods: dict[str, dict[str, list[Question]]] = {}
    for d in args.methods:
        label = Path(d).resolve().name
        while label in methods:
            label += "_"
        labels.append(label)
        methods[label] = load_method_questions(d)
    goal_ids = [g.goal_id for g in goals]
    for label, qs in methods.items():
        missing = [g for g in goal_ids if not qs.get(g)]
        if missing and (modes["consistency"] or modes["winrate"]):
            raise MisalignedOutputs(f"method {label!r} has no questions for goals {missing}")
    judges = [j.strip() for j in (args.judges or "").split(",") if j.strip()] or [cfg.provider.model]
    started = _now()
    gateway = build_gateway(cfg, args.seed, provider=provider)
    agents = build_agents(cfg, gateway)
    embedder = None
    if cfg.embedder:
        embedder = OpenAICompatibleEmbedder(cfg.embedder["base_url"], cfg.embedder["model"])

    summaries = []
    for label in labels:
        qs = methods[label]
        s = MethodSummary(label)
        if modes["diversity"]:
            reports = [diversity_report(qs[g], embedder) for g in goal_ids if len(qs.get(g, [])) >= 2]
            if reports:
                s.diversity = average_diversity(reports)
                s.n_diversity_goals = len(reports)
        if modes["consistency"]:
            scores = [judge_consistency(qs[g.goal_id][0], g.goal, judges, agents) for g in goals]
            s.consistency = mean_consistency(scores)
        summaries.append(s)

    matrix = None
    if modes["winrate"]:
        outputs = {label: [methods[label][g][0] for g in goal_ids] for label in labels}
        gold = [g.gold for g in goals] if any(g.gold for g in goals) else None
        matrix = winrate_matrix(outputs, [g.goal for g in goals], judges, agents, gold, args.seed)
        if matrix.gold_wins is not None:
            for s in summaries:
                s.win_rate_vs_gold = matrix.gold_wins[s.method]
    out = Path(args.out)
    write_reports(out, summaries, matrix, {"judges": judges, "seed": args.seed, "goals": goal_ids})
    write_manifest(out, cfg, args.goals, raw, args.seed, started, methods=list(args.methods))
    print((out / "table.csv").read_text(encoding="utf-8"), end="")
    return EXIT_OK


# --- inspect --------------------------------------------------------------------


def cmd_inspect(args: argparse.Namespace) -> int:
    try:
        trace = json.loads(Path(args.trace).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read trace {args.trace}: {exc}") from exc
    print(f"run {trace.get('run_id')}: {trace['terminal_status']}")
    if trace.get("error"):
        print(f"  error: {trace['error']}")
    goal = trace["goal"]
    print(f"  goal: grade {goal['grade']}, {', '.join(goal['knowledge_concepts'])}, "
          f"{goal['difficulty']}, {goal['competency']} ({goal['question_type']})")
    for d in trace.get("directions", []):
        print(f"  direction {d['id']}: {d['angle']}")
    for snap in trace["iterations"]:
        cands = ", ".join(
            f"d{c['direction_id']}"
            + (
                f"(S{int(c['report']['pass_solver'])}E{int(c['report']['pass_educator'])} "
                f"{c['report']['rank_solver']:g}+{c['report']['rank_educator']:g})"
                if c["report"]
                else ""
            )
            for c in snap["candidates"]
        )
        print(f"  iteration {snap['iteration']}: {cands}; pass set {snap['pass_set']}")
    for c in trace["checks"]:
        flag = "approved" if c["approved"] else "rejected"
        print(f"  checker it{c['iteration']} d{c['direction_id']}: {flag}{'' if c['gating'] else ' (non-gating)'}")
    if trace.get("final"):
        q = trace["final"]["question"]
        print(f"  final: {q['stem']}\n  answer: {q['answer']}")
    print(f"  cost: ${trace['cost_usd']:.6f} over {len(trace['ledger'])} calls")
    return EXIT_OK


# --- entry ---------------------------------------------------------------------


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config)
    cfg = with_provider_kind(cfg, args.provider, getattr(args, "mock_script", None))
    if getattr(args, "t_rewrite", None) is not None:
        cfg = replace(cfg, pipeline=replace(cfg.pipeline, t_rewrite=args.t_rewrite))
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qgflow", description="Multi-agent math question generation.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, goals=True):
        if goals:
            p.add_argument("goals", help="JSONL goal file")
        p.add_argument("--config", help="YAML/JSON run config")
        p.add_argument("--provider", choices=["openai-compatible", "mock"])
        p.add_argument("--mock-script", help="scripted replies for --provider mock")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--parallelism", type=int, default=1)

    g = sub.add_parser("generate", help="generate questions for a goal file")
    common(g)
    g.add_argument("--ablations", default="", help=f"comma list of {', '.join(ABLATIONS)}")
    g.add_argument("--samples", type=int, default=1, help="runs per goal (for diversity)")
    g.add_argument("--t-rewrite", type=int)
    g.add_argument("--baseline", action="store_true", help="single-pass writer, no agents loop")

    a = sub.add_parser("ablate", help="run the full pipeline and each ablation variant")
    common(a)
    a.add_argument("--ablations", required=True, help=f"comma list of {', '.join(ABLATIONS)}")
    a.add_argument("--samples", type=int, default=1)
    a.add_argument("--t-rewrite", type=int)

    e = sub.add_parser("eval", help="diversity / goal-consistency / win-rate reports")
    common(e)
    e.add_argument("--methods", nargs="+", required=True, help="question directories, one per method")
    e.add_argument("--judges", help="comma list of judge model ids")
    e.add_argument("--diversity", action="store_true")
    e.add_argument("--consistency", action="store_true")
    e.add_argument("--winrate", action="store_true")

    i = sub.add_parser("inspect", help="summarize a trace file")
    i.add_argument("trace")
    return parser


def main(argv: Sequence[str] | None = None, provider: Any = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "generate":
            return cmd_generate(args, provider)
        if args.command == "ablate":
            return cmd_ablate(args)
        if args.command == "eval":
            return cmd_eval(args, provider)
        return cmd_inspect(args)
    except (ConfigError, MisalignedOutputs) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except QGError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
