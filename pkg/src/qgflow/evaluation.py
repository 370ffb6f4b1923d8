"""Judge-backed evaluation: goal consistency, pairwise win rates, report export."""

from __future__ import annotations

import csv
import io
import json
import math
import random
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Any, Mapping, Sequence

from .agents import Agents, goal_context
from .core import EducationalGoal, Question
from .errors import EvaluatorOutputInvalid, MisalignedOutputs
from .metrics import DiversityReport

CONSISTENCY_DIMENSIONS = ("knowledge", "difficulty", "competence", "solvability")


@dataclass(frozen=True)
class ConsistencyScore:
    knowledge: float
    difficulty: float
    competence: float
    solvability: float
    per_judge: dict[str, dict[str, float]] = field(default_factory=dict)
    failed_judges: tuple[str, ...] = ()

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.knowledge, self.difficulty, self.competence, self.solvability)

    def to_dict(self) -> dict[str, Any]:
        return {
            **dict(zip(CONSISTENCY_DIMENSIONS, self.as_tuple())),
            "per_judge": {k: self.per_judge[k] for k in sorted(self.per_judge)},
            "failed_judges": sorted(self.failed_judges),
        }


def _mean(values: Sequence[float]) -> float:
    # fsum is exactly rounded, so the mean does not depend on judge order
    return math.fsum(values) / len(values)


def judge_consistency(
    question: Question,
    goal: EducationalGoal,
    judges: Sequence[str],
    agents: Agents,
) -> ConsistencyScore:
    """Score one question on the four goal-consistency dimensions, averaged over judges.

    A judge whose reply stays invalid after the repair prompt is dropped and
    listed in ``failed_judges``; if every judge fails the error propagates.
    """
    if not judges:
        raise ValueError("at least one judge is required")

    def validate(data):
        return {k: float(data[k]) for k in CONSISTENCY_DIMENSIONS}

    per_judge: dict[str, dict[str, float]] = {}
    failed: list[str] = []
    for judge in judges:
        try:
            per_judge[judge] = agents.ask(
                "judge",
                "judge_consistency",
                "judge_scores",
                EvaluatorOutputInvalid,
                validate,
                model=judge,
                goal=goal_context(goal),
                question=question.render(),
                answer=question.answer,
            )
        except EvaluatorOutputInvalid:
            failed.append(judge)
    if not per_judge:
        raise EvaluatorOutputInvalid(f"every judge failed: {failed}")
    means = [_mean([s[d] for s in per_judge.values()]) for d in CONSISTENCY_DIMENSIONS]
    return ConsistencyScore(*means, per_judge=per_judge, failed_judges=tuple(failed))


def mean_consistency(scores: Sequence[ConsistencyScore]) -> dict[str, float]:
    return {
        d: _mean([getattr(s, d) for s in scores]) for d in CONSISTENCY_DIMENSIONS
    } if scores else {}


# --- pairwise win rate ----------------------------------------------------------------


@dataclass
class WinRateMatrix:
    methods: list[str]
    wins: list[list[float]]
    ties: list[list[float]]
    comparisons: list[list[int]]
    gold_wins: dict[str, float] | None = None
    gold_ties: dict[str, float] | None = None
    seed: int = 0

    def win(self, a: str, b: str) -> float:
        return self.wins[self.methods.index(a)][self.methods.index(b)]

    def tie(self, a: str, b: str) -> float:
        return self.ties[self.methods.index(a)][self.methods.index(b)]

    def to_dict(self) -> dict[str, Any]:
        return {
            "methods": self.methods,
            "wins": self.wins,
            "ties": self.ties,
            "comparisons": self.comparisons,
            "gold_wins": self.gold_wins,
            "gold_ties": self.gold_ties,
            "seed": self.seed,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = ["row_over_column", *self.methods]
        if self.gold_wins is not None:
            header.append("gold")
        w.writerow(header)
        for i, m in enumerate(self.methods):
            row = [m, *(f"{x:.6f}" for x in self.wins[i])]
            if self.gold_wins is not None:
                row.append(f"{self.gold_wins[m]:.6f}")
            w.writerow(row)
        return buf.getvalue()


def presentation_orders(n: int, rng: random.Random) -> list[bool]:
    """Balanced, shuffled A/B swaps: ``True`` means the first item is shown in slot B."""
    flags = [True] * (n // 2) + [False] * (n - n // 2)
    rng.shuffle(flags)
    if n % 2:
        flags[flags.index(False)] = rng.random() < 0.5
    return flags


def _compare(
    agents: Agents,
    judge: str,
    goal: EducationalGoal,
    first: Question,
    second: Question,
    swap: bool,
) -> str:
    """Returns ``"first"``, ``"second"`` or ``"tie"``."""
    a, b = (second, first) if swap else (first, second)

    def validate(data):
        return data["winner"]

    winner = agents.ask(
        "pairwise_judge",
        "judge_pairwise",
        "pairwise",
        EvaluatorOutputInvalid,
        validate,
        model=judge,
        goal=goal_context(goal),
        question_a=a.render(),
        answer_a=a.answer,
        question_b=b.render(),
        answer_b=b.answer,
    )
    if winner == "tie":
        return "tie"
    slot_first = "B" if swap else "A"
    return "first" if winner == slot_first else "second"


def _tally(agents, judges, goals, xs, ys, rng) -> tuple[int, int, int]:
    """(wins for xs, wins for ys, ties) over all goals and judges."""
    wins_x = wins_y = ties = 0
    for judge in judges:
        for goal, x, y, swap in zip(goals, xs, ys, presentation_orders(len(goals), rng)):
            outcome = _compare(agents, judge, goal, x, y, swap)
            if outcome == "first":
                wins_x += 1
            elif outcome == "second":
                wins_y += 1
            else:
                ties += 1
    return wins_x, wins_y, ties


def winrate_matrix(
    outputs: Mapping[str, Sequence[Question]],
    goals: Sequence[EducationalGoal],
    judges: Sequence[str],
    agents: Agents,
    gold: Sequence[Question | None] | None = None,
    seed: int = 0,
) -> WinRateMatrix:
    """Pairwise preference fractions between methods (and against gold).

    Each unordered method pair is judged once per goal per judge, with the
    A/B presentation order balanced and shuffled by a seeded RNG. Both ordered
    cells come from the same comparisons, so ``wins[a][b] + wins[b][a] +
    ties[a][b] == 1`` for every off-diagonal cell.
    """
    if not judges:
        raise ValueError("at least one judge is required")
    methods = list(outputs)
    n = len(goals)
    for m in methods:
        if len(outputs[m]) != n:
            raise MisalignedOutputs(f"{m!r} has {len(outputs[m])} outputs for {n} goals")
    if gold is not None and len(gold) != n:
        raise MisalignedOutputs(f"gold has {len(gold)} items for {n} goals")
    k = len(methods)
    wins = [[0.0] * k for _ in range(k)]
    ties = [[0.0] * k for _ in range(k)]
    counts = [[0] * k for _ in range(k)]
    for i, j in combinations(range(k), 2):
        rng = random.Random(f"{seed}|{methods[i]}|{methods[j]}")
        wi, wj, t = _tally(agents, judges, goals, outputs[methods[i]], outputs[methods[j]], rng)
        total = wi + wj + t
        wins[i][j], wins[j][i] = wi / total, wj / total
        # derived rather than t / total so the three cells sum to exactly 1.0
        ties[i][j] = ties[j][i] = 1.0 - (wins[i][j] + wins[j][i])
        counts[i][j] = counts[j][i] = total
    gold_wins = gold_ties = None
    # goals without a gold question are left out of the vs-gold column
    with_gold = [i for i in range(n) if gold is not None and gold[i] is not None]
    if with_gold:
        gold_wins, gold_ties = {}, {}
        g_goals = [goals[i] for i in with_gold]
        g_refs = [gold[i] for i in with_gold]
        for m in methods:
            rng = random.Random(f"{seed}|{m}|<gold>")
            wm, _, t = _tally(agents, judges, g_goals, [outputs[m][i] for i in with_gold], g_refs, rng)
            total = len(judges) * len(with_gold)
            gold_wins[m] = wm / total
            gold_ties[m] = t / total
    return WinRateMatrix(methods, wins, ties, counts, gold_wins, gold_ties, seed)


# --- report export -------------------------------------------------------------------

TABLE_COLUMNS = [
    "method",
    "bleu",
    "meteor_lite",
    "rouge_l",
    "embed_sim",
    "knowledge",
    "difficulty",
    "competence",
    "solvability",
    "win_rate_vs_gold",
]


@dataclass
class MethodSummary:
    method: str
    diversity: DiversityReport | None = None
    n_diversity_goals: int = 0
    consistency: dict[str, float] = field(default_factory=dict)
    win_rate_vs_gold: float | None = None

    def row(self) -> dict[str, Any]:
        d = self.diversity.to_dict() if self.diversity else {}
        out = {"method": self.method}
        for col in TABLE_COLUMNS[1:]:
            if col in ("bleu", "meteor_lite", "rouge_l", "embed_sim"):
                out[col] = d.get(col)
            elif col == "win_rate_vs_gold":
                out[col] = self.win_rate_vs_gold
            else:
                out[col] = self.consistency.get(col)
        return out


def average_diversity(reports: Sequence[DiversityReport]) -> DiversityReport:
    """Unweighted mean over per-goal reports."""
    embed = [r.embed_sim for r in reports if r.embed_sim is not None]
    return DiversityReport(
        bleu=_mean([r.bleu for r in reports]),
        meteor_lite=_mean([r.meteor_lite for r in reports]),
        rouge_l=_mean([r.rouge_l for r in reports]),
        embed_sim=_mean(embed) if len(embed) == len(reports) else None,
        n_pairs=sum(r.n_pairs for r in reports),
    )


def table_csv(summaries: Sequence[MethodSummary]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=TABLE_COLUMNS, lineterminator="\n")
    w.writeheader()
    for s in summaries:
        row = s.row()
        w.writerow({k: ("" if v is None else (f"{v:.4f}" if isinstance(v, float) else v)) for k, v in row.items()})
    return buf.getvalue()


def write_reports(
    out_dir: str | Path,
    summaries: Sequence[MethodSummary],
    matrix: WinRateMatrix | None = None,
    extra: Mapping[str, Any] | None = None,
) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "methods": [
            {
                **s.row(),
                "diversity_pairs": s.diversity.n_pairs if s.diversity else 0,
                "diversity_goals": s.n_diversity_goals,
            }
            for s in summaries
        ],
        "winrate": matrix.to_dict() if matrix else None,
        "notes": {
            "meteor_lite": "METEOR with exact and stem matching only",
            "embed_sim": "greedy token-embedding alignment F1; empty without an embedder",
        },
        **dict(extra or {}),
    }
    (out / "report.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (out / "table.csv").write_text(table_csv(summaries), encoding="utf-8")
    if matrix is not None:
        (out / "winrate.csv").write_text(matrix.to_csv(), encoding="utf-8")
