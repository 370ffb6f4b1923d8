"""Plan once, write, evaluate, select or revise, final check.

Control flow of one run:

1. retrieve curriculum notes and plan (skipped under ``no_planner``);
2. write one candidate per direction;
3. Solver + Educator on every candidate (skipped under ``no_solver_educator``);
4. pass set = candidates passing both gates (all candidates under
   ``no_binary_score``); walk it in ranking order through the Checker and
   accept the first approval;
5. otherwise, if rewrite rounds remain, revise the top-k candidates with their
   feedback and go to 3;
6. on exhaustion emit the top-ranked candidate as ``best_effort``.
"""

from __future__ import annotations

import logging
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Sequence

from .agents import (
    Agents,
    CheckerVerdict,
    DesignPlan,
    Direction,
    fan_out,
    generic_directions,
)
from .core import (
    CandidateRecord,
    EducationalGoal,
    Question,
    best_candidates,
    build_pass_set,
    rank_order,
)
from .errors import AgentOutputInvalid, ProviderError, WriterOutputInvalid
from .gateway import LedgerEntry
from .knowledge import KnowledgeStore, ReferenceSet

log = logging.getLogger(__name__)

TRACE_SCHEMA_VERSION = "1"

ABLATIONS = ("no_rewrite", "no_planner", "no_solver_educator", "no_binary_score", "no_diversity")


class TerminalStatus(str, Enum):
    ACCEPTED = "accepted"
    BEST_EFFORT = "best_effort"
    FAILED = "failed"


@dataclass(frozen=True)
class PipelineConfig:
    n_directions: int = 3
    t_rewrite: int = 3
    k_anchor: int = 3
    curriculum_limit: int = 5
    ablations: frozenset[str] = frozenset()
    max_workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "ablations", frozenset(self.ablations))
        unknown = self.ablations - set(ABLATIONS)
        if unknown:
            raise ValueError(f"unknown ablations {sorted(unknown)}; valid: {', '.join(ABLATIONS)}")
        if self.n_directions < 1 or self.k_anchor < 1 or self.curriculum_limit < 1:
            raise ValueError("n_directions, k_anchor and curriculum_limit must be positive")
        if self.t_rewrite < 0:
            raise ValueError("t_rewrite must be >= 0")

    @property
    def effective_t_rewrite(self) -> int:
        return 0 if "no_rewrite" in self.ablations else self.t_rewrite

    @property
    def effective_n_directions(self) -> int:
        return 1 if "no_diversity" in self.ablations else self.n_directions

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_directions": self.n_directions,
            "t_rewrite": self.t_rewrite,
            "k_anchor": self.k_anchor,
            "curriculum_limit": self.curriculum_limit,
            "ablations": sorted(self.ablations),
            "effective_n_directions": self.effective_n_directions,
            "effective_t_rewrite": self.effective_t_rewrite,
        }


@dataclass
class IterationSnapshot:
    iteration: int
    candidates: list[CandidateRecord]
    pass_set: list[int] = field(default_factory=list)  # direction ids, input order
    ranked: list[int] = field(default_factory=list)  # direction ids, checker order
    holes: dict[int, str] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "iteration": self.iteration,
            "candidates": [c.to_dict() for c in self.candidates],
            "pass_set": self.pass_set,
            "ranked": self.ranked,
            "holes": {str(k): v for k, v in sorted(self.holes.items())},
        }


@dataclass
class CheckEvent:
    iteration: int
    direction_id: int
    verdict: CheckerVerdict
    gating: bool = True

    def to_dict(self) -> dict[str, Any]:
        return {
            "iteration": self.iteration,
            "direction_id": self.direction_id,
            "gating": self.gating,
            **self.verdict.to_dict(),
        }


@dataclass
class GenerationTrace:
    goal: EducationalGoal
    config: PipelineConfig
    run_id: str | None = None
    plan: DesignPlan | None = None
    directions: list[Direction] = field(default_factory=list)
    curriculum: list[str] = field(default_factory=list)
    references: dict[str, Any] = field(default_factory=dict)
    iterations: list[IterationSnapshot] = field(default_factory=list)
    checks: list[CheckEvent] = field(default_factory=list)
    revisions: list[dict[str, Any]] = field(default_factory=list)
    selection: dict[str, Any] = field(default_factory=dict)
    bypassed_gates: list[str] = field(default_factory=list)
    terminal_status: TerminalStatus = TerminalStatus.FAILED
    final: CandidateRecord | None = None
    error: str | None = None
    ledger: list[LedgerEntry] = field(default_factory=list)
    wall_clock_s: float = 0.0

    @property
    def cost_usd(self) -> float:
        return sum(e.cost_usd for e in self.ledger)

    @property
    def role_calls(self) -> Counter:
        return Counter(e.agent_role for e in self.ledger)

    @property
    def writer_invocations(self) -> int:
        return sum(len(s.candidates) + len(s.holes) for s in self.iterations)

    def to_dict(self, include_timing: bool = True) -> dict[str, Any]:
        d = {
            "schema_version": TRACE_SCHEMA_VERSION,
            "run_id": self.run_id,
            "goal": self.goal.to_dict(),
            "config": self.config.to_dict(),
            "plan": None if self.plan is None else self.plan.to_dict(),
            "directions": [x.to_dict() for x in self.directions],
            "curriculum": self.curriculum,
            "references": self.references,
            "iterations": [s.to_dict() for s in self.iterations],
            "checks": [c.to_dict() for c in self.checks],
            "revisions": self.revisions,
            "selection": self.selection,
            "bypassed_gates": self.bypassed_gates,
            "terminal_status": self.terminal_status.value,
            "final": None if self.final is None else self.final.to_dict(),
            "error": self.error,
            "ledger": [e.to_dict() for e in self.ledger],
            "cost_usd": self.cost_usd,
        }
        if include_timing:
            d["wall_clock_s"] = self.wall_clock_s
        return d


TRACE_JSON_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": [
        "schema_version",
        "goal",
        "config",
        "iterations",
        "checks",
        "terminal_status",
        "final",
        "ledger",
        "cost_usd",
    ],
    "properties": {
        "schema_version": {"const": TRACE_SCHEMA_VERSION},
        "terminal_status": {"enum": [s.value for s in TerminalStatus]},
        "iterations": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["iteration", "candidates", "pass_set"],
                "properties": {"iteration": {"type": "integer", "minimum": 0}},
            },
        },
        "final": {
            "type": ["object", "null"],
            "required": ["question", "direction_id", "iteration"],
            "properties": {
                "question": {
                    "type": "object",
                    "required": ["stem", "answer"],
                    "properties": {
                        "stem": {"type": "string", "minLength": 1},
                        "answer": {"type": "string", "minLength": 1},
                    },
                }
            },
        },
        "ledger": {"type": "array"},
        "cost_usd": {"type": "number", "minimum": 0},
    },
}


def _refs_summary(refs: ReferenceSet) -> dict[str, Any]:
    return {
        "easy": [i.source_id for i in refs.easy],
        "medium": [i.source_id for i in refs.medium],
        "hard": [i.source_id for i in refs.hard],
        "fallback": sorted(refs.fallback),
    }


class Pipeline:
    def __init__(self, agents: Agents, store: KnowledgeStore | None, config: PipelineConfig | None = None):
        self.config = config or PipelineConfig()
        self.store = store
        self.agents = replace(
            agents,
            n_directions=self.config.effective_n_directions,
            t_rewrite=self.config.effective_t_rewrite,
            max_workers=self.config.max_workers,
        )

    # -- one run ---------------------------------------------------------------

    def run(self, goal: EducationalGoal, run_id: str | None = None) -> tuple[Question | None, GenerationTrace]:
        cfg = self.config
        trace = GenerationTrace(goal=goal, config=cfg, run_id=run_id)
        if "no_solver_educator" in cfg.ablations:
            trace.bypassed_gates += ["solver", "educator"]
        elif "no_binary_score" in cfg.ablations:
            trace.bypassed_gates += ["binary_score"]
        agents = self.agents.for_run(run_id)
        ledger = agents.gateway.ledger
        start = time.perf_counter()
        try:
            self._run(goal, agents, trace)
        except (AgentOutputInvalid, ProviderError) as exc:
            log.warning("run %s failed: %s", run_id, exc)
            trace.terminal_status = TerminalStatus.FAILED
            trace.error = f"{type(exc).__name__}: {exc}"
            trace.final = None
        trace.wall_clock_s = time.perf_counter() - start
        trace.ledger = list(ledger.slice(run_id).entries)
        question = trace.final.question if trace.final is not None else None
        return question, trace

    def _run(self, goal: EducationalGoal, agents: Agents, trace: GenerationTrace) -> None:
        cfg = self.config
        evaluate = "no_solver_educator" not in cfg.ablations
        binary = "no_binary_score" not in cfg.ablations
        n = cfg.effective_n_directions
        t_max = cfg.effective_t_rewrite

        curriculum = self.store.retrieve_curriculum(goal, cfg.curriculum_limit) if self.store else []
        trace.curriculum = [s.text for s in curriculum]
        if "no_planner" in cfg.ablations:
            plan, directions = None, generic_directions(n)
        else:
            plan, directions = agents.plan(goal, curriculum)
        trace.plan, trace.directions = plan, directions
        by_id = {d.id: d for d in directions}

        refs = ReferenceSet()
        if evaluate and self.store is not None:
            refs = self.store.retrieve_references(goal, cfg.k_anchor)
        trace.references = _refs_summary(refs)

        written = agents.write_initial(plan, directions, goal)
        candidates, holes = written.records, written.holes
        t = 0
        while True:
            if evaluate:
                candidates = fan_out(lambda c: agents.evaluate(c, goal, refs), candidates, cfg.max_workers)
            snap = IterationSnapshot(t, list(candidates), holes=dict(holes))
            trace.iterations.append(snap)

            if not evaluate:
                pass_set, order = list(candidates), list(range(len(candidates)))
            else:
                pass_set = build_pass_set(candidates) if binary else list(candidates)
                order = rank_order(pass_set)
            ranked = [pass_set[i] for i in order]
            snap.pass_set = [c.direction_id for c in pass_set]
            snap.ranked = [c.direction_id for c in ranked]

            rejected: dict[int, CheckerVerdict] = {}
            for cand in ranked:
                verdict = agents.checker_verify(cand, goal)
                trace.checks.append(CheckEvent(t, cand.direction_id, verdict))
                if verdict.approved:
                    trace.final = cand
                    trace.terminal_status = TerminalStatus.ACCEPTED
                    trace.selection = self._rationale(cand, ranked, rejected, t)
                    return
                rejected[cand.direction_id] = verdict

            if t >= t_max:
                break

            seeds = best_candidates(candidates, n) if evaluate else list(candidates)

            def revise(rec: CandidateRecord):
                feedback = rec.report.feedback if rec.report is not None else ""
                if rec.direction_id in rejected:
                    v = rejected[rec.direction_id]
                    feedback += f"\nChecker rejected ({', '.join(v.failed_checks())}): {v.notes}"
                feedback = feedback.strip() or "Improve clarity and correctness."
                try:
                    return agents.revise(rec, feedback, goal, by_id.get(rec.direction_id))
                except WriterOutputInvalid as exc:
                    return exc

            outcomes = fan_out(revise, seeds, cfg.max_workers)
            holes = {}
            new: list[CandidateRecord] = []
            for rec, out in zip(seeds, outcomes):
                trace.revisions.append(
                    {
                        "from_iteration": rec.iteration,
                        "direction_id": rec.direction_id,
                        "ok": not isinstance(out, Exception),
                    }
                )
                if isinstance(out, WriterOutputInvalid):
                    holes[rec.direction_id] = str(out)
                else:
                    new.append(out)
            if not new:
                raise WriterOutputInvalid(f"every revision failed at iteration {t + 1}: {holes}")
            candidates = sorted(new, key=lambda c: c.direction_id)
            t += 1

        # exhausted: emit the best candidate, checker verdict recorded but not gating
        best = best_candidates(candidates, 1)[0] if evaluate else candidates[0]
        if best.direction_id in rejected:
            verdict = rejected[best.direction_id]
        else:
            verdict = agents.checker_verify(best, goal)
            trace.checks.append(CheckEvent(t, best.direction_id, verdict, gating=False))
        trace.final = best
        trace.terminal_status = TerminalStatus.BEST_EFFORT
        trace.selection = self._rationale(best, [best], rejected, t)
        trace.selection["checker_approved"] = verdict.approved

    @staticmethod
    def _rationale(chosen: CandidateRecord, ranked, rejected, t: int) -> dict[str, Any]:
        d: dict[str, Any] = {
            "iteration": t,
            "direction_id": chosen.direction_id,
            "ranked": [c.direction_id for c in ranked],
            "demoted": sorted(rejected),
        }
        if chosen.report is not None:
            d.update(
                rank_solver=chosen.report.rank_solver,
                rank_educator=chosen.report.rank_educator,
                rank_sum=chosen.report.rank_sum,
            )
        return d

    # -- many runs -------------------------------------------------------------

    def run_batch(
        self,
        goals: Sequence[EducationalGoal],
        parallelism: int = 1,
        run_ids: Sequence[str] | None = None,
    ) -> list[tuple[Question | None, GenerationTrace]]:
        if not goals:
            raise ValueError("goals must be non-empty")
        if parallelism < 1:
            raise ValueError("parallelism must be positive")
        run_ids = list(run_ids) if run_ids is not None else [f"run-{i}" for i in range(len(goals))]
        if len(run_ids) != len(goals) or len(set(run_ids)) != len(run_ids):
            raise ValueError("run_ids must be unique and aligned with goals")

        def one(i: int):
            try:
                return self.run(goals[i], run_ids[i])
            except Exception as exc:  # isolate anything unexpected to this goal
                log.exception("run %s crashed", run_ids[i])
                trace = GenerationTrace(goal=goals[i], config=self.config, run_id=run_ids[i])
                trace.error = f"{type(exc).__name__}: {exc}"
                trace.ledger = list(self.agents.gateway.ledger.slice(run_ids[i]).entries)
                return None, trace

        if parallelism == 1:
            return [one(i) for i in range(len(goals))]
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            return list(pool.map(one, range(len(goals))))

    # -- single-pass baseline ----------------------------------------------------

    def run_baseline(self, goal: EducationalGoal, run_id: str | None = None) -> tuple[Question | None, GenerationTrace]:
        """One Writer call, no planning or evaluation. For win-rate plumbing only."""
        trace = GenerationTrace(goal=goal, config=self.config, run_id=run_id)
        trace.bypassed_gates = ["planner", "solver", "educator", "checker"]
        agents = self.agents.for_run(run_id)
        start = time.perf_counter()
        try:
            q = agents.baseline_write(goal)
            trace.final = CandidateRecord(q, 0, 0)
            trace.terminal_status = TerminalStatus.BEST_EFFORT
        except (AgentOutputInvalid, ProviderError) as exc:
            trace.error = f"{type(exc).__name__}: {exc}"
        trace.wall_clock_s = time.perf_counter() - start
        trace.ledger = list(agents.gateway.ledger.slice(run_id).entries)
        return (trace.final.question if trace.final else None), trace


def run_pipeline(
    goal: EducationalGoal,
    config: PipelineConfig,
    agents: Agents,
    store: KnowledgeStore | None = None,
    run_id: str | None = None,
) -> tuple[Question | None, GenerationTrace]:
    return Pipeline(agents, store, config).run(goal, run_id)


def run_batch(
    goals: Sequence[EducationalGoal],
    config: PipelineConfig,
    agents: Agents,
    store: KnowledgeStore | None = None,
    parallelism: int = 1,
    run_ids: Sequence[str] | None = None,
):
    return Pipeline(agents, store, config).run_batch(goals, parallelism, run_ids)
