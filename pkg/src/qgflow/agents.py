"""The five agent roles: prompt, call, parse, validate.

Every agent reply is one JSON document. A reply that fails to parse or
validate gets exactly one repair re-prompt; a second failure raises the
role's ``*OutputInvalid`` error.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Iterable, NamedTuple, Sequence, TypeVar

from .core import (
    CandidateRecord,
    DimensionVerdict,
    EducationalGoal,
    EvaluationReport,
    FeedbackSummary,
    Question,
    QuestionType,
    normalize_concept,
)
from .errors import (
    AgentOutputInvalid,
    EvaluatorOutputInvalid,
    IterationExhausted,
    PlannerOutputInvalid,
    SchemaViolation,
    StructuredOutputError,
    WriterOutputInvalid,
)
from .gateway import CompletionRequest, Gateway, extract_structured
from .knowledge import CurriculumSnippet, ReferenceSet
from .templates import PromptLibrary

log = logging.getLogger(__name__)

SOLVER_DIMENSIONS = (
    "conditions_sufficient",
    "reasoning_coherent",
    "unambiguous",
    "grade_appropriate_path",
    "answer_reachable",
)
EDUCATOR_DIMENSIONS = (
    "knowledge_match",
    "difficulty_match",
    "grade_match",
    "competency_embodied",
)

T = TypeVar("T")
R = TypeVar("R")


def fan_out(fn: Callable[[T], R], items: Sequence[T], max_workers: int = 1) -> list[R]:
    """``[fn(x) for x in items]``, optionally on a thread pool; order preserved."""
    if max_workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class DesignPlan:
    concepts: tuple[str, ...]
    prerequisites: tuple[str, ...] = ()
    misconceptions: tuple[str, ...] = ()
    competencies: tuple[str, ...] = ()
    pathways: tuple[str, ...] = ()

    def render(self) -> str:
        def bullet(items):
            return "; ".join(items) if items else "(none)"

        return "\n".join(
            [
                f"Concepts to cover: {bullet(self.concepts)}",
                f"Prerequisites: {bullet(self.prerequisites)}",
                f"Misconceptions to target: {bullet(self.misconceptions)}",
                f"Competencies to assess: {bullet(self.competencies)}",
                f"Pathways: {bullet(self.pathways)}",
            ]
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "concept_plan": {
                "concepts": list(self.concepts),
                "prerequisites": list(self.prerequisites),
                "misconceptions": list(self.misconceptions),
            },
            "competency_plan": {
                "competencies": list(self.competencies),
                "pathways": list(self.pathways),
            },
        }


@dataclass(frozen=True)
class Direction:
    id: int
    angle: str

    def __post_init__(self):
        if not self.angle.strip():
            raise ValueError("direction angle must be non-empty")

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "angle": self.angle}


def generic_directions(n: int) -> list[Direction]:
    """Directions used when the Planner is ablated away."""
    return [Direction(i, f"independent attempt {i + 1}; choose any suitable context") for i in range(n)]


@dataclass(frozen=True)
class CheckerVerdict:
    answer_correct: bool
    unambiguous: bool
    no_leading_hints: bool
    notes: str = ""

    @property
    def approved(self) -> bool:
        return self.answer_correct and self.unambiguous and self.no_leading_hints

    def failed_checks(self) -> list[str]:
        return [
            name
            for name in ("answer_correct", "unambiguous", "no_leading_hints")
            if not getattr(self, name)
        ]

    def to_dict(self) -> dict[str, Any]:
        return {
            "answer_correct": self.answer_correct,
            "unambiguous": self.unambiguous,
            "no_leading_hints": self.no_leading_hints,
            "approved": self.approved,
            "notes": self.notes,
        }


class Assessment(NamedTuple):
    verdicts: tuple[DimensionVerdict, ...]
    rank: float
    feedback: str


class WriteResult(NamedTuple):
    records: list[CandidateRecord]
    holes: dict[int, str]


def combine_assessments(solver: Assessment, educator: Assessment) -> EvaluationReport:
    """Merge both evaluators' output into a report whose feedback is the Writer's input."""
    failures = [
        f"[{v.dimension}] {v.reason}" for v in (*solver.verdicts, *educator.verdicts) if not v.passed
    ]
    notes = [s for s in (solver.feedback, educator.feedback) if s.strip()]
    pass_s = all(v.passed for v in solver.verdicts)
    pass_e = all(v.passed for v in educator.verdicts)
    summary = FeedbackSummary(pass_s, pass_e, solver.rank, educator.rank, tuple(failures), tuple(notes))
    return EvaluationReport(
        solver_verdicts=solver.verdicts,
        educator_verdicts=educator.verdicts,
        rank_solver=solver.rank,
        rank_educator=educator.rank,
        feedback=summary.render(),
    )


def goal_context(goal: EducationalGoal) -> dict[str, Any]:
    return {
        "grade": goal.grade,
        "knowledge_concepts": ", ".join(goal.sorted_concepts),
        "difficulty": goal.difficulty.value,
        "competency": goal.competency,
        "question_type": goal.question_type.value,
    }


def type_rule(goal: EducationalGoal) -> str:
    if goal.question_type == QuestionType.MULTIPLE_CHOICE:
        return "Give 4 options; exactly one option is the answer, and the answer field repeats that option's text."
    return "This is a fill-in-the-blank question: set options to null and give the exact answer."


def parse_question(data: dict[str, Any], goal: EducationalGoal) -> Question:
    """Build a Question from a writer reply, enforcing option/answer consistency locally."""
    options = data.get("options")
    answer = str(data["answer"]).strip()
    if goal.question_type == QuestionType.MULTIPLE_CHOICE:
        if not options:
            raise SchemaViolation("multiple_choice question needs options", field="options")
        options = [str(o).strip() for o in options]
        letter = answer.rstrip(".):").upper()
        if len(letter) == 1 and "A" <= letter <= "Z":
            idx = ord(letter) - ord("A")
            opts_norm = [o.casefold() for o in options]
            if answer.casefold() not in opts_norm and idx < len(options):
                answer = options[idx]
    else:
        if options:
            raise SchemaViolation("fill_in_blank question must not have options", field="options")
        options = None
    try:
        return Question(
            stem=str(data["stem"]).strip(),
            answer=answer,
            options=None if options is None else tuple(options),
            rationale=data.get("rationale"),
        )
    except ValueError as exc:
        raise SchemaViolation(str(exc), field="answer") from exc


@dataclass
class Agents:
    """Stateless role implementations over a gateway and a prompt library."""

    gateway: Gateway
    prompts: PromptLibrary = field(default_factory=PromptLibrary)
    model: str = "mock-model"
    role_models: dict[str, str] = field(default_factory=dict)
    temperature: float = 1.0
    top_p: float = 0.9
    max_tokens: int = 1500
    n_directions: int = 3
    t_rewrite: int = 3
    solver_dimensions: tuple[str, ...] = SOLVER_DIMENSIONS
    educator_dimensions: tuple[str, ...] = EDUCATOR_DIMENSIONS
    max_workers: int = 1
    run_id: str | None = None

    def for_run(self, run_id: str | None) -> "Agents":
        return replace(self, run_id=run_id)

    # -- plumbing -------------------------------------------------------------

    def _request(
        self, role: str, template: str, schema_tag: str, model: str | None = None, **ctx: Any
    ) -> CompletionRequest:
        system, user = self.prompts.render(template, **ctx)
        return CompletionRequest(
            model=model or self.role_models.get(role, self.model),
            system_prompt=system,
            user_prompt=user,
            temperature=self.temperature,
            top_p=self.top_p,
            max_tokens=self.max_tokens,
            schema_tag=schema_tag,
            role=role,
            run_id=self.run_id,
        )

    def ask(
        self,
        role: str,
        template: str,
        schema_tag: str,
        error: type[AgentOutputInvalid],
        validate: Callable[[dict[str, Any]], T],
        model: str | None = None,
        **ctx: Any,
    ) -> T:
        """Render, call, parse and validate; one repair re-prompt on failure."""
        request = self._request(role, template, schema_tag, model, **ctx)
        text = self.gateway.complete(request).text
        try:
            return validate(extract_structured(text, schema_tag))
        except StructuredOutputError as exc:
            log.info("%s reply invalid (%s); sending repair prompt", role, exc)
            first_error = exc
        system, user = self.prompts.render(
            "repair",
            error=str(first_error),
            previous_reply=text,
            original_prompt=request.user_prompt,
        )
        repair = replace(request, system_prompt=request.system_prompt + "\n\n" + system, user_prompt=user)
        text = self.gateway.complete(repair).text
        try:
            return validate(extract_structured(text, schema_tag))
        except StructuredOutputError as exc:
            raise error(f"{role} output invalid after repair: {exc}", text) from exc

    # -- Planner --------------------------------------------------------------

    def plan(
        self, goal: EducationalGoal, curriculum: Sequence[CurriculumSnippet] = ()
    ) -> tuple[DesignPlan, list[Direction]]:
        n = self.n_directions

        def validate(data: dict[str, Any]) -> tuple[DesignPlan, list[Direction]]:
            dirs = data["directions"]
            if len(dirs) != n:
                raise SchemaViolation(f"expected exactly {n} directions, got {len(dirs)}", field="directions")
            ids = sorted(d["id"] for d in dirs)
            if ids != list(range(n)):
                raise SchemaViolation(f"direction ids must be 0..{n - 1}, got {ids}", field="directions")
            angles = [" ".join(d["angle"].split()).casefold() for d in dirs]
            if len(set(angles)) != n:
                raise SchemaViolation("direction angles must be pairwise distinct", field="directions")
            cp, kp = data["concept_plan"], data["competency_plan"]
            concepts = list(cp["concepts"])
            have = {normalize_concept(c) for c in concepts}
            concepts += [c for c in goal.sorted_concepts if c not in have]
            competencies = list(kp["competencies"])
            if goal.competency.casefold() not in {c.strip().casefold() for c in competencies}:
                competencies.append(goal.competency)
            plan = DesignPlan(
                concepts=tuple(concepts),
                prerequisites=tuple(cp["prerequisites"]),
                misconceptions=tuple(cp["misconceptions"]),
                competencies=tuple(competencies),
                pathways=tuple(kp["pathways"]),
            )
            directions = sorted((Direction(d["id"], d["angle"].strip()) for d in dirs), key=lambda d: d.id)
            return plan, directions

        snippets = "\n".join(f"- [{s.concept}] {s.text}" for s in curriculum) or "(none retrieved)"
        return self.ask(
            "planner",
            "planner",
            "plan",
            PlannerOutputInvalid,
            validate,
            goal=goal_context(goal),
            curriculum=snippets,
            n_directions=n,
        )

    # -- Writer ---------------------------------------------------------------

    def _write_one(
        self, template: str, goal: EducationalGoal, valid_tags: Iterable[int], **ctx: Any
    ) -> tuple[Question, int | None]:
        valid_tags = set(valid_tags)

        def validate(data: dict[str, Any]) -> tuple[Question, int | None]:
            tag = data.get("direction_id")
            if tag is not None and tag not in valid_tags:
                raise SchemaViolation(f"unknown direction_id {tag}", field="direction_id")
            return parse_question(data, goal), tag

        return self.ask(
            "writer",
            template,
            "question",
            WriterOutputInvalid,
            validate,
            goal=goal_context(goal),
            type_rule=type_rule(goal),
            **ctx,
        )

    def write_initial(
        self,
        plan: DesignPlan | None,
        directions: Sequence[Direction],
        goal: EducationalGoal,
    ) -> WriteResult:
        """One candidate per direction, re-associated by the reply's direction tag.

        A direction whose reply stays invalid becomes a hole; the others are
        still returned. Raises ``WriterOutputInvalid`` only if every direction fails.
        """
        if not directions:
            raise ValueError("directions must be non-empty")
        plan_text = plan.render() if plan is not None else "(no plan; write directly from the goal)"
        ids = [d.id for d in directions]

        def one(direction: Direction):
            try:
                return direction, self._write_one("writer", goal, ids, plan=plan_text, direction=direction)
            except WriterOutputInvalid as exc:
                exc.direction_id = direction.id
                return direction, exc

        results = fan_out(one, list(directions), self.max_workers)
        placed: dict[int, Question] = {}
        reasons: dict[int, str] = {}
        for direction, outcome in results:
            if isinstance(outcome, WriterOutputInvalid):
                reasons[direction.id] = str(outcome)
                continue
            question, tag = outcome
            target = direction.id if tag is None else tag
            if target in placed:
                reasons[direction.id] = f"duplicate direction tag {target}"
                continue
            placed[target] = question
        holes = {i: reasons.get(i, "no reply tagged for this direction") for i in ids if i not in placed}
        if not placed:
            raise WriterOutputInvalid(f"every direction failed: {holes}")
        records = [CandidateRecord(placed[i], i, 0) for i in sorted(placed)]
        return WriteResult(records, holes)

    def revise(
        self,
        record: CandidateRecord,
        feedback: str,
        goal: EducationalGoal,
        direction: Direction | None = None,
    ) -> CandidateRecord:
        if record.iteration >= self.t_rewrite:
            raise IterationExhausted(
                f"record at iteration {record.iteration} cannot be revised (t_rewrite={self.t_rewrite})"
            )
        if not feedback.strip():
            raise ValueError("feedback must be non-empty")
        direction = direction or Direction(record.direction_id, "keep the current approach")
        question, _ = self._write_one(
            "revise",
            goal,
            [record.direction_id],
            direction=direction,
            iteration=record.iteration,
            previous_question=record.question.render(),
            previous_answer=record.question.answer,
            feedback=feedback,
        )
        return CandidateRecord(question, record.direction_id, record.iteration + 1, None)

    # -- Solver / Educator ----------------------------------------------------

    def _assess(self, role: str, dims: Sequence[str], record: CandidateRecord, goal, **ctx) -> Assessment:
        def validate(data: dict[str, Any]) -> Assessment:
            got = [v["dimension"] for v in data["verdicts"]]
            if sorted(got) != sorted(dims):
                missing = sorted(set(dims) - set(got))
                extra = sorted(set(got) - set(dims))
                dupes = sorted({d for d in got if got.count(d) > 1})
                raise SchemaViolation(
                    f"verdicts must cover exactly {list(dims)}; missing={missing} extra={extra} duplicated={dupes}",
                    field="verdicts",
                )
            by_dim = {v["dimension"]: v for v in data["verdicts"]}
            try:
                verdicts = tuple(
                    DimensionVerdict(d, by_dim[d]["pass"], str(by_dim[d].get("reason", "")).strip())
                    for d in dims
                )
            except ValueError as exc:
                raise SchemaViolation(str(exc), field="verdicts") from exc
            failing = [f"[{v.dimension}] {v.reason}" for v in verdicts if not v.passed]
            feedback = "\n".join([*failing, str(data.get("feedback", "")).strip()]).strip()
            return Assessment(verdicts, float(data["rank"]), feedback)

        return self.ask(
            role,
            role,
            f"{role}_report",
            EvaluatorOutputInvalid,
            validate,
            goal=goal_context(goal),
            question=record.question.render(),
            answer=record.question.answer,
            dimensions="\n".join(f"- {d}" for d in dims),
            **ctx,
        )

    def solver_evaluate(self, record: CandidateRecord, goal: EducationalGoal) -> Assessment:
        return self._assess("solver", self.solver_dimensions, record, goal)

    def educator_evaluate(
        self, record: CandidateRecord, goal: EducationalGoal, refs: ReferenceSet
    ) -> Assessment:
        return self._assess(
            "educator", self.educator_dimensions, record, goal, anchors=render_anchors(refs)
        )

    def evaluate(self, record: CandidateRecord, goal: EducationalGoal, refs: ReferenceSet) -> CandidateRecord:
        """Solver and Educator on one candidate; returns the record with its report."""
        solver = self.solver_evaluate(record, goal)
        educator = self.educator_evaluate(record, goal, refs)
        return record.with_report(combine_assessments(solver, educator))

    # -- Checker --------------------------------------------------------------

    def checker_verify(self, record: CandidateRecord, goal: EducationalGoal) -> CheckerVerdict:
        def validate(data: dict[str, Any]) -> CheckerVerdict:
            return CheckerVerdict(
                data["answer_correct"],
                data["unambiguous"],
                data["no_leading_hints"],
                str(data.get("notes", "")),
            )

        return self.ask(
            "checker",
            "checker",
            "checker",
            EvaluatorOutputInvalid,
            validate,
            goal=goal_context(goal),
            question=record.question.render(),
            answer=record.question.answer,
        )

    # -- single-pass baseline --------------------------------------------------

    def baseline_write(self, goal: EducationalGoal) -> Question:
        def validate(data):
            return parse_question(data, goal)

        return self.ask(
            "baseline",
            "baseline",
            "question",
            WriterOutputInvalid,
            validate,
            goal=goal_context(goal),
            type_rule=type_rule(goal),
        )


def render_anchors(refs: ReferenceSet) -> str:
    blocks = []
    for level in ("easy", "medium", "hard"):
        items = refs.level(level)
        tag = " (nearest grade; none at target grade)" if level in refs.fallback else ""
        if not items:
            blocks.append(f"{level.capitalize()} anchors{tag}: (none)")
            continue
        lines = [f"{level.capitalize()} anchors{tag}:"]
        for it in items:
            lines.append(f"- (grade {it.goal.grade}) {it.question.render()} [answer: {it.question.answer}]")
        blocks.append("\n".join(lines))
    return "\n".join(blocks)
