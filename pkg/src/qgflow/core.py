"""Domain types and the deterministic gating / selection rules.

Everything here is an immutable value or a pure function. Nothing in this
module knows about prompts, providers or files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Iterable, Sequence

from .errors import EmptyPassSet, MissingReport


class Difficulty(str, Enum):
    EASY = "easy"
    MEDIUM = "medium"
    HARD = "hard"


class QuestionType(str, Enum):
    MULTIPLE_CHOICE = "multiple_choice"
    FILL_IN_BLANK = "fill_in_blank"


def normalize_text(text: str) -> str:
    """Whitespace-collapsed, casefolded form used for option/answer comparison."""
    return " ".join(str(text).split()).casefold()


def normalize_concept(concept: str) -> str:
    return " ".join(str(concept).split()).casefold()


@dataclass(frozen=True)
class EducationalGoal:
    grade: int
    knowledge_concepts: frozenset[str]
    difficulty: Difficulty
    competency: str
    question_type: QuestionType = QuestionType.FILL_IN_BLANK

    def __post_init__(self):
        if isinstance(self.grade, bool) or not isinstance(self.grade, int):
            raise ValueError("grade must be an integer")
        if not 1 <= self.grade <= 9:
            raise ValueError("grade out of range")
        concepts = frozenset(normalize_concept(c) for c in self.knowledge_concepts)
        concepts = frozenset(c for c in concepts if c)
        if not concepts:
            raise ValueError("knowledge_concepts must be non-empty")
        object.__setattr__(self, "knowledge_concepts", concepts)
        if not isinstance(self.competency, str) or not self.competency.strip():
            raise ValueError("competency must be a non-empty string")
        object.__setattr__(self, "competency", self.competency.strip())
        try:
            object.__setattr__(self, "difficulty", Difficulty(self.difficulty))
        except ValueError:
            raise ValueError(f"unknown difficulty {self.difficulty!r}") from None
        try:
            object.__setattr__(self, "question_type", QuestionType(self.question_type))
        except ValueError:
            raise ValueError(f"unknown question_type {self.question_type!r}") from None

    @property
    def sorted_concepts(self) -> list[str]:
        return sorted(self.knowledge_concepts)

    def to_dict(self) -> dict[str, Any]:
        return {
            "grade": self.grade,
            "knowledge_concepts": self.sorted_concepts,
            "difficulty": self.difficulty.value,
            "competency": self.competency,
            "question_type": self.question_type.value,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "EducationalGoal":
        concepts = data.get("knowledge_concepts")
        if isinstance(concepts, str) or not isinstance(concepts, (list, tuple, set, frozenset)):
            raise ValueError("knowledge_concepts must be a list")
        return cls(
            grade=data.get("grade"),
            knowledge_concepts=frozenset(concepts),
            difficulty=data.get("difficulty"),
            competency=data.get("competency"),
            question_type=data.get("question_type", QuestionType.FILL_IN_BLANK.value),
        )


@dataclass(frozen=True)
class Question:
    stem: str
    answer: str
    options: tuple[str, ...] | None = None
    rationale: str | None = None

    def __post_init__(self):
        if not isinstance(self.stem, str) or not self.stem.strip():
            raise ValueError("stem must be non-empty")
        if not isinstance(self.answer, str) or not self.answer.strip():
            raise ValueError("answer must be non-empty")
        if self.options is not None:
            opts = tuple(str(o) for o in self.options)
            object.__setattr__(self, "options", opts)
            target = normalize_text(self.answer)
            hits = sum(1 for o in opts if normalize_text(o) == target)
            if hits != 1:
                raise ValueError(
                    f"exactly one option must equal the answer (found {hits})"
                )

    def matches_type(self, question_type: QuestionType) -> bool:
        if question_type == QuestionType.MULTIPLE_CHOICE:
            return self.options is not None
        return self.options is None

    def render(self) -> str:
        """Stem with options appended as lettered lines."""
        if not self.options:
            return self.stem
        letters = "ABCDEFGHIJ"
        lines = [self.stem] + [f"{letters[i]}. {o}" for i, o in enumerate(self.options)]
        return "\n".join(lines)

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"stem": self.stem, "answer": self.answer}
        if self.options is not None:
            d["options"] = list(self.options)
        if self.rationale is not None:
            d["rationale"] = self.rationale
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Question":
        options = data.get("options")
        return cls(
            stem=data.get("stem"),
            answer=None if data.get("answer") is None else str(data.get("answer")),
            options=None if options is None else tuple(options),
            rationale=data.get("rationale"),
        )


@dataclass(frozen=True)
class DimensionVerdict:
    dimension: str
    passed: bool
    reason: str = ""

    def __post_init__(self):
        if not self.passed and not str(self.reason).strip():
            raise ValueError(f"failing verdict on {self.dimension!r} needs a reason")

    def to_dict(self) -> dict[str, Any]:
        return {"dimension": self.dimension, "pass": self.passed, "reason": self.reason}


def _check_rank(value: float, name: str) -> float:
    value = float(value)
    if not math.isfinite(value) or not 0.0 <= value <= 10.0:
        raise ValueError(f"{name} must be a finite score in [0, 10], got {value}")
    return value


@dataclass(frozen=True)
class EvaluationReport:
    """Solver and Educator verdicts for one candidate in one iteration.

    The pass signals are properties over the verdict lists, so they cannot
    drift from the verdicts they summarize.
    """

    solver_verdicts: tuple[DimensionVerdict, ...]
    educator_verdicts: tuple[DimensionVerdict, ...]
    rank_solver: float
    rank_educator: float
    feedback: str = ""

    def __post_init__(self):
        object.__setattr__(self, "solver_verdicts", tuple(self.solver_verdicts))
        object.__setattr__(self, "educator_verdicts", tuple(self.educator_verdicts))
        object.__setattr__(self, "rank_solver", _check_rank(self.rank_solver, "rank_solver"))
        object.__setattr__(
            self, "rank_educator", _check_rank(self.rank_educator, "rank_educator")
        )

    @property
    def pass_solver(self) -> bool:
        return all(v.passed for v in self.solver_verdicts)

    @property
    def pass_educator(self) -> bool:
        return all(v.passed for v in self.educator_verdicts)

    @property
    def rank_sum(self) -> float:
        return self.rank_solver + self.rank_educator

    def to_dict(self) -> dict[str, Any]:
        return {
            "solver_verdicts": [v.to_dict() for v in self.solver_verdicts],
            "educator_verdicts": [v.to_dict() for v in self.educator_verdicts],
            "pass_solver": self.pass_solver,
            "pass_educator": self.pass_educator,
            "rank_solver": self.rank_solver,
            "rank_educator": self.rank_educator,
            "feedback": self.feedback,
        }


@dataclass(frozen=True)
class CandidateRecord:
    question: Question
    direction_id: int
    iteration: int = 0
    report: EvaluationReport | None = None

    def __post_init__(self):
        if self.iteration < 0:
            raise ValueError("iteration must be >= 0")
        if self.direction_id < 0:
            raise ValueError("direction_id must be >= 0")

    def with_report(self, report: EvaluationReport | None) -> "CandidateRecord":
        return replace(self, report=report)

    def to_dict(self) -> dict[str, Any]:
        return {
            "question": self.question.to_dict(),
            "direction_id": self.direction_id,
            "iteration": self.iteration,
            "report": None if self.report is None else self.report.to_dict(),
        }


def _require_reports(candidates: Iterable[CandidateRecord]) -> None:
    for i, c in enumerate(candidates):
        if c.report is None:
            raise MissingReport(f"candidate {i} (direction {c.direction_id}) has no report")


def build_pass_set(candidates: Sequence[CandidateRecord]) -> list[CandidateRecord]:
    """Candidates that passed both the Solver and the Educator, in input order."""
    _require_reports(candidates)
    return [c for c in candidates if c.report.pass_solver and c.report.pass_educator]


def ranking_key(record: CandidateRecord, index: int) -> tuple[float, float, int]:
    # ascending sort key: higher rank sum, then higher educator rank, then lower index
    return (-record.report.rank_sum, -record.report.rank_educator, index)


def rank_order(candidates: Sequence[CandidateRecord]) -> list[int]:
    """Indices of ``candidates`` in selection order."""
    _require_reports(candidates)
    return sorted(range(len(candidates)), key=lambda i: ranking_key(candidates[i], i))


def select_final(pass_set: Sequence[CandidateRecord]) -> CandidateRecord:
    if not pass_set:
        raise EmptyPassSet("cannot select from an empty pass set")
    return pass_set[rank_order(pass_set)[0]]


def best_candidates(candidates: Sequence[CandidateRecord], k: int) -> list[CandidateRecord]:
    if k < 1:
        raise ValueError("k must be >= 1")
    return [candidates[i] for i in rank_order(candidates)[:k]]


@dataclass(frozen=True)
class FeedbackSummary:
    """Structured view of the feedback handed back to the Writer."""

    pass_solver: bool
    pass_educator: bool
    rank_solver: float
    rank_educator: float
    failures: tuple[str, ...] = field(default_factory=tuple)
    notes: tuple[str, ...] = field(default_factory=tuple)

    def render(self) -> str:
        lines = [
            f"Solver pass: {int(self.pass_solver)} (score {self.rank_solver:g}/10)",
            f"Educator pass: {int(self.pass_educator)} (score {self.rank_educator:g}/10)",
        ]
        if self.failures:
            lines.append("Failed checks:")
            lines += [f"- {f}" for f in self.failures]
        if self.notes:
            lines.append("Reviewer notes:")
            lines += [f"- {n}" for n in self.notes]
        return "\n".join(lines)
