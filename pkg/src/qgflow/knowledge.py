"""Local question bank and curriculum snippets with lexical retrieval.

Scores are Jaccard overlap of concept sets; ties fall to token overlap between
the item text and the goal description, then to source order.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Sequence

from .core import Difficulty, EducationalGoal, Question, normalize_concept
from .errors import EmptyBank, FileUnreadable

_WORD = re.compile(r"[^\W_]+", re.UNICODE)


def _tokens(text: str) -> set[str]:
    return {t.casefold() for t in _WORD.findall(text)}


def goal_tokens(goal: EducationalGoal) -> set[str]:
    toks: set[str] = set()
    for c in goal.knowledge_concepts:
        toks |= _tokens(c)
    return toks | _tokens(goal.competency)


def jaccard(a: Iterable[str], b: Iterable[str]) -> float:
    a, b = set(a), set(b)
    if not a and not b:
        return 0.0
    return len(a & b) / len(a | b)


@dataclass(frozen=True)
class BankItem:
    question: Question
    goal: EducationalGoal
    source_id: str

    def to_dict(self) -> dict[str, Any]:
        return {"source_id": self.source_id, **self.question.to_dict(), **self.goal.to_dict()}


@dataclass(frozen=True)
class Rejection:
    line: int
    reason: str


@dataclass(frozen=True)
class Bank:
    items: tuple[BankItem, ...]
    rejections: tuple[Rejection, ...] = ()
    line_count: int = 0

    def __len__(self) -> int:
        return len(self.items)


def parse_bank_record(rec: dict[str, Any]) -> BankItem:
    if not isinstance(rec, dict):
        raise ValueError("record is not an object")
    source_id = rec.get("source_id")
    if not isinstance(source_id, str) or not source_id.strip():
        raise ValueError("missing source_id")
    goal = EducationalGoal.from_dict(rec)
    question = Question.from_dict(rec)
    if not question.matches_type(goal.question_type):
        raise ValueError("options present iff question_type is multiple_choice")
    return BankItem(question=question, goal=goal, source_id=source_id)


def ingest_bank(path: str | Path) -> Bank:
    """Load a JSONL bank. Bad lines are rejected with their 1-based line number."""
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise FileUnreadable(f"cannot read bank {path}: {exc}") from exc
    items: list[BankItem] = []
    rejections: list[Rejection] = []
    seen: dict[str, int] = {}
    lines = raw.splitlines()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            rejections.append(Rejection(lineno, "blank line"))
            continue
        try:
            item = parse_bank_record(json.loads(line))
        except json.JSONDecodeError as exc:
            rejections.append(Rejection(lineno, f"invalid JSON: {exc.msg}"))
            continue
        except (ValueError, TypeError) as exc:
            rejections.append(Rejection(lineno, str(exc)))
            continue
        if item.source_id in seen:
            rejections.append(
                Rejection(lineno, f"duplicate source_id {item.source_id!r} (first on line {seen[item.source_id]})")
            )
            continue
        seen[item.source_id] = lineno
        items.append(item)
    if not items:
        raise EmptyBank(f"no valid records in {path}")
    return Bank(tuple(items), tuple(rejections), len(lines))


@dataclass(frozen=True)
class CurriculumSnippet:
    concept: str
    grade_span: tuple[int, int]
    text: str

    def __post_init__(self):
        object.__setattr__(self, "concept", normalize_concept(self.concept))
        lo, hi = self.grade_span
        if not 1 <= lo <= hi <= 9:
            raise ValueError(f"bad grade span {self.grade_span}")

    def covers(self, grade: int) -> bool:
        return self.grade_span[0] <= grade <= self.grade_span[1]


def load_curriculum(path: str | Path) -> list[CurriculumSnippet]:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise FileUnreadable(f"cannot read curriculum {path}: {exc}") from exc
    out = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            out.append(
                CurriculumSnippet(
                    rec["concept"], (int(rec["min_grade"]), int(rec["max_grade"])), rec["text"]
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise FileUnreadable(f"{path}:{lineno}: bad curriculum record ({exc})") from exc
    return out


@dataclass(frozen=True)
class ReferenceSet:
    easy: tuple[BankItem, ...] = ()
    medium: tuple[BankItem, ...] = ()
    hard: tuple[BankItem, ...] = ()
    fallback: frozenset[str] = field(default_factory=frozenset)

    def level(self, difficulty: Difficulty | str) -> tuple[BankItem, ...]:
        return getattr(self, Difficulty(difficulty).value)

    def all_items(self) -> list[BankItem]:
        return [*self.easy, *self.medium, *self.hard]


class KnowledgeStore:
    """Immutable after construction; retrieval is read-only."""

    def __init__(self, bank: Bank | Sequence[BankItem], curriculum: Sequence[CurriculumSnippet] = ()):
        self.items: tuple[BankItem, ...] = tuple(bank.items if isinstance(bank, Bank) else bank)
        self.curriculum: tuple[CurriculumSnippet, ...] = tuple(curriculum)

    @classmethod
    def from_files(cls, bank_path: str | Path, curriculum_path: str | Path | None = None):
        bank = ingest_bank(bank_path)
        curriculum = load_curriculum(curriculum_path) if curriculum_path else []
        return cls(bank, curriculum)

    @classmethod
    def bundled(cls) -> "KnowledgeStore":
        """The toy bank and curriculum shipped with the package."""
        data = resources.files("qgflow") / "data"
        with resources.as_file(data / "toy_bank.jsonl") as b, resources.as_file(
            data / "curriculum.jsonl"
        ) as c:
            return cls.from_files(b, c)

    # -- curriculum ----------------------------------------------------------

    @staticmethod
    def snippet_score(snippet: CurriculumSnippet, goal: EducationalGoal) -> int:
        return len((_tokens(snippet.text) | _tokens(snippet.concept)) & goal_tokens(goal))

    def retrieve_curriculum(self, goal: EducationalGoal, limit: int = 5) -> list[CurriculumSnippet]:
        if limit < 1:
            raise ValueError("limit must be positive")
        hits = [
            (i, s)
            for i, s in enumerate(self.curriculum)
            if s.concept in goal.knowledge_concepts and s.covers(goal.grade)
        ]
        hits.sort(key=lambda p: (-self.snippet_score(p[1], goal), p[0]))
        return [s for _, s in hits[:limit]]

    # -- anchors -------------------------------------------------------------

    @staticmethod
    def item_score(item: BankItem, goal: EducationalGoal) -> tuple[float, int]:
        primary = jaccard(item.goal.knowledge_concepts, goal.knowledge_concepts)
        secondary = len(_tokens(item.question.stem) & goal_tokens(goal))
        return primary, secondary

    def _rank(self, indexed: list[tuple[int, BankItem]], goal: EducationalGoal, k: int) -> list[BankItem]:
        overlapping = [p for p in indexed if p[1].goal.knowledge_concepts & goal.knowledge_concepts]
        pool = overlapping or indexed

        def key(p):
            primary, secondary = self.item_score(p[1], goal)
            return (-primary, -secondary, p[0])

        return [item for _, item in sorted(pool, key=key)[:k]]

    def retrieve_references(self, goal: EducationalGoal, k_anchor: int = 3) -> ReferenceSet:
        if k_anchor < 1:
            raise ValueError("k_anchor must be positive")
        levels: dict[str, tuple[BankItem, ...]] = {}
        fallback = set()
        for level in Difficulty:
            at_level = [(i, it) for i, it in enumerate(self.items) if it.goal.difficulty == level]
            same_grade = [p for p in at_level if p[1].goal.grade == goal.grade]
            if same_grade:
                levels[level.value] = tuple(self._rank(same_grade, goal, k_anchor))
                continue
            if not at_level:
                levels[level.value] = ()
                continue
            # nearest grade, lower grade on ties
            near = min({p[1].goal.grade for p in at_level}, key=lambda g: (abs(g - goal.grade), g))
            pool = [p for p in at_level if p[1].goal.grade == near]
            levels[level.value] = tuple(self._rank(pool, goal, k_anchor))
            fallback.add(level.value)
        return ReferenceSet(fallback=frozenset(fallback), **levels)
