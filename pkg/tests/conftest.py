from __future__ import annotations

import pytest

from qgflow.core import CandidateRecord, DimensionVerdict, EducationalGoal, EvaluationReport, Question


def make_report(ps: bool = True, pe: bool = True, rs: float = 5.0, re_: float = 5.0) -> EvaluationReport:
    sv = [DimensionVerdict("solvability", ps, "" if ps else "unsolvable")]
    ev = [DimensionVerdict("difficulty", pe, "" if pe else "too easy")]
    return EvaluationReport(sv, ev, rs, re_)


def make_record(ps=True, pe=True, rs=5.0, re_=5.0, direction_id=0, stem="q") -> CandidateRecord:
    return CandidateRecord(Question(stem, "1"), direction_id, 0, make_report(ps, pe, rs, re_))


@pytest.fixture
def goal() -> EducationalGoal:
    return EducationalGoal(5, frozenset({"repeating decimals"}), "medium", "reasoning", "fill_in_blank")


@pytest.fixture
def mc_goal() -> EducationalGoal:
    return EducationalGoal(8, frozenset({"pythagorean theorem"}), "hard", "modeling", "multiple_choice")


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
