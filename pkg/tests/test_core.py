import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qgflow.core import (
    CandidateRecord,
    DimensionVerdict,
    EducationalGoal,
    EvaluationReport,
    Question,
    best_candidates,
    build_pass_set,
    select_final,
)
from qgflow.errors import EmptyPassSet, MissingReport

from conftest import make_record


def oracle_pass_set(cands):
    return [c for c in cands if all(v.passed for v in c.report.solver_verdicts)
            and all(v.passed for v in c.report.educator_verdicts)]


def beats(a, b):
    # True if record a (at its index) must be preferred over b
    (ra, ia), (rb, ib) = a, b
    sa = ra.report.rank_solver + ra.report.rank_educator
    sb = rb.report.rank_solver + rb.report.rank_educator
    if sa != sb:
        return sa > sb
    if ra.report.rank_educator != rb.report.rank_educator:
        return ra.report.rank_educator > rb.report.rank_educator
    return ia < ib


def oracle_select(pass_set):
    indexed = list(zip(pass_set, range(len(pass_set))))
    for cand in indexed:
        if all(cand is other or beats(cand, other) for other in indexed):
            return cand[0]
    raise AssertionError("no maximum")


def oracle_order(cands):
    # selection sort with the comparison oracle
    remaining = list(zip(cands, range(len(cands))))
    out = []
    while remaining:
        top = next(c for c in remaining if all(c is o or beats(c, o) for o in remaining))
        out.append(top[0])
        remaining.remove(top)
    return out


record_st = st.builds(
    make_record,
    ps=st.booleans(),
    pe=st.booleans(),
    rs=st.integers(0, 10).map(float),
    re_=st.integers(0, 10).map(float),
)


# --- goal / question invariants ------------------------------------------------


@pytest.mark.parametrize("grade", [0, 10, -1])
def test_grade_out_of_range(grade):
    with pytest.raises(ValueError, match="grade out of range"):
        EducationalGoal(grade, frozenset({"x"}), "easy", "c")


def test_goal_requires_concepts_and_competency():
    with pytest.raises(ValueError):
        EducationalGoal(3, frozenset(), "easy", "c")
    with pytest.raises(ValueError):
        EducationalGoal(3, frozenset({"x"}), "easy", "  ")
    with pytest.raises(ValueError):
        EducationalGoal(3, frozenset({"x"}), "trivial", "c")


def test_goal_roundtrip():
    g = EducationalGoal(5, frozenset({"Repeating  Decimals", "fractions"}), "hard", "reasoning", "multiple_choice")
    assert g.knowledge_concepts == {"repeating decimals", "fractions"}
    assert EducationalGoal.from_dict(g.to_dict()) == g


def test_question_options_need_exactly_one_answer():
    Question("pick", "B ", options=("a", "b", "c"))
    with pytest.raises(ValueError):
        Question("pick", "d", options=("a", "b", "c"))
    with pytest.raises(ValueError):
        Question("pick", "a", options=("a", "A", "c"))
    with pytest.raises(ValueError):
        Question("", "a")


def test_failing_verdict_needs_reason():
    with pytest.raises(ValueError):
        DimensionVerdict("solvability", False, "")
    DimensionVerdict("solvability", True, "")


@pytest.mark.parametrize("rank", [-0.1, 10.5, float("nan"), float("inf")])
def test_rank_bounds(rank):
    with pytest.raises(ValueError):
        EvaluationReport([], [], rank, 5)


@given(st.lists(st.booleans(), max_size=6), st.lists(st.booleans(), max_size=6))
def test_pass_flags_derived_from_verdicts(solver, educator):
    sv = [DimensionVerdict(f"s{i}", p, "r") for i, p in enumerate(solver)]
    ev = [DimensionVerdict(f"e{i}", p, "r") for i, p in enumerate(educator)]
    rep = EvaluationReport(sv, ev, 1, 1)
    assert rep.pass_solver == all(solver)
    assert rep.pass_educator == all(educator)


# --- build_pass_set ------------------------------------------------------------


def test_pass_set_examples():
    a, b, c = make_record(True, True), make_record(True, False), make_record(False, True)
    assert build_pass_set([a, b, c]) == [a]
    assert build_pass_set([]) == []


def test_pass_set_all_flag_combinations_in_two_positions():
    combos = list(itertools.product([True, False], repeat=2))
    for (f1, f2) in itertools.product(combos, repeat=2):
        cands = [make_record(*f1, stem="x"), make_record(*f2, stem="y")]
        assert build_pass_set(cands) == oracle_pass_set(cands)


def test_missing_report():
    rec = CandidateRecord(Question("q", "1"), 0)
    with pytest.raises(MissingReport):
        build_pass_set([make_record(), rec])
    with pytest.raises(MissingReport):
        best_candidates([rec], 1)
    with pytest.raises(MissingReport):
        select_final([rec])


@settings(max_examples=300)
@given(st.lists(record_st, max_size=8))
def test_gating_soundness(cands):
    out = build_pass_set(cands)
    assert out == oracle_pass_set(cands)
    assert all(c.report.pass_solver and c.report.pass_educator for c in out)
    excluded = [c for c in cands if not any(c is o for o in out)]
    assert not any(c.report.pass_solver and c.report.pass_educator for c in excluded)


# --- select_final / best_candidates --------------------------------------------


def test_select_examples():
    a, b = make_record(rs=8, re_=7), make_record(rs=9, re_=9)
    assert select_final([a, b]) is b
    a, b = make_record(rs=8, re_=9), make_record(rs=9, re_=8)
    assert select_final([a, b]) is a
    a, b = make_record(rs=7, re_=7, stem="a"), make_record(rs=7, re_=7, stem="b")
    assert select_final([a, b]) is a
    with pytest.raises(EmptyPassSet):
        select_final([])


def test_tie_break_chain_exhaustive_over_score_pairs():
    scores = [(s, e) for s in range(11) for e in range(11)]
    for (s1, e1), (s2, e2) in itertools.product(scores, repeat=2):
        a, b = make_record(rs=s1, re_=e1, stem="a"), make_record(rs=s2, re_=e2, stem="b")
        assert select_final([a, b]) is oracle_select([a, b])


@settings(max_examples=300)
@given(st.lists(record_st, min_size=1, max_size=8))
def test_selection_optimality(pass_set):
    best = select_final(pass_set)
    assert best is oracle_select(pass_set)
    for other in pass_set:
        assert other.report.rank_sum <= best.report.rank_sum
        if other.report.rank_sum == best.report.rank_sum:
            assert other.report.rank_educator <= best.report.rank_educator


def test_best_candidates_examples():
    recs = [make_record(rs=8, re_=7), make_record(rs=9, re_=9), make_record(rs=6, re_=6)]
    assert best_candidates(recs, 1) == [recs[1]]
    assert best_candidates(recs, 10) == [recs[1], recs[0], recs[2]]
    with pytest.raises(ValueError):
        best_candidates(recs, 0)


def test_best_candidates_duplicate_sums():
    recs = [make_record(rs=s, re_=e, stem=str(i)) for i, (s, e) in enumerate([(5, 5), (4, 6), (6, 4), (5, 5), (3, 7)])]
    got = best_candidates(recs, 5)
    assert [r.question.stem for r in got] == [r.question.stem for r in oracle_order(recs)]
    assert [r.question.stem for r in got] == ["4", "1", "0", "3", "2"]


def test_randomized_sets_against_oracles():
    """1000 random candidate sets; zero mismatches against the brute-force oracles."""
    rng = random.Random(7)
    mismatches = 0
    for _ in range(1000):
        n = rng.randint(0, 8)
        cands = [
            make_record(rng.random() < 0.6, rng.random() < 0.6, rng.randint(0, 10), rng.randint(0, 10), stem=str(i))
            for i in range(n)
        ]
        ps = build_pass_set(cands)
        mismatches += ps != oracle_pass_set(cands)
        if ps:
            mismatches += select_final(ps) is not oracle_select(ps)
        if cands:
            mismatches += best_candidates(cands, len(cands)) != oracle_order(cands)
    assert mismatches == 0


@given(st.lists(record_st, min_size=1, max_size=6))
def test_determinism(cands):
    assert build_pass_set(cands) == build_pass_set(list(cands))
    assert select_final(cands) is select_final(cands)
