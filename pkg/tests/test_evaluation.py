import csv
import io
import itertools
import json
import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qgflow.agents import Agents
from qgflow.core import EducationalGoal, Question
from qgflow.errors import EvaluatorOutputInvalid, MisalignedOutputs
from qgflow.evaluation import (
    ConsistencyScore,
    MethodSummary,
    judge_consistency,
    mean_consistency,
    presentation_orders,
    winrate_matrix,
    write_reports,
)
from qgflow.gateway import Gateway
from qgflow.metrics import diversity_report
from qgflow.mock import ScriptedProvider, judge_scores_reply, pairwise_reply


def judges_by_model(table):
    """Judge replies keyed by the request's model id."""

    def reply(request, index):
        return table[request.model](request, index)

    return Agents(Gateway(ScriptedProvider({"judge": reply, "pairwise_judge": reply}))), reply


def fixed_scores(*scores):
    return lambda request, index: judge_scores_reply(*scores)


Q = Question("What is 1/3 as a decimal?", "0.333...")


def test_single_judge_identity(goal):
    agents, _ = judges_by_model({"j1": fixed_scores(9, 8, 8, 9)})
    s = judge_consistency(Q, goal, ["j1"], agents)
    assert s.as_tuple() == (9, 8, 8, 9)


def test_two_judge_mean(goal):
    agents, _ = judges_by_model({"j1": fixed_scores(9, 8, 8, 9), "j2": fixed_scores(10, 9, 9, 10)})
    s = judge_consistency(Q, goal, ["j1", "j2"], agents)
    assert s.as_tuple() == (9.5, 8.5, 8.5, 9.5)
    assert s.per_judge["j2"]["knowledge"] == 10


@settings(max_examples=50)
@given(st.lists(st.tuples(*[st.floats(0, 10, allow_nan=False)] * 4), min_size=1, max_size=5), st.randoms())
def test_judge_order_invariance(scores, rnd):
    goal = EducationalGoal(5, frozenset({"fractions"}), "easy", "computation")
    table = {f"j{i}": fixed_scores(*s) for i, s in enumerate(scores)}
    agents, _ = judges_by_model(table)
    names = list(table)
    shuffled = list(names)
    rnd.shuffle(shuffled)
    a = judge_consistency(Q, goal, names, agents)
    b = judge_consistency(Q, goal, shuffled, agents)
    assert a.as_tuple() == b.as_tuple()


def test_failed_judge_dropped(goal):
    agents, _ = judges_by_model({"j1": fixed_scores(9, 8, 8, 9), "bad": lambda r, i: "no scores here"})
    s = judge_consistency(Q, goal, ["j1", "bad"], agents)
    assert s.as_tuple() == (9, 8, 8, 9) and s.failed_judges == ("bad",)
    with pytest.raises(EvaluatorOutputInvalid):
        judge_consistency(Q, goal, ["bad"], agents)


def test_judge_score_range(goal):
    agents, _ = judges_by_model({"j": fixed_scores(11, 8, 8, 9)})
    with pytest.raises(EvaluatorOutputInvalid):
        judge_consistency(Q, goal, ["j"], agents)


def test_mean_consistency():
    scores = [ConsistencyScore(9, 8, 8, 9), ConsistencyScore(10, 9, 9, 10)]
    assert mean_consistency(scores) == {"knowledge": 9.5, "difficulty": 8.5, "competence": 8.5, "solvability": 9.5}


# --- win rate -----------------------------------------------------------------------


def many_goals(n):
    return [EducationalGoal(1 + i % 9, frozenset({f"c{i}"}), "easy", "computation") for i in range(n)]


def outputs_for(methods, n):
    return {m: [Question(f"{m} question {i}", str(i)) for i in range(n)] for m in methods}


def slot_a_judge(request, index):
    return pairwise_reply("A")


def method_of_slot(prompt, slot):
    m = re.search(rf"Question {slot}:\s*(\w+) question", prompt)
    return m.group(1)


def prefers(method):
    def reply(request, index):
        p = request.user_prompt
        if method_of_slot(p, "A") == method:
            return pairwise_reply("A")
        if method_of_slot(p, "B") == method:
            return pairwise_reply("B")
        return pairwise_reply("tie")

    return reply


def identity_holds(m):
    for a, b in itertools.permutations(m.methods, 2):
        assert m.win(a, b) + m.win(b, a) + m.tie(a, b) == 1


def test_slot_a_bias_is_balanced():
    n = 500
    agents, _ = judges_by_model({"j": slot_a_judge})
    m = winrate_matrix(outputs_for(["ours", "base"], n), many_goals(n), ["j"], agents, seed=3)
    assert 0.45 <= m.win("ours", "base") <= 0.55
    assert 0.45 <= m.win("base", "ours") <= 0.55
    identity_holds(m)


def test_preference_is_recovered_regardless_of_slot():
    n = 40
    agents, _ = judges_by_model({"j": prefers("ours")})
    m = winrate_matrix(outputs_for(["ours", "base", "other"], n), many_goals(n), ["j"], agents, seed=1)
    assert m.win("ours", "base") == 1.0 and m.win("base", "ours") == 0.0
    assert m.tie("base", "other") == 1.0
    identity_holds(m)


def test_identical_copy_ties():
    n = 10
    qs = [Question(f"same question {i}", "1") for i in range(n)]

    def tie_if_same(request, index):
        p = request.user_prompt
        a = re.search(r"Question A:\s*(.+)", p).group(1)
        b = re.search(r"Question B:\s*(.+)", p).group(1)
        return pairwise_reply("tie" if a == b else "A")

    agents, _ = judges_by_model({"j": tie_if_same})
    m = winrate_matrix({"x": qs, "x_copy": list(qs)}, many_goals(n), ["j"], agents)
    assert m.tie("x", "x_copy") == 1.0
    identity_holds(m)


def test_gold_column_and_csv():
    n = 6
    agents, _ = judges_by_model({"j1": prefers("ours"), "j2": slot_a_judge})
    gold = [Question(f"gold question {i}", str(i)) for i in range(n)]
    m = winrate_matrix(outputs_for(["ours", "base"], n), many_goals(n), ["j1", "j2"], agents, gold, seed=5)
    assert set(m.gold_wins) == {"ours", "base"}
    assert m.comparisons[0][1] == 2 * n
    rows = list(csv.reader(io.StringIO(m.to_csv())))
    assert rows[0] == ["row_over_column", "ours", "base", "gold"]
    assert len(rows) == 3


def test_misaligned():
    agents, _ = judges_by_model({"j": slot_a_judge})
    with pytest.raises(MisalignedOutputs):
        winrate_matrix({"a": [Q], "b": [Q, Q]}, many_goals(1), ["j"], agents)
    with pytest.raises(MisalignedOutputs):
        winrate_matrix({"a": [Q]}, many_goals(1), ["j"], agents, gold=[Q, Q])


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 30), st.integers(0, 10**6))
def test_identity_under_random_judges(n, seed):
    import random

    def rnd_judge(request, index):
        r = random.Random(f"{seed}|{request.user_prompt}")
        return pairwise_reply(r.choice(["A", "B", "tie"]))

    agents, _ = judges_by_model({"j": rnd_judge})
    m = winrate_matrix(outputs_for(["a", "b", "c"], n), many_goals(n), ["j"], agents, seed=seed)
    identity_holds(m)


@given(st.integers(1, 200), st.integers(0, 1000))
def test_presentation_orders_balanced(n, seed):
    import random

    flags = presentation_orders(n, random.Random(seed))
    assert len(flags) == n
    assert abs(sum(flags) - n / 2) <= 0.5


def test_reports_deterministic(tmp_path):
    n = 8
    goals = many_goals(n)

    def run(out):
        agents, _ = judges_by_model({"j": slot_a_judge})
        outs = outputs_for(["ours", "base"], n)
        m = winrate_matrix(outs, goals, ["j"], agents, seed=9)
        summaries = [MethodSummary(k, diversity_report(v[:3])) for k, v in outs.items()]
        write_reports(out, summaries, m, {"seed": 9})
        return {p.name: p.read_bytes() for p in out.iterdir()}

    a, b = run(tmp_path / "a"), run(tmp_path / "b")
    assert a == b
    assert set(a) == {"report.json", "table.csv", "winrate.csv"}
    header = a["table.csv"].decode().splitlines()[0]
    assert header == "method,bleu,meteor_lite,rouge_l,embed_sim,knowledge,difficulty,competence,solvability,win_rate_vs_gold"
    assert json.loads(a["report.json"])["notes"]["meteor_lite"]
