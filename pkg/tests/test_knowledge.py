import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qgflow.core import EducationalGoal
from qgflow.errors import EmptyBank, FileUnreadable
from qgflow.knowledge import CurriculumSnippet, KnowledgeStore, ingest_bank, load_curriculum


def rec(sid, grade=5, concepts=("fractions",), difficulty="easy", stem="What is 1/2 of 4?", **kw):
    d = {
        "source_id": sid,
        "stem": stem,
        "answer": "2",
        "grade": grade,
        "knowledge_concepts": list(concepts),
        "difficulty": difficulty,
        "competency": "computation",
        "question_type": "fill_in_blank",
    }
    d.update(kw)
    return d


def write_jsonl(path, rows):
    path.write_text("\n".join(r if isinstance(r, str) else json.dumps(r) for r in rows) + "\n", encoding="utf-8")
    return path


def goal(grade=5, concepts=("fractions",), difficulty="medium"):
    return EducationalGoal(grade, frozenset(concepts), difficulty, "reasoning")


def test_ingest_valid(tmp_path):
    bank = ingest_bank(write_jsonl(tmp_path / "b.jsonl", [rec("a"), rec("b"), rec("c")]))
    assert len(bank) == 3 and bank.rejections == ()


def test_ingest_grade_out_of_range(tmp_path):
    bank = ingest_bank(write_jsonl(tmp_path / "b.jsonl", [rec("a"), rec("b", grade=12), rec("c")]))
    assert len(bank) == 2
    (r,) = bank.rejections
    assert r.line == 2 and "grade out of range" in r.reason


def test_ingest_duplicate_cites_first_line(tmp_path):
    rows = [rec(f"id{i}") for i in range(1, 10)]
    rows[8] = rec("id4")
    bank = ingest_bank(write_jsonl(tmp_path / "b.jsonl", rows))
    (r,) = bank.rejections
    assert r.line == 9 and "line 4" in r.reason


def test_ingest_type_mismatch_and_bad_json(tmp_path):
    rows = [rec("a"), "{not json", rec("b", question_type="multiple_choice"), rec("c", options=["2", "3"])]
    bank = ingest_bank(write_jsonl(tmp_path / "b.jsonl", rows))
    assert [r.line for r in bank.rejections] == [2, 3, 4]


def test_ingest_errors(tmp_path):
    with pytest.raises(FileUnreadable):
        ingest_bank(tmp_path / "missing.jsonl")
    with pytest.raises(EmptyBank):
        ingest_bank(write_jsonl(tmp_path / "b.jsonl", [rec("a", grade=0)]))


@settings(max_examples=50)
@given(st.lists(st.sampled_from(["ok", "dup", "badgrade", "blank", "junk"]), min_size=1, max_size=20))
def test_ingest_totality(tmp_path_factory, kinds):
    rows = [rec("anchor")]
    for i, k in enumerate(kinds):
        rows.append({"ok": rec(f"x{i}"), "dup": rec("anchor"), "badgrade": rec(f"g{i}", grade=99),
                     "blank": "", "junk": "[1,"}[k])
    path = write_jsonl(tmp_path_factory.mktemp("bank") / "b.jsonl", rows)
    bank = ingest_bank(path)
    assert len(bank.items) + len(bank.rejections) == bank.line_count == len(rows)


# --- curriculum ------------------------------------------------------------------


def test_bundled_repeating_decimals_snippet_first():
    store = KnowledgeStore.bundled()
    g = goal(5, ["repeating decimals"])
    hits = store.retrieve_curriculum(g)
    assert hits and hits[0].concept == "repeating decimals"
    assert 5 in range(hits[0].grade_span[0], hits[0].grade_span[1] + 1)


def test_curriculum_no_intersection():
    store = KnowledgeStore.bundled()
    assert store.retrieve_curriculum(goal(5, ["topology"])) == []


def test_curriculum_ranking_matches_hand_scores():
    snippets = [
        CurriculumSnippet("fractions", (3, 6), "unit fractions on a number line"),       # overlap: fractions -> 1
        CurriculumSnippet("fractions", (3, 6), "equivalent fractions and reasoning"),    # fractions, reasoning -> 2
        CurriculumSnippet("decimals", (3, 6), "fractions and decimals reasoning"),       # concept not in goal
        CurriculumSnippet("fractions", (7, 9), "fractions reasoning"),                   # wrong grade
        CurriculumSnippet("fractions", (4, 5), "compare fractions with reasoning"),      # 2, later index
    ]
    store = KnowledgeStore([], snippets)
    got = store.retrieve_curriculum(goal(5, ["fractions"]), limit=5)
    assert got == [snippets[1], snippets[4], snippets[0]]
    assert store.retrieve_curriculum(goal(5, ["fractions"]), limit=1) == [snippets[1]]


def test_curriculum_span_validation(tmp_path):
    with pytest.raises(ValueError):
        CurriculumSnippet("x", (6, 5), "t")
    path = write_jsonl(tmp_path / "c.jsonl", [{"concept": "x", "min_grade": 0, "max_grade": 3, "text": "t"}])
    with pytest.raises(FileUnreadable):
        load_curriculum(path)


# --- anchors ---------------------------------------------------------------------


def _store(rows, tmp_path):
    return KnowledgeStore(ingest_bank(write_jsonl(tmp_path / "b.jsonl", rows)))


def test_full_reference_set(tmp_path):
    rows = [rec(f"{d}{i}", difficulty=d) for d in ("easy", "medium", "hard") for i in range(4)]
    refs = _store(rows, tmp_path).retrieve_references(goal(), k_anchor=3)
    assert all(len(refs.level(d)) == 3 for d in ("easy", "medium", "hard"))
    assert refs.fallback == frozenset()
    assert all(i.goal.grade == 5 for i in refs.all_items())


def test_fallback_to_nearest_grade(tmp_path):
    rows = [rec("e", difficulty="easy"), rec("m", difficulty="medium"),
            rec("h4", grade=3, difficulty="hard"), rec("h6", grade=6, difficulty="hard"), rec("h7", grade=7, difficulty="hard")]
    refs = _store(rows, tmp_path).retrieve_references(goal(), k_anchor=3)
    assert [i.source_id for i in refs.hard] == ["h6"]
    assert refs.fallback == {"hard"}


def test_fallback_prefers_lower_grade_on_tie(tmp_path):
    rows = [rec("e", difficulty="easy"), rec("h6", grade=6, difficulty="hard"), rec("h4", grade=4, difficulty="hard")]
    refs = _store(rows, tmp_path).retrieve_references(goal(), k_anchor=3)
    assert [i.source_id for i in refs.hard] == ["h4"]
    assert refs.medium == ()


def jaccard_oracle(a, b):
    a, b = set(a), set(b)
    return len(a & b) / len(a | b)


def test_overlap_ranking_matches_jaccard_oracle(tmp_path):
    concept_sets = [
        ["fractions"], ["fractions", "decimals"], ["ratio"], ["fractions", "ratio", "area"], ["decimals"],
        ["fractions"], ["ratio", "decimals"], ["area"], ["fractions", "decimals", "ratio"], ["decimals", "fractions"],
    ]
    rows = [rec(f"i{i}", concepts=c, difficulty="medium", stem=f"item {i}") for i, c in enumerate(concept_sets)]
    g = goal(5, ["fractions", "decimals"])
    refs = _store(rows, tmp_path).retrieve_references(g, k_anchor=10)
    scores = {f"i{i}": jaccard_oracle(c, g.knowledge_concepts) for i, c in enumerate(concept_sets)}
    expected = sorted((s for s in scores if scores[s] > 0), key=lambda s: (-scores[s], int(s[1:])))
    assert [i.source_id for i in refs.medium] == expected
    assert expected[:3] == ["i1", "i9", "i8"]


def test_retrieval_determinism_and_purity():
    store = KnowledgeStore.bundled()
    for grade in range(1, 10):
        for concept in ["fractions", "repeating decimals", "probability"]:
            g = goal(grade, [concept])
            a, b = store.retrieve_references(g), store.retrieve_references(g)
            assert a == b
            for level in ("easy", "medium", "hard"):
                items = a.level(level)
                assert len(items) <= 3
                if level not in a.fallback:
                    assert all(i.goal.grade == grade for i in items)
                keys = [(-store.item_score(i, g)[0], -store.item_score(i, g)[1]) for i in items]
                assert keys == sorted(keys)


def test_bundled_bank_coverage():
    store = KnowledgeStore.bundled()
    assert 50 <= len(store.items) <= 80
    assert {i.goal.grade for i in store.items} == set(range(1, 10))
    assert {i.goal.difficulty.value for i in store.items} == {"easy", "medium", "hard"}
    assert {i.goal.question_type.value for i in store.items} == {"multiple_choice", "fill_in_blank"}
