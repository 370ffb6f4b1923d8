"""JSON schemas for every structured reply the agents and judges expect.

Validation is done with ``jsonschema``; the registry maps a schema tag to a
schema dict. Semantic checks that a schema cannot express (dimension sets,
option/answer consistency) live with the agents.
"""

from __future__ import annotations

from typing import Any

_verdict = {
    "type": "object",
    "required": ["pass"],
    "properties": {
        "dimension": {"type": "string", "minLength": 1},
        "pass": {"type": "boolean"},
        "reason": {"type": "string"},
    },
}

# inside an evaluator report each verdict must name its dimension
_dimension_verdict = {**_verdict, "required": ["dimension", "pass"]}

_evaluation = {
    "type": "object",
    "required": ["verdicts", "rank"],
    "properties": {
        "verdicts": {"type": "array", "items": _dimension_verdict},
        "rank": {"type": "number", "minimum": 0, "maximum": 10},
        "feedback": {"type": "string"},
    },
}

_str_list = {"type": "array", "items": {"type": "string"}}

SCHEMAS: dict[str, dict[str, Any]] = {
    "verdict": _verdict,
    "plan": {
        "type": "object",
        "required": ["concept_plan", "competency_plan", "directions"],
        "properties": {
            "concept_plan": {
                "type": "object",
                "required": ["concepts", "prerequisites", "misconceptions"],
                "properties": {
                    "concepts": _str_list,
                    "prerequisites": _str_list,
                    "misconceptions": _str_list,
                },
            },
            "competency_plan": {
                "type": "object",
                "required": ["competencies", "pathways"],
                "properties": {"competencies": _str_list, "pathways": _str_list},
            },
            "directions": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["id", "angle"],
                    "properties": {
                        "id": {"type": "integer", "minimum": 0},
                        "angle": {"type": "string", "minLength": 1},
                    },
                },
            },
        },
    },
    "question": {
        "type": "object",
        "required": ["stem", "answer"],
        "properties": {
            "direction_id": {"type": "integer", "minimum": 0},
            "stem": {"type": "string", "minLength": 1},
            "answer": {"type": ["string", "number"]},
            "options": {"type": ["array", "null"], "items": {"type": ["string", "number"]}},
            "rationale": {"type": ["string", "null"]},
        },
    },
    "solver_report": _evaluation,
    "educator_report": _evaluation,
    "checker": {
        "type": "object",
        "required": ["answer_correct", "unambiguous", "no_leading_hints"],
        "properties": {
            "answer_correct": {"type": "boolean"},
            "unambiguous": {"type": "boolean"},
            "no_leading_hints": {"type": "boolean"},
            "notes": {"type": "string"},
        },
    },
    "judge_scores": {
        "type": "object",
        "required": ["knowledge", "difficulty", "competence", "solvability"],
        "properties": {
            k: {"type": "number", "minimum": 0, "maximum": 10}
            for k in ("knowledge", "difficulty", "competence", "solvability")
        },
    },
    "pairwise": {
        "type": "object",
        "required": ["winner"],
        "properties": {
            "winner": {"type": "string", "enum": ["A", "B", "tie"]},
            "reason": {"type": "string"},
        },
    },
}


def register_schema(tag: str, schema: dict[str, Any]) -> None:
    SCHEMAS[tag] = schema
