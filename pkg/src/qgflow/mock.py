"""Deterministic scripted provider and reply builders.

Scripts are keyed by agent role. Each role keeps its own call counter per run,
so a run sees call indices 0, 1, 2, ... for every role regardless of what other
runs sharing the provider are doing.

A role's script can be:

* a string, returned for every call;
* a list, consumed by call index with the last element repeating;
* a dict ``{index: reply, "default": reply}``;
* a callable ``(request, call_index) -> reply``;

where a reply is either text or a :class:`ScriptedFailure`.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import threading
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

import yaml

from .errors import ConfigError, ProviderRejected, ProviderTimeout, TransientProviderError
from .gateway import CompletionRequest, ProviderReply


@dataclass(frozen=True)
class ScriptedFailure:
    kind: str = "transient"  # transient | reject | timeout

    def raise_(self):
        if self.kind == "transient":
            raise TransientProviderError("scripted transient failure")
        if self.kind == "timeout":
            raise ProviderTimeout("scripted timeout")
        if self.kind == "reject":
            raise ProviderRejected("scripted rejection (HTTP 400)")
        raise ValueError(f"unknown scripted failure kind {self.kind!r}")


TRANSIENT = ScriptedFailure("transient")
REJECT = ScriptedFailure("reject")
TIMEOUT = ScriptedFailure("timeout")


def estimate_tokens(text: str) -> int:
    return math.ceil(len(text) / 4)


@dataclass(frozen=True)
class CallRecord:
    role: str
    run_id: str | None
    index: int
    request: CompletionRequest


class ScriptExhausted(LookupError):
    pass


class ScriptedProvider:
    name = "mock"

    def __init__(
        self,
        scripts: Mapping[str, Any] | None = None,
        by_run: Mapping[str, Mapping[str, Any]] | None = None,
        fallback: Callable[[CompletionRequest, int], Any] | None = None,
    ):
        self.scripts = dict(scripts or {})
        self.by_run = {k: dict(v) for k, v in (by_run or {}).items()}
        self.fallback = fallback
        self._counters: Counter = Counter()
        self._calls: list[CallRecord] = []
        self._lock = threading.Lock()

    @property
    def calls(self) -> list[CallRecord]:
        with self._lock:
            return list(self._calls)

    def role_counts(self, run_id: str | None = ...) -> Counter:
        return Counter(
            c.role for c in self.calls if run_id is ... or c.run_id == run_id
        )

    def prompts(self, role: str) -> list[str]:
        return [c.request.user_prompt for c in self.calls if c.role == role]

    def _script_for(self, request: CompletionRequest) -> Any:
        run_scripts = self.by_run.get(request.run_id or "", {})
        for table in (run_scripts, self.scripts):
            if request.role in table:
                return table[request.role]
            if "*" in table:
                return table["*"]
        if self.fallback is not None:
            return self.fallback
        raise ScriptExhausted(f"no script for role {request.role!r}")

    @staticmethod
    def _resolve(script: Any, request: CompletionRequest, index: int) -> Any:
        if callable(script) and not isinstance(script, ScriptedFailure):
            return script(request, index)
        if isinstance(script, (list, tuple)):
            if not script:
                raise ScriptExhausted(f"empty script for role {request.role!r}")
            return script[min(index, len(script) - 1)]
        if isinstance(script, dict):
            if index in script:
                return script[index]
            if str(index) in script:
                return script[str(index)]
            if "default" in script:
                return script["default"]
            raise ScriptExhausted(f"no reply for {request.role!r} call {index}")
        return script

    def send(self, request: CompletionRequest) -> ProviderReply:
        with self._lock:
            key = (request.run_id, request.role)
            index = self._counters[key]
            self._counters[key] += 1
            self._calls.append(CallRecord(request.role, request.run_id, index, request))
        reply = self._resolve(self._script_for(request), request, index)
        if isinstance(reply, ScriptedFailure):
            reply.raise_()
        if isinstance(reply, (dict, list)):
            reply = json.dumps(reply)
        text = str(reply)
        return ProviderReply(
            text=text,
            prompt_tokens=estimate_tokens(request.system_prompt + request.user_prompt),
            completion_tokens=estimate_tokens(text),
        )


# --- script files -------------------------------------------------------------


def load_mock_script(path: str | Path, fallback=None) -> ScriptedProvider:
    """Load a YAML/JSON script file.

    Layout::

        roles:   {planner: [...], writer: {...}, ...}
        by_run:  {goal-id: {role: ...}}

    Replies that are mappings/lists (other than ``{"error": kind}``) are sent
    as their JSON encoding, so structured replies can be written inline.
    """
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read mock script {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("mock script must be a mapping")
    roles = data.get("roles", {k: v for k, v in data.items() if k != "by_run"})

    def decode_role_table(table):
        out = {}
        for role, script in table.items():
            if isinstance(script, dict) and not (set(script) == {"error"}):
                # index table; non-index keys are structured replies themselves
                if all(str(k).isdigit() or k == "default" for k in script):
                    out[role] = {
                        (int(k) if str(k).isdigit() else k): _as_reply(v) for k, v in script.items()
                    }
                    continue
            if isinstance(script, list):
                out[role] = [_as_reply(v) for v in script]
            else:
                out[role] = _as_reply(script)
        return out

    return ScriptedProvider(
        decode_role_table(roles),
        {run: decode_role_table(t) for run, t in (data.get("by_run") or {}).items()},
        fallback=fallback,
    )


def _as_reply(value: Any) -> Any:
    if isinstance(value, dict) and set(value) == {"error"}:
        return ScriptedFailure(value["error"])
    if isinstance(value, (dict, list)):
        return json.dumps(value)
    return value


# --- reply builders -------------------------------------------------------------


def plan_reply(
    concepts: Iterable[str],
    competency: str,
    angles: Sequence[str] = (
        "a real-life context",
        "a comparison task",
        "a step-by-step computation",
    ),
) -> str:
    return json.dumps(
        {
            "concept_plan": {
                "concepts": sorted(concepts),
                "prerequisites": ["prior knowledge"],
                "misconceptions": ["a common slip"],
            },
            "competency_plan": {
                "competencies": [competency],
                "pathways": ["reason from the given conditions"],
            },
            "directions": [{"id": i, "angle": a} for i, a in enumerate(angles)],
        }
    )


def question_reply(
    direction_id: int | None,
    stem: str,
    answer: str,
    options: Sequence[str] | None = None,
    rationale: str | None = None,
) -> str:
    d: dict[str, Any] = {"stem": stem, "answer": answer}
    if direction_id is not None:
        d["direction_id"] = direction_id
    if options is not None:
        d["options"] = list(options)
    if rationale is not None:
        d["rationale"] = rationale
    return json.dumps(d)


def evaluation_reply(
    dimensions: Sequence[str],
    failing: Iterable[str] = (),
    rank: float = 8.0,
    feedback: str = "",
    reasons: Mapping[str, str] | None = None,
) -> str:
    failing = set(failing)
    reasons = dict(reasons or {})
    verdicts = []
    for dim in dimensions:
        ok = dim not in failing
        verdicts.append(
            {"dimension": dim, "pass": ok, "reason": reasons.get(dim, "ok" if ok else f"{dim} not met")}
        )
    return json.dumps({"verdicts": verdicts, "rank": rank, "feedback": feedback})


def checker_reply(
    answer_correct: bool = True,
    unambiguous: bool = True,
    no_leading_hints: bool = True,
    notes: str = "",
) -> str:
    return json.dumps(
        {
            "answer_correct": answer_correct,
            "unambiguous": unambiguous,
            "no_leading_hints": no_leading_hints,
            "notes": notes or "checked",
        }
    )


def judge_scores_reply(knowledge, difficulty, competence, solvability) -> str:
    return json.dumps(
        {
            "knowledge": knowledge,
            "difficulty": difficulty,
            "competence": competence,
            "solvability": solvability,
        }
    )


def pairwise_reply(winner: str, reason: str = "") -> str:
    return json.dumps({"winner": winner, "reason": reason or f"{winner} preferred"})


# --- simulated responder ---------------------------------------------------------

_FIELD = {
    "direction": re.compile(r"Direction id:\s*(\d+)"),
    "qtype": re.compile(r"Question type:\s*(\w+)"),
    "grade": re.compile(r"Grade:\s*(\d+)"),
    "concepts": re.compile(r"Knowledge concepts:\s*(.+)"),
    "competency": re.compile(r"Core competency:\s*(.+)"),
    "n_directions": re.compile(r"exactly (\d+) directions"),
}


def _grab(name: str, text: str, default: str = "") -> str:
    m = _FIELD[name].search(text)
    return m.group(1).strip() if m else default


class SimulatedResponder:
    """Content-aware mock that fabricates schema-valid replies for every role.

    Pass/fail and scores are drawn from a hash of (seed, run id, prompt), so replies are
    reproducible under any scheduling. Meant for smoke runs and cost plumbing,
    not for judging question quality.
    """

    def __init__(self, pass_rate: float = 0.7, seed: int = 0):
        self.pass_rate = pass_rate
        self.seed = seed

    def _u(self, *parts: Any) -> float:
        h = hashlib.sha256(repr((self.seed, *parts)).encode()).digest()
        return int.from_bytes(h[:8], "big") / 2**64

    def __call__(self, request: CompletionRequest, index: int) -> str:
        from .agents import EDUCATOR_DIMENSIONS, SOLVER_DIMENSIONS

        p = request.user_prompt
        role = request.role
        if role == "planner":
            n = int(_grab("n_directions", p, "3"))
            concepts = [c.strip() for c in _grab("concepts", p).split(",") if c.strip()]
            angles = [
                "a real-life scenario",
                "comparing quantities",
                "a multi-step computation",
                "an error-analysis framing",
                "a table or chart reading",
            ]
            angles += [f"variant {i}" for i in range(len(angles), n)]
            return plan_reply(concepts, _grab("competency", p), angles[:n])
        if role in ("writer", "baseline"):
            d = _grab("direction", p, "")
            direction = int(d) if d else None
            concepts = _grab("concepts", p)
            grade = _grab("grade", p, "?")
            salt = int(self._u(request.run_id, p, index) * 1000)
            stem = (
                f"Grade {grade} task on {concepts} (variant {direction}, draft {salt}): "
                f"a class collects {salt % 50 + 10} items and shares them equally among 5 groups. "
                f"How many items does each group get?"
            )
            answer = str((salt % 50 + 10) / 5).rstrip("0").rstrip(".")
            options = None
            if _grab("qtype", p) == "multiple_choice":
                wrong = [str(float(answer) + k) for k in (1, 2, 3)]
                options = [answer, *wrong]
            return question_reply(direction, stem, answer, options, "divide the total by 5")
        if role in ("solver", "educator"):
            dims = SOLVER_DIMENSIONS if role == "solver" else EDUCATOR_DIMENSIONS
            failing = [d for d in dims if self._u(role, p, d) > self.pass_rate ** (1 / len(dims))]
            rank = round(4 + 6 * self._u(role, p, "rank"), 1)
            return evaluation_reply(dims, failing, rank, "tighten the wording" if failing else "")
        if role == "checker":
            return checker_reply(answer_correct=self._u("check", p) < 0.95)
        if role == "pairwise_judge":
            r = self._u("pair", request.model, p)
            return pairwise_reply("A" if r < 0.45 else "B" if r < 0.9 else "tie")
        if role == "judge":
            s = [round(7 + 3 * self._u("judge", request.model, p, k), 1) for k in range(4)]
            return judge_scores_reply(*s)
        return "{}"
