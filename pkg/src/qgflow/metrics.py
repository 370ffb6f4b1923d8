"""Pairwise text-similarity metrics used for the diversity report.

All scores are on a 0-100 scale. Lower mean pairwise similarity among
questions for one goal means more diverse output.

Tokenization is fixed: lowercase; each CJK ideograph/kana is one token; a
number (with optional decimal part) is one token; any other run of letters is
one token. Punctuation is dropped.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Protocol, Sequence

import numpy as np

from .core import Question
from .errors import EmbedderUnavailable, EmptySequence, TooFewQuestions

_TOKEN = re.compile(
    r"[぀-ヿ㐀-䶿一-鿿豈-﫿]"  # one CJK char per token
    r"|\d+(?:[.,]\d+)*"
    r"|[^\W\d_]+",
    re.UNICODE,
)


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def _check(candidate: Sequence[str], reference: Sequence[str]) -> None:
    if not candidate or not reference:
        raise EmptySequence("both sequences must be non-empty")


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidate: Sequence[str], reference: Sequence[str], max_n: int = 4) -> float:
    """Sentence BLEU against a single reference.

    Orders the candidate is too short for are dropped from the geometric mean.
    An order with zero matches gets add-one smoothing ``1 / (total + 1)``;
    when not even a unigram matches the score is floored at 0.
    """
    _check(candidate, reference)
    log_sum, orders = 0.0, 0
    for n in range(1, max_n + 1):
        cand = _ngrams(candidate, n)
        total = sum(cand.values())
        if total == 0:
            break
        ref = _ngrams(reference, n)
        matches = sum(min(c, ref[g]) for g, c in cand.items())
        if matches == 0:
            if n == 1:
                return 0.0
            p = 1.0 / (total + 1)
        else:
            p = matches / total
        log_sum += math.log(p)
        orders += 1
    c, r = len(candidate), len(reference)
    bp = 1.0 if c > r else math.exp(1 - r / c)
    return 100.0 * bp * math.exp(log_sum / orders)


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: Sequence[str], reference: Sequence[str]) -> float:
    _check(candidate, reference)
    lcs = lcs_length(candidate, reference)
    if lcs == 0:
        return 0.0
    p, r = lcs / len(candidate), lcs / len(reference)
    return 100.0 * 2 * p * r / (p + r)


_SUFFIXES = ("ational", "ization", "fulness", "ousness", "iveness", "ations", "ation",
             "ments", "ment", "ness", "ings", "ing", "edly", "ed", "ies", "es", "ly", "s")


def light_stem(token: str) -> str:
    """Crude suffix stripper; keeps at least three characters of stem."""
    for suf in _SUFFIXES:
        if token.endswith(suf) and len(token) - len(suf) >= 3:
            base = token[: -len(suf)]
            return base + "y" if suf == "ies" else base
    return token


def _align(candidate: Sequence[str], reference: Sequence[str]) -> list[tuple[int, int]]:
    """Exact matches first, then stem matches; each stage greedy left-to-right."""
    pairs: list[tuple[int, int]] = []
    used_c: set[int] = set()
    used_r: set[int] = set()
    for key in (lambda t: t, light_stem):
        for i, tok in enumerate(candidate):
            if i in used_c:
                continue
            k = key(tok)
            for j, ref_tok in enumerate(reference):
                if j not in used_r and key(ref_tok) == k:
                    pairs.append((i, j))
                    used_c.add(i)
                    used_r.add(j)
                    break
    return sorted(pairs)


def _chunks(pairs: list[tuple[int, int]]) -> int:
    if not pairs:
        return 0
    chunks = 1
    for (i0, j0), (i1, j1) in zip(pairs, pairs[1:]):
        if not (i1 == i0 + 1 and j1 == j0 + 1):
            chunks += 1
    return chunks


def meteor_lite(
    candidate: Sequence[str],
    reference: Sequence[str],
    alpha: float = 0.9,
    beta: float = 3.0,
    gamma: float = 0.5,
) -> float:
    """METEOR restricted to exact and stem matching (no synonym resources).

    ``Fmean = P*R / (alpha*P + (1-alpha)*R)`` (recall weighted 9:1 at the
    default alpha), penalty ``gamma * (chunks/matches)**beta``.
    """
    _check(candidate, reference)
    pairs = _align(candidate, reference)
    m = len(pairs)
    if m == 0:
        return 0.0
    p, r = m / len(candidate), m / len(reference)
    fmean = p * r / (alpha * p + (1 - alpha) * r)
    penalty = gamma * (_chunks(pairs) / m) ** beta
    return 100.0 * fmean * (1 - penalty)


class Embedder(Protocol):
    def embed(self, tokens: Sequence[str]) -> np.ndarray: ...


class TableEmbedder:
    """Looks tokens up in a fixed table; unknown tokens map to a zero vector."""

    def __init__(self, table: dict[str, Sequence[float]]):
        self.table = {k: np.asarray(v, dtype=float) for k, v in table.items()}
        self.dim = len(next(iter(self.table.values()))) if self.table else 1

    def embed(self, tokens: Sequence[str]) -> np.ndarray:
        return np.stack([self.table.get(t, np.zeros(self.dim)) for t in tokens])


class OpenAICompatibleEmbedder:
    """Token embeddings from an OpenAI-compatible ``/embeddings`` endpoint."""

    def __init__(self, base_url: str, model: str, api_key: str | None = None, timeout: float = 60.0):
        import os

        import httpx

        from .gateway import API_KEY_ENV

        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self._client = httpx.Client(timeout=timeout)
        self._cache: dict[str, np.ndarray] = {}

    def embed(self, tokens: Sequence[str]) -> np.ndarray:
        missing = sorted({t for t in tokens if t not in self._cache})
        if missing:
            headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
            try:
                resp = self._client.post(
                    f"{self.base_url}/embeddings",
                    json={"model": self.model, "input": missing},
                    headers=headers,
                )
                resp.raise_for_status()
            except Exception as exc:
                raise EmbedderUnavailable(str(exc)) from exc
            for tok, row in zip(missing, resp.json()["data"]):
                self._cache[tok] = np.asarray(row["embedding"], dtype=float)
        return np.stack([self._cache[t] for t in tokens])


def _unit_rows(m: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    return np.divide(m, norms, out=np.zeros_like(m), where=norms > 0)


def embed_similarity(
    candidate: Sequence[str], reference: Sequence[str], embedder: Embedder | None
) -> float:
    """Greedy max-cosine token alignment F1 (BertScore-style), negative cosines clipped to 0."""
    if embedder is None:
        raise EmbedderUnavailable("no embedder configured")
    _check(candidate, reference)
    c = _unit_rows(np.asarray(embedder.embed(candidate), dtype=float))
    r = _unit_rows(np.asarray(embedder.embed(reference), dtype=float))
    sim = np.clip(c @ r.T, 0.0, 1.0)
    # identical tokens share an embedding, even a degenerate zero one
    same = np.array([[x == y for y in reference] for x in candidate])
    sim[same] = 1.0
    p = float(sim.max(axis=1).mean())
    rec = float(sim.max(axis=0).mean())
    if p + rec == 0:
        return 0.0
    return float(np.clip(100.0 * 2 * p * rec / (p + rec), 0.0, 100.0))


@dataclass(frozen=True)
class DiversityReport:
    bleu: float
    meteor_lite: float
    rouge_l: float
    embed_sim: float | None
    n_pairs: int

    def to_dict(self) -> dict:
        return {
            "bleu": self.bleu,
            "meteor_lite": self.meteor_lite,
            "rouge_l": self.rouge_l,
            "embed_sim": self.embed_sim,
            "n_pairs": self.n_pairs,
        }


def _symmetric(metric: Callable[[Sequence[str], Sequence[str]], float], a, b) -> float:
    return (metric(a, b) + metric(b, a)) / 2


def diversity_report(questions: Sequence[Question | str], embedder: Embedder | None = None) -> DiversityReport:
    """Mean similarity over all unordered stem pairs, each pair scored both ways."""
    if len(questions) < 2:
        raise TooFewQuestions("need at least two questions")
    stems = [tokenize(q.stem if isinstance(q, Question) else q) for q in questions]
    pairs = list(combinations(range(len(stems)), 2))
    totals = {"bleu": 0.0, "meteor_lite": 0.0, "rouge_l": 0.0, "embed_sim": 0.0}
    for i, j in pairs:
        a, b = stems[i], stems[j]
        totals["bleu"] += _symmetric(bleu, a, b)
        totals["meteor_lite"] += _symmetric(meteor_lite, a, b)
        totals["rouge_l"] += _symmetric(rouge_l, a, b)
        if embedder is not None:
            totals["embed_sim"] += _symmetric(lambda x, y: embed_similarity(x, y, embedder), a, b)
    n = len(pairs)
    return DiversityReport(
        bleu=totals["bleu"] / n,
        meteor_lite=totals["meteor_lite"] / n,
        rouge_l=totals["rouge_l"] / n,
        embed_sim=totals["embed_sim"] / n if embedder is not None else None,
        n_pairs=n,
    )
