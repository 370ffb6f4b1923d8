"""Chat-completion gateway: providers, retries, structured parsing, cost ledger."""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from collections import defaultdict
from dataclasses import dataclass
from typing import Any, Callable, Iterator, Mapping, Protocol

import jsonschema

from .errors import (
    ParseFailure,
    ProviderRejected,
    ProviderTimeout,
    ProviderUnreachable,
    SchemaViolation,
    TransientProviderError,
)
from .schemas import SCHEMAS

log = logging.getLogger(__name__)

API_KEY_ENV = "EDUAGENT_API_KEY"


@dataclass(frozen=True)
class CompletionRequest:
    model: str
    system_prompt: str
    user_prompt: str
    temperature: float = 1.0
    top_p: float = 0.9
    max_tokens: int = 1024
    schema_tag: str | None = None
    role: str = "default"
    run_id: str | None = None

    def __post_init__(self):
        if not self.system_prompt.strip() or not self.user_prompt.strip():
            raise ValueError("prompts must be non-empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must be in (0, 1]")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    prompt_tokens: int
    completion_tokens: int
    latency_ms: int
    provider: str


@dataclass(frozen=True)
class ProviderReply:
    text: str
    prompt_tokens: int
    completion_tokens: int


class Provider(Protocol):
    name: str

    def send(self, request: CompletionRequest) -> ProviderReply: ...


# --- pricing and ledger -----------------------------------------------------


@dataclass(frozen=True)
class UnitPrices:
    """USD per token."""

    input: float = 0.0
    output: float = 0.0


class PriceTable:
    def __init__(self, prices: Mapping[str, UnitPrices] | None = None):
        self._prices = dict(prices or {})

    @classmethod
    def from_config(cls, table: Mapping[str, Mapping[str, float]] | None) -> "PriceTable":
        """Build from ``{model: {input_per_million, output_per_million}}``."""
        prices = {}
        for model, row in (table or {}).items():
            prices[model] = UnitPrices(
                input=float(row.get("input_per_million", 0.0)) / 1e6,
                output=float(row.get("output_per_million", 0.0)) / 1e6,
            )
        return cls(prices)

    def lookup(self, model: str) -> UnitPrices:
        return self._prices.get(model, UnitPrices())


@dataclass(frozen=True)
class LedgerEntry:
    agent_role: str
    model: str
    prompt_tokens: int
    completion_tokens: int
    prices: UnitPrices
    cost_usd: float
    run_id: str | None = None
    status: str = "ok"

    def to_dict(self) -> dict[str, Any]:
        return {
            "agent_role": self.agent_role,
            "model": self.model,
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "input_price": self.prices.input,
            "output_price": self.prices.output,
            "cost_usd": self.cost_usd,
            "run_id": self.run_id,
            "status": self.status,
        }


def entry_cost(prompt_tokens: int, completion_tokens: int, prices: UnitPrices) -> float:
    return prompt_tokens * prices.input + completion_tokens * prices.output


class UsageLedger:
    """Append-only record of every completion call. Appends are serialized."""

    def __init__(self, entries: list[LedgerEntry] | None = None):
        self._entries: list[LedgerEntry] = list(entries or [])
        self._lock = threading.Lock()

    def record(
        self,
        agent_role: str,
        model: str,
        prompt_tokens: int,
        completion_tokens: int,
        prices: UnitPrices,
        run_id: str | None = None,
        status: str = "ok",
    ) -> LedgerEntry:
        if prompt_tokens < 0 or completion_tokens < 0:
            raise ValueError("token counts must be non-negative")
        entry = LedgerEntry(
            agent_role=agent_role,
            model=model,
            prompt_tokens=prompt_tokens,
            completion_tokens=completion_tokens,
            prices=prices,
            cost_usd=entry_cost(prompt_tokens, completion_tokens, prices),
            run_id=run_id,
            status=status,
        )
        with self._lock:
            self._entries.append(entry)
        return entry

    @property
    def entries(self) -> tuple[LedgerEntry, ...]:
        with self._lock:
            return tuple(self._entries)

    def __len__(self) -> int:
        return len(self.entries)

    def slice(self, run_id: str | None) -> "UsageLedger":
        return UsageLedger([e for e in self.entries if e.run_id == run_id])

    @property
    def total_cost(self) -> float:
        return sum(e.cost_usd for e in self.entries)

    @property
    def total_tokens(self) -> tuple[int, int]:
        es = self.entries
        return sum(e.prompt_tokens for e in es), sum(e.completion_tokens for e in es)


@dataclass
class UsageTotals:
    calls: int = 0
    prompt_tokens: int = 0
    completion_tokens: int = 0
    cost_usd: float = 0.0

    def add(self, e: LedgerEntry) -> None:
        self.calls += 1
        self.prompt_tokens += e.prompt_tokens
        self.completion_tokens += e.completion_tokens
        self.cost_usd += e.cost_usd


@dataclass
class CostSummary:
    overall: UsageTotals
    by_role: dict[str, UsageTotals]
    by_model: dict[str, UsageTotals]
    run_count: int | None = None

    @property
    def avg_cost_per_run(self) -> float | None:
        if not self.run_count:
            return None
        return self.overall.cost_usd / self.run_count

    def to_dict(self) -> dict[str, Any]:
        return {
            "overall": vars(self.overall),
            "by_role": {k: vars(v) for k, v in sorted(self.by_role.items())},
            "by_model": {k: vars(v) for k, v in sorted(self.by_model.items())},
            "run_count": self.run_count,
            "avg_cost_per_run": self.avg_cost_per_run,
        }


def ledger_report(ledger: UsageLedger, run_count: int | None = None) -> CostSummary:
    overall = UsageTotals()
    by_role: dict[str, UsageTotals] = defaultdict(UsageTotals)
    by_model: dict[str, UsageTotals] = defaultdict(UsageTotals)
    for e in ledger.entries:
        overall.add(e)
        by_role[e.agent_role].add(e)
        by_model[e.model].add(e)
    return CostSummary(overall, dict(by_role), dict(by_model), run_count)


# --- retries ----------------------------------------------------------------


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    base_delay: float = 0.5
    factor: float = 2.0
    max_delay: float = 8.0

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")

    def delays(self) -> Iterator[float]:
        """Delays before attempts 2..max_attempts; non-decreasing."""
        d = self.base_delay
        for _ in range(self.max_attempts - 1):
            yield min(d, self.max_delay)
            d *= self.factor


class Gateway:
    """Uniform ``complete`` over any provider, with retries and a shared ledger."""

    def __init__(
        self,
        provider: Provider,
        prices: PriceTable | None = None,
        ledger: UsageLedger | None = None,
        retry: RetryPolicy | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.provider = provider
        self.prices = prices or PriceTable()
        self.ledger = ledger if ledger is not None else UsageLedger()
        self.retry = retry or RetryPolicy()
        self._sleep = sleep

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        prices = self.prices.lookup(request.model)
        delays = self.retry.delays()
        last_exc: Exception | None = None
        start = time.perf_counter()
        for attempt in range(1, self.retry.max_attempts + 1):
            try:
                reply = self.provider.send(request)
            except ProviderRejected:
                self.ledger.record(
                    request.role, request.model, 0, 0, prices, request.run_id, "rejected"
                )
                raise
            except (TransientProviderError, ProviderTimeout) as exc:
                last_exc = exc
                log.warning("attempt %d/%d failed: %s", attempt, self.retry.max_attempts, exc)
                if attempt < self.retry.max_attempts:
                    self._sleep(next(delays))
                continue
            self.ledger.record(
                request.role,
                request.model,
                reply.prompt_tokens,
                reply.completion_tokens,
                prices,
                request.run_id,
            )
            return CompletionResponse(
                text=reply.text,
                prompt_tokens=reply.prompt_tokens,
                completion_tokens=reply.completion_tokens,
                latency_ms=int((time.perf_counter() - start) * 1000),
                provider=self.provider.name,
            )
        status = "timeout" if isinstance(last_exc, ProviderTimeout) else "unreachable"
        self.ledger.record(request.role, request.model, 0, 0, prices, request.run_id, status)
        if isinstance(last_exc, ProviderTimeout):
            raise ProviderTimeout(f"timed out after {self.retry.max_attempts} attempts") from last_exc
        raise ProviderUnreachable(
            f"provider failed after {self.retry.max_attempts} attempts: {last_exc}"
        ) from last_exc


# --- OpenAI-compatible HTTP provider ---------------------------------------

_TRANSIENT_STATUS = {408, 409, 425, 429}


class OpenAICompatibleProvider:
    name = "openai-compatible"

    def __init__(
        self,
        base_url: str,
        api_key: str | None = None,
        timeout: float = 60.0,
        supports_top_k: bool = False,
        top_k: int | None = None,
        client: Any = None,
    ):
        import httpx

        self.base_url = base_url.rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self.supports_top_k = supports_top_k
        self.top_k = top_k
        self._httpx = httpx
        self._client = client or httpx.Client(timeout=timeout)

    def payload(self, request: CompletionRequest) -> dict[str, Any]:
        body: dict[str, Any] = {
            "model": request.model,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": request.user_prompt},
            ],
            "temperature": request.temperature,
            "top_p": request.top_p,
            "max_tokens": request.max_tokens,
        }
        if self.supports_top_k and self.top_k is not None:
            body["top_k"] = self.top_k
        return body

    def send(self, request: CompletionRequest) -> ProviderReply:
        httpx = self._httpx
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = self._client.post(
                f"{self.base_url}/chat/completions", json=self.payload(request), headers=headers
            )
        except httpx.TimeoutException as exc:
            raise ProviderTimeout(str(exc)) from exc
        except httpx.TransportError as exc:
            raise TransientProviderError(str(exc)) from exc
        if resp.status_code in _TRANSIENT_STATUS or resp.status_code >= 500:
            raise TransientProviderError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        if resp.status_code >= 400:
            raise ProviderRejected(f"HTTP {resp.status_code}: {resp.text[:500]}")
        data = resp.json()
        try:
            text = data["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderRejected(f"malformed completion payload: {data!r:.300}") from exc
        usage = data.get("usage") or {}
        return ProviderReply(
            text=text,
            prompt_tokens=int(usage.get("prompt_tokens", 0)),
            completion_tokens=int(usage.get("completion_tokens", 0)),
        )


# --- structured output ------------------------------------------------------

_FENCE = re.compile(r"```(?:[a-zA-Z0-9_-]+)?\s*\n?(.*?)```", re.DOTALL)
_decoder = json.JSONDecoder()


def _first_object(text: str) -> dict[str, Any] | None:
    for m in re.finditer(r"\{", text):
        try:
            obj, _ = _decoder.raw_decode(text, m.start())
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            return obj
    return None


def extract_structured(text: str, schema_tag: str) -> dict[str, Any]:
    """Pull the first JSON object out of a model reply and validate it.

    Fenced blocks are tried before the raw text, so prose around the object is
    ignored either way.
    """
    if schema_tag not in SCHEMAS:
        raise KeyError(f"unregistered schema tag {schema_tag!r}")
    obj = None
    for block in _FENCE.findall(text):
        obj = _first_object(block)
        if obj is not None:
            break
    if obj is None:
        obj = _first_object(text)
    if obj is None:
        raise ParseFailure("no well-formed JSON object in reply", text)
    validator = jsonschema.Draft202012Validator(SCHEMAS[schema_tag])
    errors = sorted(validator.iter_errors(obj), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        if err.validator == "required":
            missing = [f for f in err.validator_value if f not in (err.instance or {})]
            name = ".".join([*map(str, err.absolute_path), missing[0]]) if missing else None
        else:
            name = ".".join(map(str, err.absolute_path)) or None
        raise SchemaViolation(f"{schema_tag}: {err.message}", text, field=name)
    return obj

