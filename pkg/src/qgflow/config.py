"""Run configuration: YAML/JSON file -> pipeline, provider and path settings."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import yaml

from .agents import Agents
from .errors import ConfigError
from .gateway import Gateway, OpenAICompatibleProvider, PriceTable, RetryPolicy, UsageLedger
from .knowledge import KnowledgeStore
from .mock import ScriptedProvider, SimulatedResponder, load_mock_script
from .orchestrator import PipelineConfig
from .templates import PromptLibrary

PROVIDERS = ("mock", "openai-compatible")


@dataclass(frozen=True)
class ProviderSettings:
    kind: str = "mock"
    base_url: str = "https://api.openai.com/v1"
    model: str = "mock-model"
    role_models: dict[str, str] = field(default_factory=dict)
    temperature: float = 1.0
    top_p: float = 0.9
    top_k: int | None = None
    supports_top_k: bool = False
    max_tokens: int = 1500
    timeout: float = 60.0
    max_attempts: int = 3
    backoff_base: float = 0.5
    mock_script: str | None = None
    simulated_pass_rate: float = 0.7


@dataclass(frozen=True)
class RunConfig:
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    provider: ProviderSettings = field(default_factory=ProviderSettings)
    prices: dict[str, dict[str, float]] = field(default_factory=dict)
    templates_dir: str | None = None
    bank: str | None = None
    curriculum: str | None = None
    embedder: dict[str, Any] | None = None

    def snapshot(self) -> dict[str, Any]:
        d = asdict(self)
        d["pipeline"] = self.pipeline.to_dict()
        return d


def _resolve(base: Path, value: str | None) -> str | None:
    if value is None:
        return None
    p = Path(value)
    return str(p if p.is_absolute() else (base / p))


def load_config(path: str | Path | None = None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    base = Path(path).resolve().parent
    try:
        pipe = dict(data.get("pipeline") or {})
        pipe["ablations"] = frozenset(pipe.get("ablations") or ())
        pipeline = PipelineConfig(**pipe)
        prov = dict(data.get("provider") or {})
        if "mock_script" in prov:
            prov["mock_script"] = _resolve(base, prov["mock_script"])
        provider = ProviderSettings(**prov)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config {path}: {exc}") from exc
    if provider.kind not in PROVIDERS:
        raise ConfigError(f"unknown provider kind {provider.kind!r}; valid: {', '.join(PROVIDERS)}")
    return RunConfig(
        pipeline=pipeline,
        provider=provider,
        prices=dict(data.get("prices") or {}),
        templates_dir=_resolve(base, data.get("templates_dir")),
        bank=_resolve(base, data.get("bank")),
        curriculum=_resolve(base, data.get("curriculum")),
        embedder=data.get("embedder"),
    )


def build_gateway(cfg: RunConfig, seed: int = 0, provider: Any = None, sleep=None) -> Gateway:
    p = cfg.provider
    if provider is None:
        if p.kind == "mock":
            fallback = SimulatedResponder(p.simulated_pass_rate, seed)
            provider = (
                load_mock_script(p.mock_script, fallback=fallback)
                if p.mock_script
                else ScriptedProvider(fallback=fallback)
            )
        else:
            provider = OpenAICompatibleProvider(
                p.base_url, timeout=p.timeout, supports_top_k=p.supports_top_k, top_k=p.top_k
            )
    kwargs = {} if sleep is None else {"sleep": sleep}
    return Gateway(
        provider,
        PriceTable.from_config(cfg.prices),
        UsageLedger(),
        RetryPolicy(max_attempts=p.max_attempts, base_delay=p.backoff_base),
        **kwargs,
    )


def build_agents(cfg: RunConfig, gateway: Gateway) -> Agents:
    p = cfg.provider
    return Agents(
        gateway=gateway,
        prompts=PromptLibrary(cfg.templates_dir),
        model=p.model,
        role_models=dict(p.role_models),
        temperature=p.temperature,
        top_p=p.top_p,
        max_tokens=p.max_tokens,
    )


def build_store(cfg: RunConfig) -> KnowledgeStore:
    if cfg.bank:
        return KnowledgeStore.from_files(cfg.bank, cfg.curriculum)
    store = KnowledgeStore.bundled()
    if cfg.curriculum:
        from .knowledge import load_curriculum

        store = KnowledgeStore(store.items, load_curriculum(cfg.curriculum))
    return store


def with_provider_kind(cfg: RunConfig, kind: str | None, mock_script: str | None = None) -> RunConfig:
    if kind is None and mock_script is None:
        return cfg
    if kind is not None and kind not in PROVIDERS:
        raise ConfigError(f"unknown provider {kind!r}")
    prov = cfg.provider
    if kind is not None:
        prov = replace(prov, kind=kind)
    if mock_script is not None:
        prov = replace(prov, mock_script=mock_script)
    return replace(cfg, provider=prov)
