"""Provider-agnostic chat-completion dispatch.

One Gateway serves a whole run: it routes requests to configured providers,
caches every response in a content-addressed directory of JSON records, and
retries transient failures with exponential backoff. A warm cache replays a
run with zero network calls and byte-identical text, which is what makes
run manifests reproducible.

Provider config is a TOML file mapping model ids to either an HTTP
chat-completion endpoint (credentials via a named env var) or a scripted
reply table used by tests and offline fixtures. Prices are config, never
code.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Optional, Union

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .prompts import PromptBundle

logger = logging.getLogger(__name__)

DEFAULT_RETRIES = 3
DEFAULT_TIMEOUT_S = 120.0
DEFAULT_BACKOFF_S = 0.5


class GatewayError(Exception):
    """Base for dispatch failures."""

    retryable = False


class AuthError(GatewayError):
    """Bad or missing credential; never retried."""


class RateLimited(GatewayError):
    retryable = True


class Timeout(GatewayError):
    retryable = True


class ProviderError(GatewayError):
    def __init__(self, message: str, retryable: bool = False):
        super().__init__(message)
        self.retryable = retryable


class UnknownModel(ValueError):
    """Model id absent from the provider config (a config error, not a
    provider failure)."""


class ReasoningEffort(Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"


@dataclass(frozen=True)
class CompletionRequest:
    model_id: str
    prompt: PromptBundle
    temperature: Optional[float] = None
    reasoning_effort: Optional[ReasoningEffort] = None
    max_output_tokens: Optional[int] = None

    def __post_init__(self) -> None:
        if not self.model_id:
            raise ValueError("model_id must be non-empty")
        if self.temperature is not None and self.reasoning_effort is not None:
            raise ValueError(
                "temperature and reasoning_effort are mutually exclusive"
            )
        if self.temperature is not None and not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature out of range: {self.temperature}")
        if self.max_output_tokens is not None and self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")


@dataclass(frozen=True)
class CompletionResult:
    text: str
    model_id: str
    cached: bool
    token_usage: tuple[int, int]
    cost_estimate: float
    latency_ms: int
    cache_key: str
    timestamp: str


def cache_key(req: CompletionRequest) -> str:
    """Stable digest over every field that can change the response.

    Absent optional fields are encoded as null, so temperature absent and
    temperature 0.0 are distinct keys.
    """
    payload = {
        "model_id": req.model_id,
        "system": req.prompt.system,
        "user": req.prompt.user,
        "temperature": req.temperature,
        "reasoning_effort": (
            req.reasoning_effort.value if req.reasoning_effort else None
        ),
        "max_output_tokens": req.max_output_tokens,
    }
    canonical = json.dumps(
        payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class RawReply:
    text: str
    input_tokens: int
    output_tokens: int


@dataclass(frozen=True)
class ModelConfig:
    model_id: str
    kind: str  # "http" or "script"
    endpoint: Optional[str] = None
    auth_env: Optional[str] = None
    script: Optional[str] = None
    input_per_1k: float = 0.0
    output_per_1k: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("http", "script"):
            raise ValueError(f"unknown provider kind: {self.kind!r}")
        if self.kind == "http" and not self.endpoint:
            raise ValueError(f"model {self.model_id!r}: http provider needs endpoint")
        if self.kind == "script" and not self.script:
            raise ValueError(f"model {self.model_id!r}: script provider needs script")


def load_provider_config(path: Union[str, Path]) -> dict[str, ModelConfig]:
    """Parse a providers.toml file into per-model configs.

    Layout: [models."<model-id>"] tables with kind, endpoint/auth_env or
    script, and optional input_per_1k / output_per_1k prices. Relative
    script paths resolve against the config file's directory.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    models = data.get("models")
    if not isinstance(models, dict) or not models:
        raise ValueError(f"{path}: no [models.*] tables")
    configs: dict[str, ModelConfig] = {}
    for model_id, entry in models.items():
        if not isinstance(entry, dict):
            raise ValueError(f"{path}: models.{model_id} is not a table")
        script = entry.get("script")
        if script is not None and not os.path.isabs(script):
            script = str(path.parent / script)
        configs[model_id] = ModelConfig(
            model_id=model_id,
            kind=entry.get("kind", "http"),
            endpoint=entry.get("endpoint"),
            auth_env=entry.get("auth_env"),
            script=script,
            input_per_1k=float(entry.get("input_per_1k", 0.0)),
            output_per_1k=float(entry.get("output_per_1k", 0.0)),
        )
    return configs


class Provider:
    """One backend able to answer completion requests."""

    def dispatch(self, req: CompletionRequest) -> RawReply:
        raise NotImplementedError


class HttpProvider(Provider):
    """OpenAI-style chat-completions endpoint with bearer auth."""

    def __init__(self, config: ModelConfig, timeout_s: float = DEFAULT_TIMEOUT_S):
        self.config = config
        self.timeout_s = timeout_s
        import requests

        self._session = requests.Session()

    def _auth_header(self) -> dict[str, str]:
        if not self.config.auth_env:
            return {}
        key = os.environ.get(self.config.auth_env)
        if not key:
            raise AuthError(
                f"credential env var {self.config.auth_env} is not set"
            )
        return {"Authorization": f"Bearer {key}"}

    def dispatch(self, req: CompletionRequest) -> RawReply:
        import requests

        messages = []
        if req.prompt.system is not None:
            messages.append({"role": "system", "content": req.prompt.system})
        messages.append({"role": "user", "content": req.prompt.user})
        body: dict = {"model": req.model_id, "messages": messages}
        if req.temperature is not None:
            body["temperature"] = req.temperature
        if req.reasoning_effort is not None:
            body["reasoning_effort"] = req.reasoning_effort.value
        if req.max_output_tokens is not None:
            body["max_tokens"] = req.max_output_tokens
        try:
            resp = self._session.post(
                self.config.endpoint,
                json=body,
                headers=self._auth_header(),
                timeout=self.timeout_s,
            )
        except requests.Timeout as exc:
            raise Timeout(f"{self.config.endpoint}: {exc}") from exc
        except requests.ConnectionError as exc:
            raise ProviderError(str(exc), retryable=True) from exc
        if resp.status_code in (401, 403):
            raise AuthError(f"HTTP {resp.status_code} from {self.config.endpoint}")
        if resp.status_code == 429:
            raise RateLimited(f"HTTP 429 from {self.config.endpoint}")
        if resp.status_code >= 500:
            raise ProviderError(f"HTTP {resp.status_code}", retryable=True)
        if resp.status_code != 200:
            raise ProviderError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            data = resp.json()
            text = data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed provider response: {exc}") from exc
        usage = data.get("usage") or {}
        return RawReply(
            text=text,
            input_tokens=int(usage.get("prompt_tokens", 0)),
            output_tokens=int(usage.get("completion_tokens", 0)),
        )


class ScriptedProvider(Provider):
    """Deterministic offline provider driven by substring rules.

    Rules are checked in order against the user prompt; the first match
    wins, falling back to an optional default. Token counts are whitespace
    word counts so cost arithmetic stays reproducible. Dispatches are
    counted for call-budget assertions in tests.
    """

    def __init__(self, rules: list[dict], default: Optional[str] = None):
        for i, rule in enumerate(rules):
            if "match" not in rule or "reply" not in rule:
                raise ValueError(f"script rule {i} needs match and reply")
        self.rules = rules
        self.default = default
        self.call_count = 0
        self.dispatched: list[str] = []
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "ScriptedProvider":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        return cls(rules=data.get("rules", []), default=data.get("default"))

    def dispatch(self, req: CompletionRequest) -> RawReply:
        with self._lock:
            self.call_count += 1
            self.dispatched.append(req.prompt.user)
        reply = None
        for rule in self.rules:
            if rule["match"] in req.prompt.user:
                reply = rule["reply"]
                break
        if reply is None:
            reply = self.default
        if reply is None:
            raise ProviderError(
                f"no scripted reply matches prompt: {req.prompt.user[:80]!r}"
            )
        return RawReply(
            text=reply,
            input_tokens=len(req.prompt.user.split()),
            output_tokens=len(reply.split()),
        )


def build_provider(config: ModelConfig, timeout_s: float = DEFAULT_TIMEOUT_S) -> Provider:
    if config.kind == "http":
        return HttpProvider(config, timeout_s=timeout_s)
    return ScriptedProvider.from_file(config.script)


class Gateway:
    """Completion dispatch with caching, retries, and at-most-once keys."""

    def __init__(
        self,
        providers: Mapping[str, Provider],
        cache_dir: Union[str, Path],
        prices: Optional[Mapping[str, tuple[float, float]]] = None,
        retries: int = DEFAULT_RETRIES,
        backoff_s: float = DEFAULT_BACKOFF_S,
    ):
        self.providers = dict(providers)
        self.cache_dir = Path(cache_dir)
        self.prices = dict(prices or {})
        self.retries = retries
        self.backoff_s = backoff_s
        # every result handed out this run, cached or not, for cost ledgers
        self.history: list[CompletionResult] = []
        self._history_lock = threading.Lock()
        self._key_locks: dict[str, threading.Lock] = {}
        self._master_lock = threading.Lock()

    @classmethod
    def from_config(
        cls,
        config_path: Union[str, Path],
        cache_dir: Union[str, Path],
        retries: int = DEFAULT_RETRIES,
        timeout_s: float = DEFAULT_TIMEOUT_S,
        backoff_s: float = DEFAULT_BACKOFF_S,
    ) -> "Gateway":
        configs = load_provider_config(config_path)
        providers = {
            mid: build_provider(cfg, timeout_s=timeout_s)
            for mid, cfg in configs.items()
        }
        prices = {
            mid: (cfg.input_per_1k, cfg.output_per_1k) for mid, cfg in configs.items()
        }
        return cls(providers, cache_dir, prices=prices, retries=retries, backoff_s=backoff_s)

    def _cache_path(self, key: str) -> Path:
        return self.cache_dir / key[:2] / f"{key}.json"

    def _key_lock(self, key: str) -> threading.Lock:
        with self._master_lock:
            lock = self._key_locks.get(key)
            if lock is None:
                lock = self._key_locks[key] = threading.Lock()
            return lock

    def _load_cached(self, key: str) -> Optional[CompletionResult]:
        path = self._cache_path(key)
        if not path.is_file():
            return None
        with open(path, encoding="utf-8") as fh:
            record = json.load(fh)
        usage = record["usage"]
        return CompletionResult(
            text=record["response"]["text"],
            model_id=record["request"]["model_id"],
            cached=True,
            token_usage=(usage["input_tokens"], usage["output_tokens"]),
            cost_estimate=usage["cost_estimate"],
            latency_ms=0,
            cache_key=key,
            timestamp=record["timestamp"],
        )

    def _store(self, key: str, req: CompletionRequest, reply: RawReply, cost: float) -> str:
        timestamp = datetime.now(timezone.utc).isoformat()
        record = {
            "cache_key": key,
            "request": {
                "model_id": req.model_id,
                "system": req.prompt.system,
                "user": req.prompt.user,
                "temperature": req.temperature,
                "reasoning_effort": (
                    req.reasoning_effort.value if req.reasoning_effort else None
                ),
                "max_output_tokens": req.max_output_tokens,
                "prompt_family": req.prompt.family.value,
                "template_version": req.prompt.template_version,
            },
            "response": {"text": reply.text},
            "usage": {
                "input_tokens": reply.input_tokens,
                "output_tokens": reply.output_tokens,
                "cost_estimate": cost,
            },
            "timestamp": timestamp,
        }
        path = self._cache_path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(record, fh, sort_keys=True, indent=2, ensure_ascii=False)
            fh.write("\n")
        os.replace(tmp, path)
        return timestamp

    def _cost(self, model_id: str, reply: RawReply) -> float:
        in_price, out_price = self.prices.get(model_id, (0.0, 0.0))
        return (
            reply.input_tokens / 1000.0 * in_price
            + reply.output_tokens / 1000.0 * out_price
        )

    def _dispatch_with_retries(self, provider: Provider, req: CompletionRequest) -> RawReply:
        attempt = 0
        while True:
            try:
                return provider.dispatch(req)
            except GatewayError as exc:
                if not exc.retryable or attempt >= self.retries:
                    raise
                delay = self.backoff_s * (2 ** attempt)
                logger.warning(
                    "retrying %s after %s (attempt %d/%d, sleeping %.1fs)",
                    req.model_id, exc.__class__.__name__, attempt + 1,
                    self.retries, delay,
                )
                if delay > 0:
                    time.sleep(delay)
                attempt += 1

    def complete(self, req: CompletionRequest) -> CompletionResult:
        """Serve from cache or dispatch once, store, and return.

        Concurrent calls that share a cache key serialize on a per-key
        lock, so each distinct request hits the provider at most once per
        run even under the concurrent pipeline.
        """
        provider = self.providers.get(req.model_id)
        if provider is None:
            raise UnknownModel(f"model {req.model_id!r} not in provider config")
        key = cache_key(req)
        result = self._load_cached(key)
        if result is None:
            with self._key_lock(key):
                result = self._load_cached(key)
                if result is None:
                    start = time.monotonic()
                    reply = self._dispatch_with_retries(provider, req)
                    latency_ms = int((time.monotonic() - start) * 1000)
                    cost = self._cost(req.model_id, reply)
                    timestamp = self._store(key, req, reply, cost)
                    result = CompletionResult(
                        text=reply.text,
                        model_id=req.model_id,
                        cached=False,
                        token_usage=(reply.input_tokens, reply.output_tokens),
                        cost_estimate=cost,
                        latency_ms=latency_ms,
                        cache_key=key,
                        timestamp=timestamp,
                    )
        with self._history_lock:
            self.history.append(result)
        return result


@dataclass
class ModelCost:
    calls: int = 0
    cached_calls: int = 0
    input_tokens: int = 0
    output_tokens: int = 0
    cost_estimate: float = 0.0
    marginal_cost: float = 0.0


@dataclass
class CostReport:
    per_model: dict[str, ModelCost] = field(default_factory=dict)

    @property
    def total_cost_estimate(self) -> float:
        return sum(m.cost_estimate for m in self.per_model.values())

    @property
    def total_marginal_cost(self) -> float:
        return sum(m.marginal_cost for m in self.per_model.values())

    def as_dict(self) -> dict:
        # marginal cost is a property of this execution (warm vs cold), so
        # it stays out of the serialized form to keep manifests replayable
        return {
            model_id: {
                "calls": m.calls,
                "input_tokens": m.input_tokens,
                "output_tokens": m.output_tokens,
                "cost_estimate": m.cost_estimate,
            }
            for model_id, m in sorted(self.per_model.items())
        }

    def lines(self) -> list[str]:
        out = []
        for model_id, m in sorted(self.per_model.items()):
            out.append(
                f"{model_id}: {m.calls} calls ({m.cached_calls} cached), "
                f"{m.input_tokens} in / {m.output_tokens} out tokens, "
                f"est ${m.cost_estimate:.4f} (marginal ${m.marginal_cost:.4f})"
            )
        if not out:
            out.append("no completions")
        return out


def cost_ledger(run: Iterable[CompletionResult]) -> CostReport:
    """Aggregate per-model token and cost totals.

    cost_estimate is what the run would cost cold (stored per-response
    estimates); marginal_cost counts only responses actually dispatched
    this time, so an all-cached replay reports marginal 0.
    """
    report = CostReport()
    for result in run:
        m = report.per_model.setdefault(result.model_id, ModelCost())
        m.calls += 1
        m.input_tokens += result.token_usage[0]
        m.output_tokens += result.token_usage[1]
        m.cost_estimate += result.cost_estimate
        if result.cached:
            m.cached_calls += 1
        else:
            m.marginal_cost += result.cost_estimate
    return report
