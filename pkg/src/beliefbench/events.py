"""Event lists for Hybrid runs, plus event-tagging evaluation.

Five interchangeable strategies produce the per-sentence event list: the
corpus's own gold events, a precomputed events file, a zero- or few-shot
LLM pass, or an external tagger service speaking the /tag wire protocol.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Optional, Union

from .corpus import Corpus, load_events_file
from .gateway import CompletionRequest, Gateway
from .model import SentenceRecord
from .parsing import extract_event_tokens
from .prompts import EventPromptMode, build_event_detection_prompt
from .scoring import PRF

SERVICE_TIMEOUT_S = 30.0


class MissingEvents(KeyError):
    """Gold or file strategy has no events for a sentence."""


class ServiceError(Exception):
    """Tagger service unreachable or returned a bad response."""


class EventStrategyKind(Enum):
    GOLD = "gold"
    FILE = "file"
    LLM_ZERO_SHOT = "llm-zero"
    LLM_FEW_SHOT = "llm-few"
    SERVICE = "service"


_session_lock = threading.Lock()
_session = None


def _http_session():
    global _session
    with _session_lock:
        if _session is None:
            import requests

            _session = requests.Session()
        return _session


@dataclass(frozen=True)
class EventStrategy:
    kind: EventStrategyKind
    events_map: Optional[Mapping[str, list[str]]] = None
    model_id: Optional[str] = None
    temperature: Optional[float] = 0.0
    service_url: Optional[str] = None
    template_dir: Optional[Union[str, Path]] = None

    def __post_init__(self) -> None:
        if self.kind is EventStrategyKind.FILE and self.events_map is None:
            raise ValueError("file strategy needs a loaded events map")
        if (
            self.kind in (EventStrategyKind.LLM_ZERO_SHOT, EventStrategyKind.LLM_FEW_SHOT)
            and not self.model_id
        ):
            raise ValueError("llm strategy needs a model_id")
        if self.kind is EventStrategyKind.SERVICE and not self.service_url:
            raise ValueError("service strategy needs a URL")

    @classmethod
    def from_cli_token(
        cls,
        token: str,
        model_id: Optional[str] = None,
        temperature: Optional[float] = 0.0,
        template_dir: Optional[Union[str, Path]] = None,
    ) -> "EventStrategy":
        """Parse the --events argument: gold | file:PATH | llm-zero |
        llm-few | service:URL. File contents load eagerly so bad paths
        fail before any model call."""
        if token == "gold":
            return cls(kind=EventStrategyKind.GOLD)
        if token.startswith("file:"):
            path = token[len("file:"):]
            if not path:
                raise ValueError("file strategy needs a path, e.g. file:events.jsonl")
            return cls(kind=EventStrategyKind.FILE, events_map=load_events_file(path))
        if token == "llm-zero":
            return cls(
                kind=EventStrategyKind.LLM_ZERO_SHOT,
                model_id=model_id,
                temperature=temperature,
                template_dir=template_dir,
            )
        if token == "llm-few":
            return cls(
                kind=EventStrategyKind.LLM_FEW_SHOT,
                model_id=model_id,
                temperature=temperature,
                template_dir=template_dir,
            )
        if token.startswith("service:"):
            url = token[len("service:"):]
            if not url:
                raise ValueError("service strategy needs a URL, e.g. service:http://host:8080")
            return cls(kind=EventStrategyKind.SERVICE, service_url=url)
        raise ValueError(f"unknown event strategy: {token!r}")


def _ordered_unique(tokens: Iterable[str]) -> list[str]:
    seen: set[str] = set()
    out: list[str] = []
    for token in tokens:
        if token not in seen:
            seen.add(token)
            out.append(token)
    return out


def _gold_order(s: SentenceRecord) -> list[str]:
    """Gold events in text order (ties alphabetical) for stable prompts."""
    def position(token: str) -> tuple[int, str]:
        idx = s.text.find(token)
        return (idx if idx >= 0 else len(s.text), token)

    return sorted(s.gold_events or (), key=position)


def _tag_endpoint(url: str) -> str:
    base = url.rstrip("/")
    return base if base.endswith("/tag") else f"{base}/tag"


def _service_events(s: SentenceRecord, url: str) -> list[str]:
    import requests

    body: dict = {"text": s.text}
    if s.tokens is not None:
        body["tokens"] = list(s.tokens)
    try:
        resp = _http_session().post(
            _tag_endpoint(url), json=body, timeout=SERVICE_TIMEOUT_S
        )
    except requests.RequestException as exc:
        raise ServiceError(f"tagger service unreachable: {exc}") from exc
    if resp.status_code != 200:
        raise ServiceError(f"tagger service HTTP {resp.status_code}: {resp.text[:200]}")
    try:
        events = resp.json()["events"]
    except (ValueError, KeyError, TypeError) as exc:
        raise ServiceError(f"malformed tagger response: {exc}") from exc
    if not isinstance(events, list) or not all(isinstance(e, str) for e in events):
        raise ServiceError("tagger response events must be a list of strings")
    return _ordered_unique(events)


def get_events(
    s: SentenceRecord,
    strategy: EventStrategy,
    gateway: Optional[Gateway] = None,
) -> list[str]:
    """Produce the event token list for one sentence."""
    if strategy.kind is EventStrategyKind.GOLD:
        if s.gold_events is None:
            raise MissingEvents(f"sentence {s.id!r} has no gold_events")
        return _gold_order(s)
    if strategy.kind is EventStrategyKind.FILE:
        assert strategy.events_map is not None
        if s.id not in strategy.events_map:
            raise MissingEvents(f"events file has no entry for sentence {s.id!r}")
        return _ordered_unique(strategy.events_map[s.id])
    if strategy.kind is EventStrategyKind.SERVICE:
        assert strategy.service_url is not None
        return _service_events(s, strategy.service_url)
    if gateway is None:
        raise ValueError("llm event strategies need a gateway")
    mode = (
        EventPromptMode.ZERO_SHOT
        if strategy.kind is EventStrategyKind.LLM_ZERO_SHOT
        else EventPromptMode.FEW_SHOT
    )
    bundle = build_event_detection_prompt(s, mode, template_dir=strategy.template_dir)
    assert strategy.model_id is not None
    result = gateway.complete(
        CompletionRequest(
            model_id=strategy.model_id,
            prompt=bundle,
            temperature=strategy.temperature,
        )
    )
    return extract_event_tokens(result.text)


def evaluate_event_tagging(gold: Iterable[str], predicted: Iterable[str]) -> PRF:
    """Token-string set P/R/F1 for one comparison.

    Both sides empty counts as a perfect (vacuous) match, F1 = 1.0;
    otherwise zero denominators give 0.0.
    """
    g, p = set(gold), set(predicted)
    if not g and not p:
        return PRF(tp=0, fp=0, fn=0, precision=1.0, recall=1.0, f1=1.0)
    tp = len(g & p)
    return PRF.from_counts(tp, len(p) - tp, len(g) - tp)


def evaluate_tagging_run(
    corpus: Corpus,
    predictions: Mapping[str, Iterable[str]],
) -> PRF:
    """Micro token F1 across a corpus: sum per-sentence TP/FP/FN, then PRF.

    Sentences without gold_events contribute their predictions as false
    positives against an empty gold set.
    """
    tp = fp = fn = 0
    for sentence in corpus.sentences:
        g = set(sentence.gold_events or ())
        p = set(predictions.get(sentence.id, ()))
        hits = len(g & p)
        tp += hits
        fp += len(p) - hits
        fn += len(g) - hits
    if tp == fp == fn == 0:
        return PRF(tp=0, fp=0, fn=0, precision=1.0, recall=1.0, f1=1.0)
    return PRF.from_counts(tp, fp, fn)
