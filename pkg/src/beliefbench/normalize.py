"""Post-hoc normalization of predicted sources.

Predicted nested sources often name the right entity with the wrong token
(AUTHOR_Trurit where the corpus convention is AUTHOR_Inc.). Three settings:

- none: identity.
- fewshot: a prompt rewrites the predicted source into the corpus's
  token-level convention, or answers "No SIP found".
- oracle: for each gold source, a yes/no prompt asks whether the predicted
  source names the same entity; the first YES wins. Needs gold, so it is a
  diagnostic upper bound, not a deployable setting.

Only the source field ever changes; events and labels pass through
untouched. A per-run memo keyed on (predicted source, sentence) keeps
repeated sources at one call.
"""

from __future__ import annotations

import logging
import re
import threading
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Union

from .gateway import CompletionRequest, Gateway
from .model import (
    BeliefAnnotation,
    MalformedSourcePath,
    SentenceRecord,
    SourcePath,
    parse_source_path,
)
from .prompts import build_norm_fewshot_prompt, build_norm_oracle_prompt

logger = logging.getLogger(__name__)

_SOURCE_IN_REPLY = re.compile(r"AUTHOR(?:_[^\s_]+)+")
_NO_SIP = "no sip found"


class NormalizationMode(Enum):
    NONE = "none"
    FEWSHOT = "fewshot"
    ORACLE = "oracle"


class SourceMemo:
    """Thread-safe (predicted source, sentence) -> SourcePath cache."""

    def __init__(self) -> None:
        self._data: dict[tuple[str, str], SourcePath] = {}
        self._lock = threading.Lock()

    def get(self, key: tuple[str, str]) -> Optional[SourcePath]:
        with self._lock:
            return self._data.get(key)

    def put(self, key: tuple[str, str], value: SourcePath) -> None:
        with self._lock:
            self._data[key] = value

    def __len__(self) -> int:
        return len(self._data)


@dataclass(frozen=True)
class NormalizerSettings:
    model_id: str
    temperature: Optional[float] = 0.0
    template_dir: Optional[Union[str, Path]] = None


def _reply_to_source(reply: str) -> Optional[SourcePath]:
    """Parse a few-shot reply into a source path, or None to keep the
    original. Replies saying no SIP exists, containing no path-shaped
    token, or containing a malformed one all mean "leave it"."""
    if _NO_SIP in reply.lower():
        return None
    match = _SOURCE_IN_REPLY.search(reply)
    if match is None:
        return None
    try:
        return parse_source_path(match.group(0))
    except MalformedSourcePath:
        return None


def normalize_fewshot(
    a: BeliefAnnotation,
    sentence: str,
    gateway: Gateway,
    settings: NormalizerSettings,
) -> BeliefAnnotation:
    """Rewrite one annotation's source via the few-shot prompt.

    Author-scope annotations pass through without a call: normalization
    targets nested-source token conventions only.
    """
    if a.source.depth == 1:
        return a
    bundle = build_norm_fewshot_prompt(
        predicted_source=a.source.serialize(),
        sentence=sentence,
        template_dir=settings.template_dir,
    )
    result = gateway.complete(
        CompletionRequest(
            model_id=settings.model_id,
            prompt=bundle,
            temperature=settings.temperature,
        )
    )
    normalized = _reply_to_source(result.text)
    if normalized is None or normalized == a.source:
        return a
    return replace(a, source=normalized)


def normalize_oracle(
    a: BeliefAnnotation,
    gold_sources: Iterable[SourcePath],
    sentence: str,
    gateway: Gateway,
    settings: NormalizerSettings,
) -> BeliefAnnotation:
    """Snap one annotation's source onto a gold source it co-refers with.

    Exact matches short-circuit with zero calls. Candidates are tried in
    serialized order; the first reply whose first line starts with YES
    wins. All NO leaves the annotation unchanged.
    """
    gold = set(gold_sources)
    if a.source in gold:
        return a
    for candidate in sorted(gold, key=lambda p: p.serialize()):
        bundle = build_norm_oracle_prompt(
            sentence=sentence,
            predicted=a.source.serialize(),
            gold=candidate.serialize(),
            template_dir=settings.template_dir,
        )
        result = gateway.complete(
            CompletionRequest(
                model_id=settings.model_id,
                prompt=bundle,
                temperature=settings.temperature,
            )
        )
        lines = result.text.strip().splitlines()
        first = lines[0].strip() if lines else ""
        if first.upper().startswith("YES"):
            return replace(a, source=candidate)
    return a


def apply_normalization(
    mode: NormalizationMode,
    predictions: Iterable[BeliefAnnotation],
    s: SentenceRecord,
    gateway: Optional[Gateway] = None,
    settings: Optional[NormalizerSettings] = None,
    memo: Optional[SourceMemo] = None,
) -> frozenset[BeliefAnnotation]:
    """Normalize a sentence's prediction set under the chosen mode.

    Distinct (source, sentence) pairs cost one gateway call each thanks to
    the memo; annotations whose sources converge collapse by set
    semantics.
    """
    preds = frozenset(predictions)
    if mode is NormalizationMode.NONE:
        return preds
    if gateway is None or settings is None:
        raise ValueError(f"{mode.value} normalization needs a gateway and settings")
    gold_sources: set[SourcePath] = {g.source for g in s.gold}
    if mode is NormalizationMode.ORACLE and not gold_sources:
        logger.warning(
            "sentence %s: oracle normalization skipped, no gold sources", s.id
        )
        return preds
    out: set[BeliefAnnotation] = set()
    for a in preds:
        if mode is NormalizationMode.ORACLE and a.source in gold_sources:
            out.add(a)
            continue
        if mode is NormalizationMode.FEWSHOT and a.source.depth == 1:
            out.add(a)
            continue
        key = (a.source.serialize(), s.text)
        normalized_source = memo.get(key) if memo is not None else None
        if normalized_source is None:
            if mode is NormalizationMode.FEWSHOT:
                normalized = normalize_fewshot(a, s.text, gateway, settings)
            else:
                normalized = normalize_oracle(a, gold_sources, s.text, gateway, settings)
            normalized_source = normalized.source
            if memo is not None:
                memo.put(key, normalized_source)
        out.add(replace(a, source=normalized_source))
    return frozenset(out)
