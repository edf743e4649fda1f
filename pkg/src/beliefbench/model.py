"""Core data model for source-and-target belief annotation.

A belief annotation is a (source path, event token, factuality label) triple.
Sources form attribution chains rooted at AUTHOR; events are single tokens
taken verbatim from the sentence. Everything here is immutable and hashable
so annotations can live in sets and be compared by exact match.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Optional

logger = logging.getLogger(__name__)

AUTHOR_ROOT = "AUTHOR"


class MalformedSourcePath(ValueError):
    """Raised when a serialized source path cannot be parsed."""


class UnknownLabel(ValueError):
    """Raised when a string maps to no factuality label."""


class FactualityLabel(Enum):
    """The five factuality values a source can assign to an event."""

    CT_PLUS = "CT+"
    CT_MINUS = "CT-"
    PR_PLUS = "PR+"
    PR_MINUS = "PR-"
    UU = "UU"

    @property
    def canonical(self) -> str:
        return self.value

    @property
    def surface(self) -> str:
        return _LABEL_TO_SURFACE[self]


_SURFACE_TO_LABEL = {
    "true": FactualityLabel.CT_PLUS,
    "false": FactualityLabel.CT_MINUS,
    "ptrue": FactualityLabel.PR_PLUS,
    "pfalse": FactualityLabel.PR_MINUS,
    "unknown": FactualityLabel.UU,
}
_LABEL_TO_SURFACE = {v: k for k, v in _SURFACE_TO_LABEL.items()}
_CANONICAL_TO_LABEL = {l.value: l for l in FactualityLabel}


def label_from_surface(s: str) -> FactualityLabel:
    """Map a surface string (true/false/ptrue/pfalse/unknown) to its label.

    Case-insensitive. Raises UnknownLabel for anything else; callers decide
    whether that is fatal or just a rejected record.
    """
    try:
        return _SURFACE_TO_LABEL[s.strip().lower()]
    except KeyError:
        raise UnknownLabel(f"not a factuality surface form: {s!r}") from None


def label_to_surface(label: FactualityLabel) -> str:
    """Inverse of label_from_surface."""
    return _LABEL_TO_SURFACE[label]


def parse_label(s: str) -> FactualityLabel:
    """Accept either surface (true/ptrue/...) or canonical (CT+/PR+/...) form."""
    token = s.strip()
    if token.upper() in _CANONICAL_TO_LABEL:
        return _CANONICAL_TO_LABEL[token.upper()]
    return label_from_surface(token)


class Scope(Enum):
    AUTHOR = "author"
    NESTED = "nested"


@dataclass(frozen=True, order=True)
class SourcePath:
    """Ordered attribution chain rooted at AUTHOR.

    Serialized form joins segments with underscores, so segments themselves
    may not contain underscores. Depth 1 means the text's author; anything
    deeper is a nested source (a belief reported through other sources).
    """

    segments: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.segments:
            raise MalformedSourcePath("source path needs at least one segment")
        if self.segments[0] != AUTHOR_ROOT:
            raise MalformedSourcePath(
                f"source path must be rooted at {AUTHOR_ROOT}, got {self.segments[0]!r}"
            )
        for seg in self.segments:
            if not seg:
                raise MalformedSourcePath("empty segment in source path")
            if "_" in seg:
                raise MalformedSourcePath(f"underscore inside segment {seg!r}")

    @property
    def depth(self) -> int:
        return len(self.segments)

    def serialize(self) -> str:
        return "_".join(self.segments)

    def __str__(self) -> str:
        return self.serialize()


def parse_source_path(raw: str) -> SourcePath:
    """Parse a serialized source path such as "AUTHOR_officials_spokesperson".

    The root segment is matched case-insensitively and canonicalized to upper
    case; all other segments are preserved verbatim.
    """
    if not raw:
        raise MalformedSourcePath("empty source path")
    segments = raw.split("_")
    if segments[0].upper() != AUTHOR_ROOT:
        raise MalformedSourcePath(f"source path must start with AUTHOR: {raw!r}")
    if any(not seg for seg in segments):
        raise MalformedSourcePath(f"empty segment in source path: {raw!r}")
    return SourcePath((AUTHOR_ROOT, *segments[1:]))


def scope_of(path: SourcePath) -> Scope:
    """Author scope for depth-1 paths, nested scope for anything deeper."""
    return Scope.AUTHOR if path.depth == 1 else Scope.NESTED


class InvalidAnnotation(ValueError):
    """Raised when an annotation violates the data model (e.g. multi-token event)."""


@dataclass(frozen=True)
class BeliefAnnotation:
    """One (source, event, label) triple, the unit of prediction and gold truth.

    Events must be single tokens; multi-token predictions are rejected
    outright rather than truncated. Surrounding whitespace is stripped before
    comparison, everything else is compared case-sensitively.
    """

    source: SourcePath
    event: str
    label: FactualityLabel

    def __post_init__(self) -> None:
        stripped = self.event.strip()
        if not stripped:
            raise InvalidAnnotation("empty event token")
        if any(ch.isspace() for ch in stripped):
            raise InvalidAnnotation(f"event must be a single token: {self.event!r}")
        object.__setattr__(self, "event", stripped)

    def as_record(self) -> dict[str, str]:
        return {
            "source": self.source.serialize(),
            "event": self.event,
            "label": label_to_surface(self.label),
        }

    def sort_key(self) -> tuple[str, str, str]:
        return (self.source.serialize(), self.event, self.label.value)


def annotation_set(annotations: Iterable[BeliefAnnotation]) -> frozenset[BeliefAnnotation]:
    """Collapse annotations into a set, warning when duplicates are dropped."""
    seen: set[BeliefAnnotation] = set()
    dropped = 0
    for a in annotations:
        if a in seen:
            dropped += 1
        else:
            seen.add(a)
    if dropped:
        logger.warning("dropped %d duplicate annotation(s)", dropped)
    return frozenset(seen)


@dataclass(frozen=True)
class SentenceRecord:
    """A sentence with its gold annotations and optional side information.

    pos_hints maps event tokens to a coarse NOUN/VERB/OTHER class used only
    for error-analysis subtyping.
    """

    id: str
    text: str
    gold: frozenset[BeliefAnnotation] = frozenset()
    tokens: Optional[tuple[str, ...]] = None
    gold_events: Optional[frozenset[str]] = None
    pos_hints: Optional[Mapping[str, str]] = None
    gold_composed: Optional[frozenset[tuple[str, str]]] = None

    def validate(self) -> None:
        """Check corpus-level invariants; loaders call this and map failures
        to schema errors with file context."""
        if not self.id:
            raise ValueError("sentence id must be non-empty")
        for a in self.gold:
            if not _token_in_text(a.event, self.text, self.tokens):
                raise ValueError(
                    f"gold event {a.event!r} does not occur in sentence {self.id!r}"
                )
        if self.gold_events is not None:
            missing = {a.event for a in self.gold} - set(self.gold_events)
            if missing:
                raise ValueError(
                    f"gold_events for {self.id!r} is missing gold annotation events: {sorted(missing)}"
                )
        by_source_event: dict[tuple[str, str], set[FactualityLabel]] = {}
        for a in self.gold:
            by_source_event.setdefault((a.source.serialize(), a.event), set()).add(a.label)
        for (src, event), labels in by_source_event.items():
            if len(labels) > 1:
                logger.warning(
                    "sentence %s: event %r has multiple gold labels for source %s; "
                    "exact-match sets cannot distinguish occurrences",
                    self.id, event, src,
                )


def _token_in_text(token: str, text: str, tokens: Optional[tuple[str, ...]]) -> bool:
    if tokens is not None:
        return token in tokens
    start = 0
    while True:
        idx = text.find(token, start)
        if idx < 0:
            return False
        before = text[idx - 1] if idx > 0 else ""
        after_idx = idx + len(token)
        after = text[after_idx] if after_idx < len(text) else ""
        if (not before or not _is_word_char(before)) and (not after or not _is_word_char(after)):
            return True
        start = idx + 1


def _is_word_char(ch: str) -> bool:
    return ch.isalnum() or ch == "_"
