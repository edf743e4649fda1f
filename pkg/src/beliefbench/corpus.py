"""Corpus loading and statistics.

The interchange format is JSONL, one sentence per line. Converters from
upstream annotation releases live outside the library; anything loadable
here is plain, licence-free JSON so the pipeline stays testable with
fixtures.

Sentence schema:
    {"id": str, "text": str, "tokens": [str]?, "gold": [{"source": str,
     "event": str, "label": str}], "gold_events": [str]?,
     "pos": {str: "NOUN"|"VERB"|"OTHER"}?}
Labels are accepted in surface (true/ptrue/...) or canonical (CT+/PR+/...)
form.

Belief+polarity fold schema (author-belief corpora such as ModaFact):
    {"id": str, "text": str, "events": [{"event": str, "belief": str,
     "polarity": str}], "tokens": [str]?}

Events file schema:
    {"id": str, "events": [str]}
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional, Union

from .model import (
    BeliefAnnotation,
    InvalidAnnotation,
    MalformedSourcePath,
    Scope,
    SentenceRecord,
    UnknownLabel,
    annotation_set,
    parse_label,
    parse_source_path,
    scope_of,
)

logger = logging.getLogger(__name__)

COMPOSE_SEPARATOR = "+"


class SchemaError(ValueError):
    """A line in a corpus file does not match the expected schema."""

    def __init__(self, path: Union[str, Path], line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


class DuplicateSentenceId(SchemaError):
    pass


class MissingPolarity(SchemaError):
    pass


class Language(Enum):
    EN = "en"
    IT = "it"


@dataclass(frozen=True)
class Corpus:
    name: str
    sentences: tuple[SentenceRecord, ...]
    language: Language = Language.EN

    def __len__(self) -> int:
        return len(self.sentences)

    def by_id(self) -> dict[str, SentenceRecord]:
        return {s.id: s for s in self.sentences}

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(s.id for s in self.sentences)


@dataclass(frozen=True)
class ComposedTag:
    """A belief value and a polarity value joined into one exact-match tag."""

    belief: str
    polarity: str

    def __post_init__(self) -> None:
        if not self.belief or not self.polarity:
            raise ValueError("belief and polarity must be non-empty")
        if COMPOSE_SEPARATOR in self.belief or COMPOSE_SEPARATOR in self.polarity:
            raise ValueError(
                f"{COMPOSE_SEPARATOR!r} is reserved as the composition separator"
            )

    @property
    def composed(self) -> str:
        return f"{self.belief}{COMPOSE_SEPARATOR}{self.polarity}"

    @classmethod
    def split(cls, composed: str) -> "ComposedTag":
        belief, sep, polarity = composed.partition(COMPOSE_SEPARATOR)
        if not sep:
            raise ValueError(f"no {COMPOSE_SEPARATOR!r} in composed tag {composed!r}")
        return cls(belief, polarity)


def _iter_jsonl(path: Union[str, Path]):
    """Yield (line_no, parsed object) for each non-blank line."""
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(path, line_no, f"invalid JSON: {exc}") from exc
            yield line_no, obj


def _require(obj: dict, key: str, path, line_no: int, typ=None):
    if key not in obj:
        raise SchemaError(path, line_no, f"missing required key {key!r}")
    value = obj[key]
    if typ is not None and not isinstance(value, typ):
        raise SchemaError(path, line_no, f"key {key!r} has wrong type {type(value).__name__}")
    return value


def _parse_gold_record(rec, path, line_no: int) -> BeliefAnnotation:
    if not isinstance(rec, dict):
        raise SchemaError(path, line_no, f"gold entry is not an object: {rec!r}")
    source = _require(rec, "source", path, line_no, str)
    event = _require(rec, "event", path, line_no, str)
    label = _require(rec, "label", path, line_no, str)
    try:
        return BeliefAnnotation(parse_source_path(source), event, parse_label(label))
    except (MalformedSourcePath, UnknownLabel, InvalidAnnotation) as exc:
        raise SchemaError(path, line_no, str(exc)) from exc


def load_factbank_corpus(path: Union[str, Path], name: Optional[str] = None) -> Corpus:
    """Load a source-and-target belief corpus from JSONL."""
    sentences: list[SentenceRecord] = []
    seen_ids: set[str] = set()
    for line_no, obj in _iter_jsonl(path):
        if not isinstance(obj, dict):
            raise SchemaError(path, line_no, "line is not a JSON object")
        sid = _require(obj, "id", path, line_no, str)
        if sid in seen_ids:
            raise DuplicateSentenceId(path, line_no, f"duplicate sentence id {sid!r}")
        seen_ids.add(sid)
        text = _require(obj, "text", path, line_no, str)
        gold_raw = _require(obj, "gold", path, line_no, list)
        gold = annotation_set(_parse_gold_record(rec, path, line_no) for rec in gold_raw)
        tokens = obj.get("tokens")
        if tokens is not None:
            if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
                raise SchemaError(path, line_no, "tokens must be a list of strings")
            tokens = tuple(tokens)
        gold_events = obj.get("gold_events")
        if gold_events is not None:
            if not isinstance(gold_events, list) or not all(isinstance(t, str) for t in gold_events):
                raise SchemaError(path, line_no, "gold_events must be a list of strings")
            gold_events = frozenset(gold_events)
        pos = obj.get("pos")
        if pos is not None:
            if not isinstance(pos, dict) or any(v not in ("NOUN", "VERB", "OTHER") for v in pos.values()):
                raise SchemaError(path, line_no, "pos must map tokens to NOUN|VERB|OTHER")
        record = SentenceRecord(
            id=sid, text=text, gold=gold, tokens=tokens,
            gold_events=gold_events, pos_hints=pos,
        )
        try:
            record.validate()
        except ValueError as exc:
            raise SchemaError(path, line_no, str(exc)) from exc
        sentences.append(record)
    if not sentences:
        logger.warning("corpus %s is empty", path)
    corpus = Corpus(name=name or Path(path).stem, sentences=tuple(sentences))
    logger.info(
        "loaded %s: %d sentences, %d annotations",
        path, len(corpus), sum(len(s.gold) for s in corpus.sentences),
    )
    return corpus


def load_modafact_fold(path: Union[str, Path], name: Optional[str] = None) -> Corpus:
    """Load one fold of an author-belief corpus with belief+polarity tags.

    Each event's belief and polarity compose into a single opaque tag; the
    implicit source of every tag is the author, so records carry the composed
    (event, tag) pairs rather than factuality triples.
    """
    sentences: list[SentenceRecord] = []
    seen_ids: set[str] = set()
    for line_no, obj in _iter_jsonl(path):
        if not isinstance(obj, dict):
            raise SchemaError(path, line_no, "line is not a JSON object")
        sid = _require(obj, "id", path, line_no, str)
        if sid in seen_ids:
            raise DuplicateSentenceId(path, line_no, f"duplicate sentence id {sid!r}")
        seen_ids.add(sid)
        text = _require(obj, "text", path, line_no, str)
        events = _require(obj, "events", path, line_no, list)
        pairs: set[tuple[str, str]] = set()
        for rec in events:
            if not isinstance(rec, dict):
                raise SchemaError(path, line_no, f"events entry is not an object: {rec!r}")
            event = _require(rec, "event", path, line_no, str)
            belief = _require(rec, "belief", path, line_no, str)
            if "polarity" not in rec:
                raise MissingPolarity(path, line_no, f"event {event!r} has belief but no polarity")
            polarity = _require(rec, "polarity", path, line_no, str)
            try:
                tag = ComposedTag(belief, polarity)
            except ValueError as exc:
                raise SchemaError(path, line_no, str(exc)) from exc
            pair = (event, tag.composed)
            if pair in pairs:
                logger.warning("%s:%d: duplicate (event, tag) pair %r dropped", path, line_no, pair)
            pairs.add(pair)
        sentences.append(SentenceRecord(id=sid, text=text, gold_composed=frozenset(pairs)))
    if not sentences:
        logger.warning("fold %s is empty", path)
    return Corpus(
        name=name or Path(path).stem,
        sentences=tuple(sentences),
        language=Language.IT,
    )


def load_events_file(path: Union[str, Path]) -> dict[str, list[str]]:
    """Load an id -> ordered event token list map, usable as an event source."""
    events_map: dict[str, list[str]] = {}
    for line_no, obj in _iter_jsonl(path):
        if not isinstance(obj, dict):
            raise SchemaError(path, line_no, "line is not a JSON object")
        sid = _require(obj, "id", path, line_no, str)
        if sid in events_map:
            raise DuplicateSentenceId(path, line_no, f"duplicate sentence id {sid!r}")
        events = _require(obj, "events", path, line_no, list)
        if not all(isinstance(e, str) for e in events):
            raise SchemaError(path, line_no, "events must be a list of strings")
        events_map[sid] = list(events)
    return events_map


@dataclass(frozen=True)
class StatsReport:
    sentences: int
    annotations: int
    author_annotations: int
    nested_annotations: int
    label_histogram: dict[str, int]

    def lines(self) -> list[str]:
        out = [
            f"sentences            {self.sentences}",
            f"annotations          {self.annotations}",
            f"  author scope       {self.author_annotations}",
            f"  nested scope       {self.nested_annotations}",
        ]
        for label, count in sorted(self.label_histogram.items()):
            out.append(f"  label {label:<12} {count}")
        return out


def corpus_stats(corpus: Corpus) -> StatsReport:
    histogram: Counter[str] = Counter()
    author = nested = 0
    total = 0
    for s in corpus.sentences:
        for a in s.gold:
            total += 1
            if scope_of(a.source) is Scope.AUTHOR:
                author += 1
            else:
                nested += 1
            histogram[a.label.canonical] += 1
        for _, tag in s.gold_composed or ():
            total += 1
            author += 1
            histogram[tag] += 1
    return StatsReport(
        sentences=len(corpus),
        annotations=total,
        author_annotations=author,
        nested_annotations=nested,
        label_histogram=dict(histogram),
    )
