"""Extraction and validation of annotation arrays from model output.

Models reply with free-form reasoning followed by a JSON-style list of
dictionaries. The reasoning may contain draft arrays, fenced code blocks,
// comments, and trailing commas, so extraction scans for the LAST valid
array of objects, preferring arrays inside code fences, and the JSON
dialect is lenient. Everything here is total: bad input produces empty or
rejected outcomes, never exceptions.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .model import (
    BeliefAnnotation,
    MalformedSourcePath,
    SentenceRecord,
    UnknownLabel,
    parse_label,
    parse_source_path,
)

_FENCE = re.compile(r"```[^\n]*\n(.*?)(?:```|\Z)", re.DOTALL)
_DECODER = json.JSONDecoder()


class ExtractionStrategy(Enum):
    FENCED_BLOCK = "FencedBlock"
    LAST_ARRAY = "LastArray"
    NONE = "None"


@dataclass(frozen=True)
class ParseOutcome:
    accepted: frozenset[BeliefAnnotation]
    rejected: tuple[tuple[object, str], ...]
    extraction_strategy: ExtractionStrategy

    @property
    def found_array(self) -> bool:
        return self.extraction_strategy is not ExtractionStrategy.NONE


def _strip_lenient_syntax(text: str) -> tuple[str, list[int]]:
    """Remove // comments and trailing commas outside string literals.

    Returns the cleaned text plus a map from cleaned index to original
    index, so a parse's consumed span can be located in the source text.
    """
    out: list[str] = []
    index_map: list[int] = []
    i = 0
    n = len(text)
    in_string = False
    while i < n:
        c = text[i]
        if in_string:
            out.append(c)
            index_map.append(i)
            if c == "\\" and i + 1 < n:
                out.append(text[i + 1])
                index_map.append(i + 1)
                i += 2
                continue
            if c == '"':
                in_string = False
            i += 1
            continue
        if c == '"':
            in_string = True
            out.append(c)
            index_map.append(i)
            i += 1
            continue
        if c == "/" and i + 1 < n and text[i + 1] == "/":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if c == ",":
            # a comma followed only by whitespace/comments then ] or } is dropped
            j = i + 1
            while j < n:
                if text[j] in " \t\r\n":
                    j += 1
                elif text[j] == "/" and j + 1 < n and text[j + 1] == "/":
                    while j < n and text[j] != "\n":
                        j += 1
                else:
                    break
            if j < n and text[j] in "]}":
                i += 1
                continue
        out.append(c)
        index_map.append(i)
        i += 1
    return "".join(out), index_map


def _fenced_spans(text: str) -> list[tuple[int, int]]:
    return [m.span(1) for m in _FENCE.finditer(text)]


def _try_array_at(text: str, start: int) -> Optional[tuple[list, int]]:
    """Parse an array of objects beginning at start. Returns (records,
    end_in_original) or None. Arrays that parse but contain non-object
    elements return None so nested valid arrays can still be found."""
    cleaned, index_map = _strip_lenient_syntax(text[start:])
    try:
        value, end = _DECODER.raw_decode(cleaned)
    except (ValueError, RecursionError):
        return None
    if not isinstance(value, list) or not all(isinstance(v, dict) for v in value):
        return None
    consumed = start + 1 if end == 0 else index_map[end - 1] + start + 1
    return value, consumed


def extract_annotation_array(text: str) -> tuple[list, ExtractionStrategy]:
    """Find the last valid JSON array of objects in free-form text.

    Candidates inside code fences win over bare ones. A qualifying array's
    span is consumed whole, so its own bracket-valued fields are not
    re-offered as later candidates.
    """
    candidates: list[tuple[int, list]] = []
    pos = 0
    while True:
        start = text.find("[", pos)
        if start == -1:
            break
        hit = _try_array_at(text, start)
        if hit is None:
            pos = start + 1
        else:
            records, end = hit
            candidates.append((start, records))
            pos = end
    if not candidates:
        return [], ExtractionStrategy.NONE
    fences = _fenced_spans(text)
    fenced = [
        (start, records)
        for start, records in candidates
        if any(lo <= start < hi for lo, hi in fences)
    ]
    if fenced:
        return fenced[-1][1], ExtractionStrategy.FENCED_BLOCK
    return candidates[-1][1], ExtractionStrategy.LAST_ARRAY


_REQUIRED_KEYS = ("source", "event", "label")


def _check_record(record: object) -> tuple[Optional[BeliefAnnotation], Optional[str]]:
    if not isinstance(record, dict):
        return None, "NotAnObject"
    for key in _REQUIRED_KEYS:
        if key not in record:
            return None, f"MissingKey:{key}"
    for key in _REQUIRED_KEYS:
        if not isinstance(record[key], str):
            return None, f"NonStringValue:{key}"
    try:
        source = parse_source_path(record["source"])
    except MalformedSourcePath:
        return None, "MalformedSourcePath"
    try:
        label = parse_label(record["label"])
    except UnknownLabel:
        return None, "UnknownLabel"
    event = record["event"].strip()
    if not event:
        return None, "EmptyEvent"
    if len(event.split()) > 1:
        return None, "MultiTokenEvent"
    return BeliefAnnotation(source=source, event=event, label=label), None


def validate_annotations(
    raw: list,
    s: Optional[SentenceRecord] = None,
    extraction_strategy: ExtractionStrategy = ExtractionStrategy.NONE,
) -> ParseOutcome:
    """Turn raw records into a set of annotations plus rejects.

    Total: every record either becomes an annotation or lands in rejected
    with a machine-readable reason. Extra keys are ignored; duplicate
    triples collapse. The sentence record is accepted for symmetry with
    callers that have one; no per-sentence checks are applied (events
    outside the sentence still score, as false positives).
    """
    accepted: set[BeliefAnnotation] = set()
    rejected: list[tuple[object, str]] = []
    for record in raw:
        ann, reason = _check_record(record)
        if ann is None:
            rejected.append((record, reason or "Invalid"))
        else:
            accepted.add(ann)
    return ParseOutcome(
        accepted=frozenset(accepted),
        rejected=tuple(rejected),
        extraction_strategy=extraction_strategy,
    )


def parse_response(text: str, s: Optional[SentenceRecord] = None) -> ParseOutcome:
    """extract_annotation_array followed by validate_annotations."""
    records, strategy = extract_annotation_array(text)
    return validate_annotations(records, s, extraction_strategy=strategy)


def extract_event_tokens(text: str) -> list[str]:
    """Pull single-token event strings from the reply's last valid array.

    Records without a usable "event" value are dropped. Order is the
    reply's order; duplicates keep the first occurrence.
    """
    records, _ = extract_annotation_array(text)
    events: list[str] = []
    seen: set[str] = set()
    for record in records:
        value = record.get("event")
        if not isinstance(value, str):
            continue
        token = value.strip()
        if not token or len(token.split()) > 1:
            continue
        if token not in seen:
            seen.add(token)
            events.append(token)
    return events
