"""Four-way error taxonomy over a scored run.

After exact matches are removed, each divergence is attributed to the
first applicable category in a fixed precedence:

  Source: same event and label, wrong source (a pred and a gold pair up)
  Label:  same source and event, wrong label (likewise a pair)
  FP:     predicted event that does not occur anywhere in the gold
  FN:     gold event with no predicted counterpart at all

The precedence makes counts well-defined where categories overlap. A
residual pair that diverges in both source and label at once fits no
category and is left uncounted (visible via the residual fields) rather
than guessed at.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional

from .model import BeliefAnnotation, SentenceRecord

GOLD_AUTHOR_SUBTYPE = "gold=AUTHOR"
GOLD_IT_SUBTYPE = "gold=it"
GOLD_OTHER_SUBTYPE = "gold=other"


class ErrorCategory(Enum):
    SOURCE = "Source"
    LABEL = "Label"
    FP = "FP"
    FN = "FN"


@dataclass(frozen=True)
class ErrorRecord:
    sentence_id: str
    category: ErrorCategory
    subtype: str
    gold: Optional[BeliefAnnotation] = None
    pred: Optional[BeliefAnnotation] = None

    def __post_init__(self) -> None:
        if self.category is ErrorCategory.FN and not (self.gold and not self.pred):
            raise ValueError("FN records carry gold only")
        if self.category is ErrorCategory.FP and not (self.pred and not self.gold):
            raise ValueError("FP records carry pred only")
        if self.category in (ErrorCategory.SOURCE, ErrorCategory.LABEL) and not (
            self.gold and self.pred
        ):
            raise ValueError(f"{self.category.value} records carry both sides")


def _source_subtype(gold: BeliefAnnotation) -> str:
    if gold.source.depth == 1:
        return GOLD_AUTHOR_SUBTYPE
    if gold.source.segments[-1].lower() == "it":
        return GOLD_IT_SUBTYPE
    return GOLD_OTHER_SUBTYPE


def _label_subtype(pred: BeliefAnnotation, gold: BeliefAnnotation) -> str:
    return f"Pred:{pred.label.value}→Gold:{gold.label.value}"


def _pos_subtype(event: str, pos_hints: Optional[Mapping[str, str]]) -> str:
    tag = (pos_hints or {}).get(event, "")
    tag = tag.upper()
    if tag.startswith("N"):
        return "Noun"
    if tag.startswith("V"):
        return "Verb"
    return "Unknown"


def align_and_categorize(
    gold: Iterable[BeliefAnnotation],
    pred: Iterable[BeliefAnnotation],
    s: SentenceRecord,
) -> list[ErrorRecord]:
    """Categorize one sentence's divergences.

    Deterministic regardless of input order: candidates are processed in
    sorted order and ties pair with the lexicographically smallest
    counterpart.
    """
    gold_set = set(gold)
    pred_set = set(pred)
    remaining_gold = gold_set - pred_set
    remaining_pred = pred_set - gold_set
    gold_events = {g.event for g in gold_set}
    pred_events = {p.event for p in pred_set}
    records: list[ErrorRecord] = []

    for p in sorted(remaining_pred, key=BeliefAnnotation.sort_key):
        candidates = [
            g
            for g in remaining_gold
            if g.event == p.event and g.label == p.label
        ]
        if not candidates:
            continue
        g = min(candidates, key=lambda g: g.source.serialize())
        remaining_gold.discard(g)
        remaining_pred.discard(p)
        records.append(
            ErrorRecord(
                sentence_id=s.id,
                category=ErrorCategory.SOURCE,
                subtype=_source_subtype(g),
                gold=g,
                pred=p,
            )
        )

    for p in sorted(remaining_pred, key=BeliefAnnotation.sort_key):
        candidates = [
            g
            for g in remaining_gold
            if g.source == p.source and g.event == p.event
        ]
        if not candidates:
            continue
        g = min(candidates, key=BeliefAnnotation.sort_key)
        remaining_gold.discard(g)
        remaining_pred.discard(p)
        records.append(
            ErrorRecord(
                sentence_id=s.id,
                category=ErrorCategory.LABEL,
                subtype=_label_subtype(p, g),
                gold=g,
                pred=p,
            )
        )

    for p in sorted(remaining_pred, key=BeliefAnnotation.sort_key):
        if p.event in gold_events:
            continue  # diverges in source and label at once; residual
        remaining_pred.discard(p)
        records.append(
            ErrorRecord(
                sentence_id=s.id,
                category=ErrorCategory.FP,
                subtype=_pos_subtype(p.event, s.pos_hints),
                pred=p,
            )
        )

    for g in sorted(remaining_gold, key=BeliefAnnotation.sort_key):
        if g.event in pred_events:
            continue
        remaining_gold.discard(g)
        records.append(
            ErrorRecord(
                sentence_id=s.id,
                category=ErrorCategory.FN,
                subtype=_pos_subtype(g.event, s.pos_hints),
                gold=g,
            )
        )

    return records


def analyze_run(
    sentences: Iterable[SentenceRecord],
    predictions: Mapping[str, Iterable[BeliefAnnotation]],
) -> list[ErrorRecord]:
    records: list[ErrorRecord] = []
    for s in sentences:
        records.extend(
            align_and_categorize(s.gold, predictions.get(s.id, ()), s)
        )
    return records


@dataclass
class ErrorTable:
    category_counts: dict[str, int] = field(default_factory=dict)
    subtype_counts: dict[str, dict[str, int]] = field(default_factory=dict)

    def top_subtypes(self, category: str, k: Optional[int] = None) -> list[tuple[str, int]]:
        items = sorted(
            self.subtype_counts.get(category, {}).items(),
            key=lambda kv: (-kv[1], kv[0]),
        )
        return items if k is None else items[:k]

    def as_dict(self) -> dict:
        return {
            "categories": dict(sorted(self.category_counts.items())),
            "subtypes": {
                cat: dict(sorted(subs.items()))
                for cat, subs in sorted(self.subtype_counts.items())
            },
        }

    def lines(self, k: Optional[int] = None) -> list[str]:
        out = []
        for cat in (c.value for c in ErrorCategory):
            count = self.category_counts.get(cat, 0)
            out.append(f"{cat}: {count}")
            for subtype, n in self.top_subtypes(cat, k):
                out.append(f"  {subtype}: {n}")
        return out


def tabulate(records: Iterable[ErrorRecord]) -> ErrorTable:
    table = ErrorTable()
    for cat in ErrorCategory:
        table.category_counts[cat.value] = 0
        table.subtype_counts[cat.value] = {}
    for record in records:
        cat = record.category.value
        table.category_counts[cat] += 1
        subs = table.subtype_counts[cat]
        subs[record.subtype] = subs.get(record.subtype, 0) + 1
    return table


def _triple(a: Optional[BeliefAnnotation]) -> str:
    if a is None:
        return ""
    return f"({a.source.serialize()}, {a.event}, {a.label.value})"


def errors_csv(records: Iterable[ErrorRecord]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["sentence_id", "category", "subtype", "gold", "pred"])
    for r in records:
        writer.writerow(
            [r.sentence_id, r.category.value, r.subtype, _triple(r.gold), _triple(r.pred)]
        )
    return out.getvalue()
