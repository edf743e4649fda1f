"""Exact-match micro F1 over Full/Author/Nest scopes, plus the composed
Belief+Polarity metric and delta tables.

Micro means counts first: per-sentence (tp, fp, fn) are summed over the
corpus per scope, and precision/recall/F1 are computed once from the sums.
Zero denominators give 0.0. Percents are formatted to one decimal with
half-up rounding, and deltas are taken between the rounded percents so
tables agree with what a reader would compute from the printed numbers.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence

from .corpus import Corpus
from .model import BeliefAnnotation, Scope, scope_of


class UnknownSentenceId(KeyError):
    """A prediction references a sentence id absent from the corpus."""


class EvalScope(Enum):
    FULL = "full"
    AUTHOR = "author"
    NEST = "nest"


@dataclass(frozen=True)
class PRF:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int) -> "PRF":
        if min(tp, fp, fn) < 0:
            raise ValueError("counts must be non-negative")
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = (
            2 * precision * recall / (precision + recall)
            if precision + recall
            else 0.0
        )
        return cls(tp=tp, fp=fp, fn=fn, precision=precision, recall=recall, f1=f1)

    def as_dict(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


def _in_scope(a: BeliefAnnotation, scope: EvalScope) -> bool:
    if scope is EvalScope.FULL:
        return True
    if scope is EvalScope.AUTHOR:
        return scope_of(a.source) is Scope.AUTHOR
    return scope_of(a.source) is Scope.NESTED


def score_scope(
    gold: Iterable[BeliefAnnotation],
    pred: Iterable[BeliefAnnotation],
    scope: EvalScope,
) -> tuple[int, int, int]:
    """(tp, fp, fn) for one sentence under exact triple match."""
    g = {a for a in gold if _in_scope(a, scope)}
    p = {a for a in pred if _in_scope(a, scope)}
    tp = len(g & p)
    return tp, len(p) - tp, len(g) - tp


@dataclass(frozen=True)
class ScoreReport:
    full: PRF
    author: PRF
    nest: PRF
    per_sentence: Mapping[str, Mapping[str, tuple[int, int, int]]] = field(
        default_factory=dict
    )

    def scope(self, scope: EvalScope) -> PRF:
        return {
            EvalScope.FULL: self.full,
            EvalScope.AUTHOR: self.author,
            EvalScope.NEST: self.nest,
        }[scope]

    def partition_holds(self) -> bool:
        """Author and nested counts must sum to the full counts."""
        return (
            self.full.tp == self.author.tp + self.nest.tp
            and self.full.fp == self.author.fp + self.nest.fp
            and self.full.fn == self.author.fn + self.nest.fn
        )

    def as_dict(self) -> dict:
        return {
            "full": self.full.as_dict(),
            "author": self.author.as_dict(),
            "nest": self.nest.as_dict(),
            "per_sentence": {
                sid: {name: list(counts) for name, counts in scopes.items()}
                for sid, scopes in sorted(self.per_sentence.items())
            },
        }


def score_run(
    corpus: Corpus,
    predictions: Mapping[str, Iterable[BeliefAnnotation]],
) -> ScoreReport:
    """Micro-aggregate a whole run.

    Sentences without predictions count as empty sets (their gold becomes
    false negatives). Prediction ids outside the corpus are an error, not
    silently dropped.
    """
    known = set(corpus.ids)
    stray = set(predictions) - known
    if stray:
        raise UnknownSentenceId(
            f"predictions for unknown sentence ids: {sorted(stray)}"
        )
    totals = {scope: [0, 0, 0] for scope in EvalScope}
    per_sentence: dict[str, dict[str, tuple[int, int, int]]] = {}
    for sentence in corpus.sentences:
        pred = set(predictions.get(sentence.id, ()))
        row: dict[str, tuple[int, int, int]] = {}
        for scope in EvalScope:
            counts = score_scope(sentence.gold, pred, scope)
            row[scope.value] = counts
            for i in range(3):
                totals[scope][i] += counts[i]
        per_sentence[sentence.id] = row
    return ScoreReport(
        full=PRF.from_counts(*totals[EvalScope.FULL]),
        author=PRF.from_counts(*totals[EvalScope.AUTHOR]),
        nest=PRF.from_counts(*totals[EvalScope.NEST]),
        per_sentence=per_sentence,
    )


def score_modafact(
    gold: Iterable[tuple[str, str]],
    pred: Iterable[tuple[str, str]],
) -> PRF:
    """Exact match over (event, composed belief+polarity tag) pairs."""
    g, p = set(gold), set(pred)
    tp = len(g & p)
    return PRF.from_counts(tp, len(p) - tp, len(g) - tp)


def score_modafact_fold(
    corpus: Corpus,
    predictions: Mapping[str, Iterable[tuple[str, str]]],
) -> PRF:
    """Micro-aggregate composed-tag counts over one fold's sentences."""
    known = set(corpus.ids)
    stray = set(predictions) - known
    if stray:
        raise UnknownSentenceId(
            f"predictions for unknown sentence ids: {sorted(stray)}"
        )
    tp = fp = fn = 0
    for sentence in corpus.sentences:
        g = set(sentence.gold_composed or ())
        p = set(predictions.get(sentence.id, ()))
        hits = len(g & p)
        tp += hits
        fp += len(p) - hits
        fn += len(g) - hits
    return PRF.from_counts(tp, fp, fn)


@dataclass(frozen=True)
class FoldAverage:
    folds: tuple[PRF, ...]
    mean_precision: float
    mean_recall: float
    mean_f1: float


def average_folds(folds: Sequence[PRF]) -> FoldAverage:
    """Plain mean of per-fold metrics (the reported cross-fold number)."""
    if not folds:
        raise ValueError("need at least one fold")
    n = len(folds)
    return FoldAverage(
        folds=tuple(folds),
        mean_precision=sum(f.precision for f in folds) / n,
        mean_recall=sum(f.recall for f in folds) / n,
        mean_f1=sum(f.f1 for f in folds) / n,
    )


def format_percent(fraction: float) -> str:
    """0.7204 -> "72.0": percent, one decimal, half-up."""
    quantized = (Decimal(str(fraction)) * 100).quantize(
        Decimal("0.1"), rounding=ROUND_HALF_UP
    )
    return str(quantized)


def format_delta(a_fraction: float, b_fraction: float) -> str:
    """Signed difference b-a between the rounded percents, e.g. "+5.9"."""
    a = (Decimal(str(a_fraction)) * 100).quantize(
        Decimal("0.1"), rounding=ROUND_HALF_UP
    )
    b = (Decimal(str(b_fraction)) * 100).quantize(
        Decimal("0.1"), rounding=ROUND_HALF_UP
    )
    diff = b - a
    if diff > 0:
        return f"+{diff}"
    return str(diff)


@dataclass(frozen=True)
class DeltaReport:
    full: str
    author: str
    nest: str


def delta_report(a: ScoreReport, b: ScoreReport) -> DeltaReport:
    """Per-scope F1 movement from run a to run b, as printed deltas."""
    return DeltaReport(
        full=format_delta(a.full.f1, b.full.f1),
        author=format_delta(a.author.f1, b.author.f1),
        nest=format_delta(a.nest.f1, b.nest.f1),
    )


_SCOPE_COLUMNS = ("Full", "Author", "Nest")


def score_csv(rows: Sequence[tuple[str, ScoreReport]]) -> str:
    """Machine-readable per-run metrics, percents as printed."""
    out = io.StringIO()
    out.write("run,scope,tp,fp,fn,precision,recall,f1\n")
    for name, report in rows:
        for scope in EvalScope:
            prf = report.scope(scope)
            out.write(
                f"{name},{scope.value},{prf.tp},{prf.fp},{prf.fn},"
                f"{format_percent(prf.precision)},{format_percent(prf.recall)},"
                f"{format_percent(prf.f1)}\n"
            )
    return out.getvalue()


def score_table(
    rows: Sequence[tuple[str, ScoreReport]],
    deltas: Optional[Sequence[tuple[str, str, str, str]]] = None,
) -> str:
    """Aligned text table of F1 percents, one row per run.

    deltas, when given, are extra (label, full, author, nest) rows appended
    under the runs (movement rows in table style).
    """
    header = ("Run",) + _SCOPE_COLUMNS
    body = [
        (
            name,
            format_percent(report.full.f1),
            format_percent(report.author.f1),
            format_percent(report.nest.f1),
        )
        for name, report in rows
    ]
    body.extend(deltas or [])
    widths = [
        max(len(header[i]), *(len(row[i]) for row in body)) if body else len(header[i])
        for i in range(4)
    ]
    lines = []
    def fmt(cells):
        return "  ".join(
            cells[i].ljust(widths[i]) if i == 0 else cells[i].rjust(widths[i])
            for i in range(4)
        ).rstrip()
    lines.append(fmt(header))
    lines.append("  ".join("-" * w for w in widths))
    for row in body:
        lines.append(fmt(row))
    return "\n".join(lines) + "\n"
