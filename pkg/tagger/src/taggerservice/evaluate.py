"""Token F1 for the event tagger.

Counting matches the consuming pipeline's event-tagging metric exactly:
per-sentence EVENT-token sets, micro-aggregated tp/fp/fn, zero
denominators scoring 0.0, and the vacuous all-empty case scoring 1.0.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, Tuple, Union

from .data import TokenExample, load_token_corpus
from .train import TRAINING_CONFIG_NAME

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TokenScore:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int) -> "TokenScore":
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


def score_event_sets(
    pairs: Iterable[Tuple[Iterable[str], Iterable[str]]],
) -> TokenScore:
    """Micro token F1 over (gold_events, predicted_events) pairs.

    A run with no gold and no predicted events anywhere is vacuously
    perfect.
    """
    tp = fp = fn = 0
    for gold, predicted in pairs:
        g, p = set(gold), set(predicted)
        hits = len(g & p)
        tp += hits
        fp += len(p) - hits
        fn += len(g) - hits
    if tp == fp == fn == 0:
        return TokenScore(tp=0, fp=0, fn=0, precision=1.0, recall=1.0, f1=1.0)
    return TokenScore.from_counts(tp, fp, fn)


def load_model(model_dir: Union[str, Path]):
    """Load a saved artifact; returns (tokenizer, model, max_sequence_length)."""
    from transformers import AutoModelForTokenClassification, AutoTokenizer

    from .train import quiet_transformers

    quiet_transformers()
    model_dir = Path(model_dir)
    tokenizer = AutoTokenizer.from_pretrained(model_dir)
    model = AutoModelForTokenClassification.from_pretrained(model_dir)
    model.eval()

    max_length = 128
    config_path = model_dir / TRAINING_CONFIG_NAME
    if config_path.exists():
        max_length = int(json.loads(config_path.read_text())["max_sequence_length"])
    return tokenizer, model, max_length


def predict_events(
    tokenizer,
    model,
    tokens: Sequence[str],
    max_length: int = 128,
) -> list[str]:
    """Tokens classified EVENT, in order, first occurrence only.

    A word takes the class of its first subword; truncated words are
    treated as O.
    """
    batch = predict_events_batch(tokenizer, model, [tokens], max_length)
    return batch[0]


def predict_events_batch(
    tokenizer,
    model,
    sentences: Sequence[Sequence[str]],
    max_length: int = 128,
    batch_size: int = 16,
) -> list[list[str]]:
    import torch

    results: list[list[str]] = []
    for start in range(0, len(sentences), batch_size):
        chunk = [list(s) for s in sentences[start : start + batch_size]]
        enc = tokenizer(
            chunk,
            is_split_into_words=True,
            padding=True,
            truncation=True,
            max_length=max_length,
            return_tensors="pt",
        )
        with torch.no_grad():
            pred = model(
                input_ids=enc["input_ids"], attention_mask=enc["attention_mask"]
            ).logits.argmax(-1)
        for i, tokens in enumerate(chunk):
            events: list[str] = []
            seen: set[int] = set()
            for pos, word_id in enumerate(enc.word_ids(i)):
                if word_id is None or word_id in seen:
                    continue
                seen.add(word_id)
                if int(pred[i, pos]) == 1 and tokens[word_id] not in events:
                    events.append(tokens[word_id])
            results.append(events)
    return results


def evaluate_tagger(
    model_dir: Union[str, Path],
    data_path: Union[str, Path],
    batch_size: int = 16,
) -> TokenScore:
    """Score a saved artifact against a labeled token corpus."""
    examples = load_token_corpus(data_path)
    tokenizer, model, max_length = load_model(model_dir)
    predicted = predict_events_batch(
        tokenizer, model, [e.tokens for e in examples], max_length, batch_size
    )
    pairs = [
        (example.event_tokens(), events)
        for example, events in zip(examples, predicted)
    ]
    return score_event_sets(pairs)
