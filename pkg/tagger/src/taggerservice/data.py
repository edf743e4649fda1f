"""Token-labeled training data: JSONL of {"tokens": [...], "labels": [...]}.

Labels are binary, O vs EVENT, one per token. Loaders validate shape
eagerly so training and evaluation never see a half-broken example.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Union

LABEL_O = "O"
LABEL_EVENT = "EVENT"
LABELS = (LABEL_O, LABEL_EVENT)


class DataFormatError(ValueError):
    """A training or evaluation file violates the token/label schema."""


@dataclass(frozen=True)
class TokenExample:
    """One sentence as parallel token and label sequences."""

    tokens: tuple[str, ...]
    labels: tuple[str, ...]

    def event_tokens(self) -> list[str]:
        """Tokens labeled EVENT, in order, first occurrence only."""
        out: list[str] = []
        for token, label in zip(self.tokens, self.labels):
            if label == LABEL_EVENT and token not in out:
                out.append(token)
        return out


def _parse_example(obj: object, where: str) -> TokenExample:
    if not isinstance(obj, dict):
        raise DataFormatError(f"{where}: expected an object, got {type(obj).__name__}")
    tokens = obj.get("tokens")
    labels = obj.get("labels")
    if not isinstance(tokens, list) or not isinstance(labels, list):
        raise DataFormatError(f"{where}: needs list fields 'tokens' and 'labels'")
    if not tokens:
        raise DataFormatError(f"{where}: empty token list")
    if len(tokens) != len(labels):
        raise DataFormatError(
            f"{where}: {len(tokens)} tokens but {len(labels)} labels"
        )
    for t in tokens:
        if not isinstance(t, str) or not t:
            raise DataFormatError(f"{where}: tokens must be non-empty strings")
    for l in labels:
        if l not in LABELS:
            raise DataFormatError(f"{where}: label {l!r} not in {LABELS}")
    return TokenExample(tokens=tuple(tokens), labels=tuple(labels))


def load_token_corpus(path: Union[str, Path]) -> list[TokenExample]:
    """Load a JSONL token/label file; blank lines are skipped.

    Raises DataFormatError with the offending line number on any schema
    violation, and for files with no examples at all.
    """
    path = Path(path)
    examples: list[TokenExample] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path.name}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{where}: invalid JSON: {exc}") from exc
            examples.append(_parse_example(obj, where))
    if not examples:
        raise DataFormatError(f"{path}: no examples")
    return examples
