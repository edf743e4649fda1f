"""Fine-tune a transformer encoder for binary O/EVENT token classification.

The default recipe fine-tunes a large pretrained encoder with fixed
hyperparameters and no search. Tests and smoke runs pass a miniature
locally built base instead (see tiny.py), with a higher learning rate,
since a randomly initialized model has no pretraining to lean on.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import torch

from .data import LABEL_EVENT, LABELS, TokenExample, load_token_corpus

logger = logging.getLogger(__name__)

DEFAULT_BASE_MODEL = "microsoft/deberta-v3-large"

ID2LABEL = {0: "O", 1: "EVENT"}
LABEL2ID = {"O": 0, "EVENT": 1}

TRAINING_CONFIG_NAME = "training_config.json"


class TrainingError(RuntimeError):
    """Training failed for an operational reason (for example memory)."""


def quiet_transformers() -> None:
    """Turn off checkpoint load/save progress bars; they are noise outside
    notebooks and garble CLI output."""
    from transformers.utils import logging as hf_logging

    hf_logging.disable_progress_bar()


@dataclass(frozen=True)
class TaggerHyperparams:
    """Fixed fine-tuning recipe; no hyperparameter search."""

    epochs: int = 5
    batch_size: int = 16
    learning_rate: float = 1e-4
    max_sequence_length: int = 128
    labels: tuple[str, ...] = LABELS

    def __post_init__(self) -> None:
        if len(self.labels) != 2:
            raise ValueError(f"label set must have exactly two classes: {self.labels}")
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate <= 0 or self.max_sequence_length <= 0:
            raise ValueError("learning_rate and max_sequence_length must be positive")


def encode_batch(tokenizer, examples: Sequence[TokenExample], max_length: int):
    """Tokenize pre-split words and align labels to first subwords.

    Returns (encoding, labels) where labels carries -100 on special tokens,
    padding, and word continuations: a word is classified by its first
    subword only.
    """
    enc = tokenizer(
        [list(e.tokens) for e in examples],
        is_split_into_words=True,
        padding=True,
        truncation=True,
        max_length=max_length,
        return_tensors="pt",
    )
    labels = torch.full(enc["input_ids"].shape, -100, dtype=torch.long)
    for i, example in enumerate(examples):
        seen: set[int] = set()
        for pos, word_id in enumerate(enc.word_ids(i)):
            if word_id is None or word_id in seen:
                continue
            seen.add(word_id)
            labels[i, pos] = LABEL2ID[
                "EVENT" if example.labels[word_id] == LABEL_EVENT else "O"
            ]
    return enc, labels


def _oom_hint(hp: TaggerHyperparams) -> str:
    return (
        f"out of memory during training; reduce batch_size "
        f"(currently {hp.batch_size}) or max_sequence_length "
        f"(currently {hp.max_sequence_length})"
    )


def train_step(model, optimizer, enc, labels, hp: TaggerHyperparams) -> float:
    """One forward/backward/step; translates memory exhaustion into
    TrainingError with actionable guidance."""
    try:
        out = model(
            input_ids=enc["input_ids"],
            attention_mask=enc["attention_mask"],
            labels=labels,
        )
        out.loss.backward()
        optimizer.step()
        optimizer.zero_grad()
        return float(out.loss.detach())
    except (RuntimeError, MemoryError) as exc:
        if "out of memory" in str(exc).lower() or isinstance(exc, MemoryError):
            raise TrainingError(_oom_hint(hp)) from exc
        raise


def train_tagger(
    data_path: Union[str, Path],
    out_dir: Union[str, Path],
    hp: Optional[TaggerHyperparams] = None,
    base_model: str = DEFAULT_BASE_MODEL,
    seed: int = 0,
) -> Path:
    """Fine-tune base_model on a token/label JSONL file and save the artifact.

    Writes the model, its tokenizer, and training_config.json (recipe plus
    provenance) to out_dir. Returns out_dir.
    """
    from transformers import AutoModelForTokenClassification, AutoTokenizer

    quiet_transformers()
    hp = hp or TaggerHyperparams()
    examples = load_token_corpus(data_path)

    tokenizer = AutoTokenizer.from_pretrained(base_model)
    model = AutoModelForTokenClassification.from_pretrained(
        base_model, num_labels=2, id2label=ID2LABEL, label2id=LABEL2ID
    )

    torch.manual_seed(seed)
    rng = random.Random(seed)
    optimizer = torch.optim.AdamW(model.parameters(), lr=hp.learning_rate)
    model.train()

    for epoch in range(hp.epochs):
        order = list(range(len(examples)))
        rng.shuffle(order)
        losses: list[float] = []
        for start in range(0, len(order), hp.batch_size):
            batch = [examples[i] for i in order[start : start + hp.batch_size]]
            enc, labels = encode_batch(tokenizer, batch, hp.max_sequence_length)
            losses.append(train_step(model, optimizer, enc, labels, hp))
        logger.info(
            "epoch %d/%d: mean loss %.4f", epoch + 1, hp.epochs,
            sum(losses) / len(losses),
        )

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model.save_pretrained(out_dir)
    tokenizer.save_pretrained(out_dir)
    config = {
        "base_model": base_model,
        "seed": seed,
        "examples": len(examples),
        **asdict(hp),
    }
    config["labels"] = list(config["labels"])
    (out_dir / TRAINING_CONFIG_NAME).write_text(
        json.dumps(config, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return out_dir
