"""Miniature randomly initialized base model for offline tests and smoke runs.

Builds a small BERT-style encoder with a whitespace word-level tokenizer
over a fixed vocabulary, saved in the same format as any pretrained
checkpoint so train_tagger and the service load it transparently. It has
no pretraining: useful only where the task is learnable from the training
set itself.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Union

PAD_TOKEN = "[PAD]"
UNK_TOKEN = "[UNK]"


def build_tiny_base(
    vocab_words: Iterable[str],
    out_dir: Union[str, Path],
    hidden_size: int = 64,
    num_layers: int = 2,
    num_heads: int = 2,
    max_positions: int = 128,
    seed: int = 0,
) -> Path:
    """Create and save an untrained tiny token-classification base."""
    import torch
    from tokenizers import Tokenizer, models, pre_tokenizers
    from transformers import (
        BertConfig,
        BertForTokenClassification,
        PreTrainedTokenizerFast,
    )

    from .train import ID2LABEL, LABEL2ID, quiet_transformers

    quiet_transformers()
    vocab = {PAD_TOKEN: 0, UNK_TOKEN: 1}
    for word in sorted(set(vocab_words)):
        vocab.setdefault(word, len(vocab))

    tok = Tokenizer(models.WordLevel(vocab=vocab, unk_token=UNK_TOKEN))
    tok.pre_tokenizer = pre_tokenizers.WhitespaceSplit()
    tokenizer = PreTrainedTokenizerFast(
        tokenizer_object=tok, unk_token=UNK_TOKEN, pad_token=PAD_TOKEN
    )

    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=hidden_size,
        num_hidden_layers=num_layers,
        num_attention_heads=num_heads,
        intermediate_size=2 * hidden_size,
        max_position_embeddings=max_positions,
        num_labels=2,
        id2label=ID2LABEL,
        label2id=LABEL2ID,
        pad_token_id=vocab[PAD_TOKEN],
    )
    torch.manual_seed(seed)
    model = BertForTokenClassification(config)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model.save_pretrained(out_dir)
    tokenizer.save_pretrained(out_dir)
    return out_dir
