"""Prompt rendering for the five prompt families.

Templates are plain UTF-8 text files with {{placeholder}} slots, bundled
under beliefbench/templates/ and overridable via a directory argument.
Rendering is deterministic (identical inputs give byte-identical prompts,
which the gateway relies on for cache keying) and injection-proof: values
substituted into a slot are never re-scanned for further placeholders, so
literal braces in sentences survive untouched.

Template versions are content hashes recorded in run manifests rather than
embedded in the dispatched prompt, keeping dispatched bytes free of
bookkeeping.
"""

from __future__ import annotations

import hashlib
import logging
import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence, Union

from .model import SentenceRecord

logger = logging.getLogger(__name__)

_PLACEHOLDER = re.compile(r"\{\{(\w+)\}\}")


class TemplateMissing(FileNotFoundError):
    """Raised when a template file cannot be found."""


class EmptyEventList(ValueError):
    """Raised when a hybrid prompt is requested without any events."""


class PromptFamily(Enum):
    UNIFIED = "unified"
    HYBRID = "hybrid"
    EVENT_ZERO_SHOT = "event_zero"
    EVENT_FEW_SHOT = "event_few"
    NORM_FEW_SHOT = "norm_few"
    NORM_ORACLE = "norm_oracle"


class EventPromptMode(Enum):
    ZERO_SHOT = "zero"
    FEW_SHOT = "few"


@dataclass(frozen=True)
class PromptBundle:
    user: str
    family: PromptFamily
    template_version: str
    system: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.user:
            raise ValueError("user prompt must be non-empty")


def load_template(family: PromptFamily, template_dir: Union[str, Path, None] = None) -> str:
    """Return the raw template text for a family."""
    filename = f"{family.value}.txt"
    if template_dir is not None:
        path = Path(template_dir) / filename
        if not path.is_file():
            raise TemplateMissing(str(path))
        return path.read_text(encoding="utf-8")
    ref = resources.files(__package__) / "templates" / filename
    try:
        return ref.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise TemplateMissing(filename) from None


def template_version(family: PromptFamily, template_dir: Union[str, Path, None] = None) -> str:
    """Content-addressed version tag, e.g. "hybrid@1a2b3c4d5e6f"."""
    text = load_template(family, template_dir)
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]
    return f"{family.value}@{digest}"


def _render(template: str, values: dict[str, str]) -> str:
    """Fill {{name}} slots. Substituted text is emitted verbatim, never
    re-scanned, so values containing braces cannot inject new slots."""
    parts = _PLACEHOLDER.split(template)
    out: list[str] = []
    for i, part in enumerate(parts):
        if i % 2 == 0:
            out.append(part)
        elif part in values:
            out.append(values[part])
        else:
            raise KeyError(f"template slot {{{{{part}}}}} has no value")
    return "".join(out)


def _bundle(
    family: PromptFamily,
    values: dict[str, str],
    template_dir: Union[str, Path, None] = None,
) -> PromptBundle:
    template = load_template(family, template_dir)
    return PromptBundle(
        user=_render(template, values),
        family=family,
        template_version=template_version(family, template_dir),
    )


def serialize_events(events: Sequence[str]) -> str:
    return ", ".join(events)


def build_unified_prompt(
    s: SentenceRecord, template_dir: Union[str, Path, None] = None
) -> PromptBundle:
    """Single-pass prompt: the model identifies events, sources, and labels."""
    if not s.text:
        raise ValueError("sentence text must be non-empty")
    return _bundle(PromptFamily.UNIFIED, {"sentence": s.text}, template_dir)


def build_hybrid_prompt(
    s: SentenceRecord,
    events: Sequence[str],
    template_dir: Union[str, Path, None] = None,
) -> PromptBundle:
    """Prompt with externally supplied events; the model only attributes
    sources and assigns labels. Events that do not occur in the sentence are
    kept (upstream tagger noise is tolerated) but logged."""
    if not events:
        raise EmptyEventList(f"hybrid prompt for sentence {s.id!r} needs events")
    stray = [e for e in events if e not in s.text]
    if stray:
        logger.warning("sentence %s: events not found in text: %s", s.id, stray)
    values = {"sentence": s.text, "events": serialize_events(events)}
    return _bundle(PromptFamily.HYBRID, values, template_dir)


def build_event_detection_prompt(
    s: SentenceRecord,
    mode: EventPromptMode,
    template_dir: Union[str, Path, None] = None,
) -> PromptBundle:
    family = (
        PromptFamily.EVENT_ZERO_SHOT
        if mode is EventPromptMode.ZERO_SHOT
        else PromptFamily.EVENT_FEW_SHOT
    )
    return _bundle(family, {"sentence": s.text}, template_dir)


def build_norm_fewshot_prompt(
    predicted_source: str,
    sentence: str,
    extra_examples: str = "",
    template_dir: Union[str, Path, None] = None,
) -> PromptBundle:
    """Prompt asking for the corpus-convention form of a predicted source.

    extra_examples is an optional block appended after the bundled few-shot
    exemplars for callers that want a larger exemplar set.
    """
    if not predicted_source:
        raise ValueError("predicted source must be non-empty")
    values = {
        "sentence": sentence,
        "predicted_source": predicted_source,
        "extra_examples": extra_examples,
    }
    return _bundle(PromptFamily.NORM_FEW_SHOT, values, template_dir)


def build_norm_oracle_prompt(
    sentence: str,
    predicted: str,
    gold: str,
    template_dir: Union[str, Path, None] = None,
) -> PromptBundle:
    """Same-entity yes/no prompt comparing a predicted source to a gold one."""
    if not predicted or not gold:
        raise ValueError("predicted and gold sources must be non-empty")
    values = {
        "sentence": sentence,
        "predicted_source": predicted,
        "gold_source": gold,
    }
    return _bundle(PromptFamily.NORM_ORACLE, values, template_dir)
