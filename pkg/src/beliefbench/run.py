"""End-to-end experiment runner and run manifests.

A run walks the corpus sentence by sentence: (Hybrid only) fetch events,
build the prompt, complete, parse, normalize, then score, analyze, and
persist everything as a manifest. The manifest plus the response cache
fully determine the scores: re-running against a warm cache makes no
network calls and writes byte-identical manifest bytes. To that end the
manifest carries no wall-clock times, latencies, or cache-hit flags; the
only timestamps are the per-response ones stored in the cache records at
first dispatch, and every set is serialized in sorted order.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from .analysis import analyze_run, errors_csv, tabulate
from .corpus import Corpus, load_factbank_corpus
from .events import EventStrategy, MissingEvents, ServiceError, get_events
from .gateway import (
    CompletionRequest,
    CompletionResult,
    Gateway,
    GatewayError,
    ReasoningEffort,
    cost_ledger,
)
from .model import BeliefAnnotation, parse_label, parse_source_path
from .normalize import (
    NormalizationMode,
    NormalizerSettings,
    SourceMemo,
    apply_normalization,
)
from .parsing import ParseOutcome, parse_response
from .prompts import (
    EmptyEventList,
    PromptFamily,
    build_hybrid_prompt,
    build_unified_prompt,
    template_version,
)
from .scoring import ScoreReport, PRF, delta_report, format_delta, score_run

logger = logging.getLogger(__name__)

MANIFEST_VERSION = 1
DEFAULT_CONCURRENCY = 4


class ConfigError(ValueError):
    """Invalid run configuration (caught before any model call)."""


class ScopeMismatch(ValueError):
    """Manifests under comparison come from different corpora."""


class RunMode(Enum):
    UNIFIED = "unified"
    HYBRID = "hybrid"


@dataclass(frozen=True)
class RunConfig:
    corpus_path: Union[str, Path]
    mode: RunMode
    model_id: str
    out_dir: Union[str, Path]
    providers_path: Optional[Union[str, Path]] = None
    event_strategy: Optional[EventStrategy] = None
    event_strategy_token: Optional[str] = None
    normalization: NormalizationMode = NormalizationMode.NONE
    norm_model_id: Optional[str] = None
    temperature: Optional[float] = 0.0
    reasoning_effort: Optional[ReasoningEffort] = None
    max_output_tokens: Optional[int] = None
    strict: bool = False
    concurrency: int = DEFAULT_CONCURRENCY
    cache_dir: Optional[Union[str, Path]] = None
    template_dir: Optional[Union[str, Path]] = None
    run_name: Optional[str] = None

    def __post_init__(self) -> None:
        if self.mode is RunMode.HYBRID and self.event_strategy is None:
            raise ConfigError("hybrid mode requires an event strategy (--events)")
        if self.mode is RunMode.UNIFIED and self.event_strategy is not None:
            raise ConfigError("unified mode does not take an event strategy")
        if self.temperature is not None and self.reasoning_effort is not None:
            raise ConfigError("temperature and reasoning_effort are mutually exclusive")
        if self.concurrency < 1:
            raise ConfigError("concurrency must be at least 1")

    @property
    def effective_run_name(self) -> str:
        if self.run_name:
            return self.run_name
        return f"{self.mode.value}-{self.model_id}".replace("/", "-")

    @property
    def effective_norm_model(self) -> str:
        return self.norm_model_id or self.model_id

    @property
    def effective_cache_dir(self) -> Path:
        if self.cache_dir is not None:
            return Path(self.cache_dir)
        return Path(self.out_dir) / "cache"


@dataclass
class SentenceResult:
    sentence_id: str
    events: Optional[list[str]] = None
    completion: Optional[CompletionResult] = None
    outcome: Optional[ParseOutcome] = None
    predictions: frozenset[BeliefAnnotation] = frozenset()
    error: Optional[str] = None


def _sorted_records(annotations: Iterable[BeliefAnnotation]) -> list[dict]:
    return [
        a.as_record()
        for a in sorted(annotations, key=BeliefAnnotation.sort_key)
    ]


def annotations_from_records(records: Iterable[dict]) -> frozenset[BeliefAnnotation]:
    """Inverse of as_record serialization, for manifest re-derivation."""
    return frozenset(
        BeliefAnnotation(
            source=parse_source_path(r["source"]),
            event=r["event"],
            label=parse_label(r["label"]),
        )
        for r in records
    )


def _file_digest(path: Union[str, Path]) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    data: dict
    path: Optional[Path] = None

    @property
    def run_name(self) -> str:
        return self.data["run_name"]

    @property
    def mode(self) -> str:
        return self.data["config"]["mode"]

    @property
    def model_id(self) -> str:
        return self.data["config"]["model_id"]

    @property
    def corpus_digest(self) -> str:
        return self.data["corpus"]["sha256"]

    @property
    def corpus_path(self) -> str:
        return self.data["corpus"]["path"]

    def predictions(self) -> dict[str, frozenset[BeliefAnnotation]]:
        return {
            entry["id"]: annotations_from_records(entry["predictions"])
            for entry in self.data["sentences"]
        }

    def score_report(self) -> ScoreReport:
        scores = self.data["scores"]
        per_sentence = {
            sid: {name: tuple(counts) for name, counts in scopes.items()}
            for sid, scopes in scores.get("per_sentence", {}).items()
        }
        return ScoreReport(
            full=PRF(**scores["full"]),
            author=PRF(**scores["author"]),
            nest=PRF(**scores["nest"]),
            per_sentence=per_sentence,
        )

    def to_json(self) -> str:
        return json.dumps(
            self.data, sort_keys=True, indent=2, ensure_ascii=False, default=str
        ) + "\n"

    def write(self, out_dir: Union[str, Path]) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "manifest.json"
        path.write_text(self.to_json(), encoding="utf-8")
        self.path = path
        return path


def load_manifest(path: Union[str, Path]) -> RunManifest:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    for key in ("run_name", "config", "corpus", "sentences", "scores"):
        if key not in data:
            raise ValueError(f"{path}: not a run manifest (missing {key!r})")
    return RunManifest(data=data, path=path)


class _SentencePipeline:
    """Per-sentence work unit shared by the executor workers."""

    def __init__(self, cfg: RunConfig, gateway: Gateway, memo: SourceMemo):
        self.cfg = cfg
        self.gateway = gateway
        self.memo = memo
        self.norm_settings = NormalizerSettings(
            model_id=cfg.effective_norm_model,
            temperature=cfg.temperature if cfg.reasoning_effort is None else None,
            template_dir=cfg.template_dir,
        )

    def __call__(self, sentence) -> SentenceResult:
        cfg = self.cfg
        result = SentenceResult(sentence_id=sentence.id)
        try:
            if cfg.mode is RunMode.HYBRID:
                assert cfg.event_strategy is not None
                result.events = get_events(sentence, cfg.event_strategy, self.gateway)
                bundle = build_hybrid_prompt(
                    sentence, result.events, template_dir=cfg.template_dir
                )
            else:
                bundle = build_unified_prompt(sentence, template_dir=cfg.template_dir)
            completion = self.gateway.complete(
                CompletionRequest(
                    model_id=cfg.model_id,
                    prompt=bundle,
                    temperature=cfg.temperature,
                    reasoning_effort=cfg.reasoning_effort,
                    max_output_tokens=cfg.max_output_tokens,
                )
            )
            result.completion = completion
            outcome = parse_response(completion.text, sentence)
            result.outcome = outcome
            result.predictions = apply_normalization(
                cfg.normalization,
                outcome.accepted,
                sentence,
                gateway=self.gateway,
                settings=self.norm_settings,
                memo=self.memo,
            )
        except (GatewayError, ServiceError, MissingEvents, EmptyEventList) as exc:
            if cfg.strict:
                raise
            logger.warning("sentence %s failed, scored as empty: %s", sentence.id, exc)
            result.error = f"{exc.__class__.__name__}: {exc}"
            result.predictions = frozenset()
        return result


def _used_template_versions(cfg: RunConfig) -> dict[str, str]:
    families = []
    if cfg.mode is RunMode.UNIFIED:
        families.append(PromptFamily.UNIFIED)
    else:
        families.append(PromptFamily.HYBRID)
        if cfg.event_strategy is not None and cfg.event_strategy.kind.value == "llm-zero":
            families.append(PromptFamily.EVENT_ZERO_SHOT)
        if cfg.event_strategy is not None and cfg.event_strategy.kind.value == "llm-few":
            families.append(PromptFamily.EVENT_FEW_SHOT)
    if cfg.normalization is NormalizationMode.FEWSHOT:
        families.append(PromptFamily.NORM_FEW_SHOT)
    if cfg.normalization is NormalizationMode.ORACLE:
        families.append(PromptFamily.NORM_ORACLE)
    return {
        fam.value: template_version(fam, cfg.template_dir) for fam in families
    }


def run_experiment(cfg: RunConfig, gateway: Optional[Gateway] = None) -> RunManifest:
    """Execute one configured run and persist its manifest.

    Per-sentence failures after retries score as empty prediction sets
    unless cfg.strict, which aborts on the first failure. The caller may
    inject a gateway (tests use scripted providers); otherwise one is
    built from the config's providers file.
    """
    corpus = load_factbank_corpus(cfg.corpus_path)
    if gateway is None:
        if cfg.providers_path is None:
            raise ConfigError("run needs a providers config (--providers)")
        try:
            gateway = Gateway.from_config(
                cfg.providers_path, cache_dir=cfg.effective_cache_dir
            )
        except FileNotFoundError as exc:
            raise ConfigError(f"providers config not readable: {exc}") from exc
    if cfg.model_id not in gateway.providers:
        raise ConfigError(f"model {cfg.model_id!r} not in provider config")
    if (
        cfg.normalization is not NormalizationMode.NONE
        and cfg.effective_norm_model not in gateway.providers
    ):
        raise ConfigError(
            f"normalization model {cfg.effective_norm_model!r} not in provider config"
        )

    memo = SourceMemo()
    pipeline = _SentencePipeline(cfg, gateway, memo)
    with ThreadPoolExecutor(max_workers=cfg.concurrency) as pool:
        results = list(pool.map(pipeline, corpus.sentences))

    predictions = {r.sentence_id: r.predictions for r in results}
    scores = score_run(corpus, predictions)
    error_records = analyze_run(corpus.sentences, predictions)
    error_table = tabulate(error_records)
    history = sorted(
        gateway.history, key=lambda r: (r.model_id, r.cache_key, r.timestamp)
    )
    costs = cost_ledger(history)

    out_dir = Path(cfg.out_dir)
    responses_dir = out_dir / "responses"
    responses_dir.mkdir(parents=True, exist_ok=True)
    sentence_entries = []
    for r in results:
        entry: dict = {
            "id": r.sentence_id,
            "events": r.events,
            "error": r.error,
        }
        if r.completion is not None:
            response_file = f"responses/{r.completion.cache_key}.txt"
            (out_dir / response_file).write_text(
                r.completion.text, encoding="utf-8"
            )
            entry.update(
                {
                    "cache_key": r.completion.cache_key,
                    "response_file": response_file,
                    "response_timestamp": r.completion.timestamp,
                }
            )
        else:
            entry.update(
                {"cache_key": None, "response_file": None, "response_timestamp": None}
            )
        if r.outcome is not None:
            entry["extraction_strategy"] = r.outcome.extraction_strategy.value
            entry["parsed"] = _sorted_records(r.outcome.accepted)
            entry["rejected"] = [
                [record, reason] for record, reason in r.outcome.rejected
            ]
        else:
            entry["extraction_strategy"] = None
            entry["parsed"] = []
            entry["rejected"] = []
        entry["predictions"] = _sorted_records(r.predictions)
        sentence_entries.append(entry)

    data = {
        "manifest_version": MANIFEST_VERSION,
        "run_name": cfg.effective_run_name,
        "config": {
            "corpus_path": str(cfg.corpus_path),
            "mode": cfg.mode.value,
            "model_id": cfg.model_id,
            "events": cfg.event_strategy_token,
            "normalize": cfg.normalization.value,
            "norm_model_id": (
                cfg.effective_norm_model
                if cfg.normalization is not NormalizationMode.NONE
                else None
            ),
            "temperature": cfg.temperature,
            "reasoning_effort": (
                cfg.reasoning_effort.value if cfg.reasoning_effort else None
            ),
            "max_output_tokens": cfg.max_output_tokens,
            "strict": cfg.strict,
            "concurrency": cfg.concurrency,
            "providers_path": (
                str(cfg.providers_path) if cfg.providers_path else None
            ),
        },
        "template_versions": _used_template_versions(cfg),
        "corpus": {
            "name": corpus.name,
            "path": str(cfg.corpus_path),
            "sentences": len(corpus),
            "sha256": _file_digest(cfg.corpus_path),
        },
        "sentences": sentence_entries,
        "scores": scores.as_dict(),
        "error_analysis": error_table.as_dict(),
        "cost": costs.as_dict(),
    }
    manifest = RunManifest(data=data)
    manifest.write(out_dir)
    (out_dir / "errors.csv").write_text(errors_csv(error_records), encoding="utf-8")
    return manifest


def rescore_manifest(manifest: RunManifest) -> ScoreReport:
    """Recompute scores from manifest predictions and the recorded corpus.

    Pure re-derivation: no gateway, no cache. The corpus file must still
    match the recorded digest, otherwise the scores would silently drift.
    """
    corpus_path = manifest.corpus_path
    digest = _file_digest(corpus_path)
    if digest != manifest.corpus_digest:
        raise ScopeMismatch(
            f"corpus {corpus_path} changed since the run "
            f"(sha256 {digest[:12]} != {manifest.corpus_digest[:12]})"
        )
    corpus = load_factbank_corpus(corpus_path)
    return score_run(corpus, manifest.predictions())


@dataclass(frozen=True)
class ReportTables:
    rows: tuple[tuple[str, ScoreReport], ...]
    deltas: tuple[tuple[str, str, str, str], ...]


def report(
    manifests: Sequence[RunManifest],
    sota_full: Optional[float] = None,
    sota_author: Optional[float] = None,
) -> ReportTables:
    """Comparison rows for a set of runs over one corpus.

    Produces (name, ScoreReport) rows plus delta rows: hybrid minus
    unified per model when both are present, and per-run deltas against a
    SOTA reference when one is supplied (percent scale, e.g. 69.5).
    """
    if not manifests:
        raise ValueError("report needs at least one manifest")
    digests = {m.corpus_digest for m in manifests}
    if len(digests) > 1:
        names = sorted({m.data["corpus"]["name"] for m in manifests})
        raise ScopeMismatch(f"manifests span different corpora: {names}")
    rows = tuple((m.run_name, m.score_report()) for m in manifests)
    deltas: list[tuple[str, str, str, str]] = []
    by_model: dict[str, dict[str, RunManifest]] = {}
    for m in manifests:
        by_model.setdefault(m.model_id, {})[m.mode] = m
    for model_id in sorted(by_model):
        modes = by_model[model_id]
        if "unified" in modes and "hybrid" in modes:
            d = delta_report(
                modes["unified"].score_report(), modes["hybrid"].score_report()
            )
            deltas.append((f"Δ hyb-unif {model_id}", d.full, d.author, d.nest))
    if sota_full is not None or sota_author is not None:
        for m in manifests:
            s = m.score_report()
            full_d = (
                format_delta(sota_full / 100.0, s.full.f1)
                if sota_full is not None
                else "-"
            )
            author_d = (
                format_delta(sota_author / 100.0, s.author.f1)
                if sota_author is not None
                else "-"
            )
            deltas.append((f"Δ vs SOTA {m.run_name}", full_d, author_d, "-"))
    return ReportTables(rows=rows, deltas=tuple(deltas))
