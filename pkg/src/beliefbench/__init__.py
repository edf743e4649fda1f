"""Harness for source-and-belief prediction over event factuality corpora.

Pipeline: prompt an LLM per sentence (unified, or hybrid with externally
supplied events), extract the JSON-style annotation list from its reply,
optionally normalize predicted sources, then score exact-match micro F1
over Full/Author/Nest scopes and break the misses down into a four-way
error taxonomy. Runs are cached, cost-accounted, and persisted as
reproducible manifests.
"""

from .model import (
    AUTHOR_ROOT,
    BeliefAnnotation,
    FactualityLabel,
    InvalidAnnotation,
    MalformedSourcePath,
    Scope,
    SentenceRecord,
    SourcePath,
    UnknownLabel,
    annotation_set,
    label_from_surface,
    label_to_surface,
    parse_label,
    parse_source_path,
    scope_of,
)
from .corpus import (
    ComposedTag,
    Corpus,
    DuplicateSentenceId,
    Language,
    MissingPolarity,
    SchemaError,
    corpus_stats,
    load_events_file,
    load_factbank_corpus,
    load_modafact_fold,
)
from .prompts import (
    EmptyEventList,
    EventPromptMode,
    PromptBundle,
    PromptFamily,
    TemplateMissing,
    build_event_detection_prompt,
    build_hybrid_prompt,
    build_norm_fewshot_prompt,
    build_norm_oracle_prompt,
    build_unified_prompt,
    load_template,
    serialize_events,
    template_version,
)
from .parsing import (
    ExtractionStrategy,
    ParseOutcome,
    extract_annotation_array,
    extract_event_tokens,
    parse_response,
    validate_annotations,
)
from .gateway import (
    AuthError,
    CompletionRequest,
    CompletionResult,
    CostReport,
    Gateway,
    GatewayError,
    HttpProvider,
    ProviderError,
    RateLimited,
    RawReply,
    ReasoningEffort,
    ScriptedProvider,
    Timeout,
    UnknownModel,
    cache_key,
    cost_ledger,
    load_provider_config,
)
from .events import (
    EventStrategy,
    EventStrategyKind,
    MissingEvents,
    ServiceError,
    evaluate_event_tagging,
    evaluate_tagging_run,
    get_events,
)
from .normalize import (
    NormalizationMode,
    NormalizerSettings,
    SourceMemo,
    apply_normalization,
    normalize_fewshot,
    normalize_oracle,
)
from .scoring import (
    EvalScope,
    FoldAverage,
    PRF,
    ScoreReport,
    UnknownSentenceId,
    average_folds,
    delta_report,
    format_delta,
    format_percent,
    score_csv,
    score_modafact,
    score_modafact_fold,
    score_run,
    score_scope,
    score_table,
)
from .analysis import (
    ErrorCategory,
    ErrorRecord,
    ErrorTable,
    align_and_categorize,
    analyze_run,
    errors_csv,
    tabulate,
)
from .run import (
    ConfigError,
    ReportTables,
    RunConfig,
    RunManifest,
    RunMode,
    ScopeMismatch,
    annotations_from_records,
    load_manifest,
    report,
    rescore_manifest,
    run_experiment,
)

__version__ = "0.1.0"
