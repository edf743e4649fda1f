"""Command-line entry points.

Subcommands: run (execute an experiment), score (re-derive metrics from a
manifest), analyze (error taxonomy), report (compare runs), tag (event
tagging evaluation), stats (corpus counts).

Exit codes: 0 success, 2 configuration error, 3 data error, 4 provider
error.
"""

from __future__ import annotations

import argparse
import glob
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .corpus import (
    Corpus,
    SchemaError,
    corpus_stats,
    load_factbank_corpus,
    load_modafact_fold,
)
from .events import (
    EventStrategy,
    EventStrategyKind,
    MissingEvents,
    ServiceError,
    evaluate_tagging_run,
    get_events,
)
from .gateway import Gateway, GatewayError, ReasoningEffort, UnknownModel
from .normalize import NormalizationMode
from .prompts import TemplateMissing
from .run import (
    ConfigError,
    RunConfig,
    RunMode,
    ScopeMismatch,
    load_manifest,
    report,
    rescore_manifest,
    run_experiment,
)
from .scoring import UnknownSentenceId, delta_report, format_percent, score_table
from .analysis import analyze_run, errors_csv, tabulate

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_PROVIDER = 4


def _add_gateway_args(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--providers",
        default="providers.toml",
        help="provider config file (default: providers.toml)",
    )
    p.add_argument("--cache-dir", default=None, help="response cache directory")
    p.add_argument(
        "--template-dir", default=None, help="override directory for prompt templates"
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beliefbench",
        description="Source-and-belief prediction harness: run, score, analyze.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="info logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment over a corpus")
    p_run.add_argument("--corpus", required=True, help="corpus JSONL path")
    p_run.add_argument(
        "--mode", required=True, choices=[m.value for m in RunMode]
    )
    p_run.add_argument("--model", required=True, help="model id from the provider config")
    p_run.add_argument(
        "--events",
        default=None,
        help="hybrid event source: gold | file:PATH | llm-zero | llm-few | service:URL",
    )
    p_run.add_argument(
        "--normalize",
        default="none",
        choices=[m.value for m in NormalizationMode],
    )
    p_run.add_argument("--norm-model", default=None, help="model id for normalization prompts")
    p_run.add_argument("--out", default="out", help="output directory (manifest, responses)")
    p_run.add_argument(
        "--strict",
        action="store_true",
        help="abort on per-sentence failures instead of scoring them empty",
    )
    p_run.add_argument("--temperature", type=float, default=0.0)
    p_run.add_argument(
        "--reasoning-effort",
        default=None,
        choices=[e.value for e in ReasoningEffort],
        help="reasoning-model effort; replaces temperature",
    )
    p_run.add_argument("--max-output-tokens", type=int, default=None)
    p_run.add_argument("--concurrency", type=int, default=4)
    p_run.add_argument("--run-name", default=None)
    _add_gateway_args(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_score = sub.add_parser("score", help="recompute metrics from a manifest")
    p_score.add_argument("--manifest", required=True)
    p_score.add_argument("--against", default=None, help="second manifest for deltas")
    p_score.set_defaults(func=_cmd_score)

    p_analyze = sub.add_parser("analyze", help="error taxonomy for a manifest")
    p_analyze.add_argument("--manifest", required=True)
    p_analyze.set_defaults(func=_cmd_analyze)

    p_report = sub.add_parser("report", help="compare runs from manifests")
    p_report.add_argument("--manifests", required=True, help="glob of manifest.json files")
    p_report.add_argument("--sota-full", type=float, default=None)
    p_report.add_argument("--sota-author", type=float, default=None)
    p_report.set_defaults(func=_cmd_report)

    p_tag = sub.add_parser("tag", help="run and evaluate event tagging")
    p_tag.add_argument("--corpus", required=True)
    p_tag.add_argument(
        "--strategy",
        required=True,
        help="gold | file:PATH | llm-zero | llm-few | service:URL",
    )
    p_tag.add_argument("--model", default=None, help="model id for llm strategies")
    p_tag.add_argument("--temperature", type=float, default=0.0)
    p_tag.add_argument(
        "--json",
        action="store_true",
        help="machine-readable output (per-sentence events plus metrics)",
    )
    _add_gateway_args(p_tag)
    p_tag.set_defaults(func=_cmd_tag)

    p_stats = sub.add_parser("stats", help="corpus counts")
    p_stats.add_argument("--corpus", required=True)
    p_stats.add_argument(
        "--format", default="factbank", choices=["factbank", "modafact"]
    )
    p_stats.set_defaults(func=_cmd_stats)

    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    strategy = None
    if args.events is not None:
        strategy = EventStrategy.from_cli_token(
            args.events,
            model_id=args.model,
            temperature=args.temperature if args.reasoning_effort is None else None,
            template_dir=args.template_dir,
        )
    cfg = RunConfig(
        corpus_path=args.corpus,
        mode=RunMode(args.mode),
        model_id=args.model,
        out_dir=args.out,
        providers_path=args.providers,
        event_strategy=strategy,
        event_strategy_token=args.events,
        normalization=NormalizationMode(args.normalize),
        norm_model_id=args.norm_model,
        temperature=args.temperature if args.reasoning_effort is None else None,
        reasoning_effort=(
            ReasoningEffort(args.reasoning_effort) if args.reasoning_effort else None
        ),
        max_output_tokens=args.max_output_tokens,
        strict=args.strict,
        concurrency=args.concurrency,
        cache_dir=args.cache_dir,
        template_dir=args.template_dir,
        run_name=args.run_name,
    )
    manifest = run_experiment(cfg)
    print(f"manifest: {manifest.path}")
    print(score_table([(manifest.run_name, manifest.score_report())]), end="")
    failures = [e["id"] for e in manifest.data["sentences"] if e["error"]]
    if failures:
        print(f"failed sentences (scored empty): {len(failures)}")
    for line in _cost_lines(manifest):
        print(line)
    return EXIT_OK


def _cost_lines(manifest) -> list[str]:
    cost = manifest.data.get("cost", {})
    out = []
    for model_id, c in cost.items():
        out.append(
            f"cost {model_id}: {c['calls']} calls, "
            f"{c['input_tokens']} in / {c['output_tokens']} out tokens, "
            f"est ${c['cost_estimate']:.4f}"
        )
    return out


def _cmd_score(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    recomputed = rescore_manifest(manifest)
    stored = manifest.score_report()
    if recomputed != stored:
        print(
            "warning: recomputed scores differ from the manifest's stored scores",
            file=sys.stderr,
        )
        return EXIT_DATA
    rows = [(manifest.run_name, recomputed)]
    deltas = None
    if args.against:
        other = load_manifest(args.against)
        if other.corpus_digest != manifest.corpus_digest:
            raise ScopeMismatch("manifests under --against come from different corpora")
        other_scores = rescore_manifest(other)
        rows.append((other.run_name, other_scores))
        d = delta_report(recomputed, other_scores)
        deltas = [(f"Δ {other.run_name}-{manifest.run_name}", d.full, d.author, d.nest)]
    print(score_table(rows, deltas), end="")
    return EXIT_OK


def _cmd_analyze(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    corpus = load_factbank_corpus(manifest.corpus_path)
    records = analyze_run(corpus.sentences, manifest.predictions())
    table = tabulate(records)
    for line in table.lines():
        print(line)
    out_path = (manifest.path or Path(".")).parent / "errors.csv"
    out_path.write_text(errors_csv(records), encoding="utf-8")
    print(f"records: {out_path}")
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    paths = sorted(glob.glob(args.manifests))
    if not paths:
        raise FileNotFoundError(f"no manifests match {args.manifests!r}")
    manifests = [load_manifest(p) for p in paths]
    tables = report(manifests, sota_full=args.sota_full, sota_author=args.sota_author)
    print(score_table(list(tables.rows), list(tables.deltas)), end="")
    return EXIT_OK


def _cmd_tag(args: argparse.Namespace) -> int:
    corpus = load_factbank_corpus(args.corpus)
    strategy = EventStrategy.from_cli_token(
        args.strategy,
        model_id=args.model,
        temperature=args.temperature,
        template_dir=args.template_dir,
    )
    gateway = None
    if strategy.kind in (EventStrategyKind.LLM_ZERO_SHOT, EventStrategyKind.LLM_FEW_SHOT):
        if not args.model:
            raise ConfigError("llm strategies need --model")
        cache_dir = args.cache_dir or "out/cache"
        try:
            gateway = Gateway.from_config(args.providers, cache_dir=cache_dir)
        except FileNotFoundError as exc:
            raise ConfigError(f"providers config not readable: {exc}") from exc
    predictions = {
        s.id: get_events(s, strategy, gateway) for s in corpus.sentences
    }
    labeled = [s for s in corpus.sentences if s.gold_events is not None]
    prf = None
    if labeled:
        labeled_corpus = Corpus(name=corpus.name, sentences=tuple(labeled))
        prf = evaluate_tagging_run(labeled_corpus, predictions)
    if args.json:
        payload: dict = {"events": predictions}
        if prf is not None:
            payload["metrics"] = prf.as_dict()
        print(json.dumps(payload, sort_keys=True))
        return EXIT_OK
    if prf is None:
        print("no sentences carry gold_events; nothing to evaluate")
    else:
        print(
            f"event tagging over {len(labeled)} sentences: "
            f"P={format_percent(prf.precision)} R={format_percent(prf.recall)} "
            f"F1={format_percent(prf.f1)} (tp={prf.tp} fp={prf.fp} fn={prf.fn})"
        )
    return EXIT_OK


def _cmd_stats(args: argparse.Namespace) -> int:
    if args.format == "modafact":
        corpus = load_modafact_fold(args.corpus)
    else:
        corpus = load_factbank_corpus(args.corpus)
    for line in corpus_stats(corpus).lines():
        print(line)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (GatewayError, ServiceError) as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except TemplateMissing as exc:
        print(f"config error: template not found: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (
        SchemaError,
        MissingEvents,
        UnknownSentenceId,
        ScopeMismatch,
        FileNotFoundError,
        json.JSONDecodeError,
    ) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, UnknownModel, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
