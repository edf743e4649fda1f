import json

import pytest

from beliefbench import (
    ConfigError,
    EventStrategy,
    Gateway,
    NormalizationMode,
    RunConfig,
    RunManifest,
    RunMode,
    ScopeMismatch,
    ScriptedProvider,
    annotations_from_records,
    load_manifest,
    report,
    rescore_manifest,
    run_experiment,
)
from conftest import ann, write_jsonl

MODEL = "mock-runner"


def e2e_config(e2e_dir, out_dir, **overrides):
    defaults = dict(
        corpus_path=e2e_dir / "corpus.jsonl",
        mode=RunMode.HYBRID,
        model_id=MODEL,
        out_dir=out_dir,
        event_strategy=EventStrategy.from_cli_token("gold"),
        event_strategy_token="gold",
        temperature=0.0,
    )
    defaults.update(overrides)
    return RunConfig(**defaults)


def e2e_gateway(e2e_dir, cache_dir):
    provider = ScriptedProvider.from_file(e2e_dir / "replies.json")
    return Gateway({MODEL: provider}, cache_dir), provider


class TestRunConfig:
    def test_hybrid_requires_events(self, e2e_dir, tmp_path):
        with pytest.raises(ConfigError):
            RunConfig(
                corpus_path=e2e_dir / "corpus.jsonl",
                mode=RunMode.HYBRID,
                model_id=MODEL,
                out_dir=tmp_path,
            )

    def test_unified_forbids_events(self, e2e_dir, tmp_path):
        with pytest.raises(ConfigError):
            RunConfig(
                corpus_path=e2e_dir / "corpus.jsonl",
                mode=RunMode.UNIFIED,
                model_id=MODEL,
                out_dir=tmp_path,
                event_strategy=EventStrategy.from_cli_token("gold"),
            )

    def test_temperature_effort_exclusive(self, e2e_dir, tmp_path):
        from beliefbench import ReasoningEffort

        with pytest.raises(ConfigError):
            RunConfig(
                corpus_path=e2e_dir / "corpus.jsonl",
                mode=RunMode.UNIFIED,
                model_id=MODEL,
                out_dir=tmp_path,
                temperature=0.0,
                reasoning_effort=ReasoningEffort.HIGH,
            )

    def test_effective_names(self, e2e_dir, tmp_path):
        cfg = e2e_config(e2e_dir, tmp_path, model_id="org/model")
        assert cfg.effective_run_name == "hybrid-org-model"
        named = e2e_config(e2e_dir, tmp_path, run_name="ablation-3")
        assert named.effective_run_name == "ablation-3"
        assert cfg.effective_cache_dir == tmp_path / "cache"

    def test_concurrency_validated(self, e2e_dir, tmp_path):
        with pytest.raises(ConfigError):
            e2e_config(e2e_dir, tmp_path, concurrency=0)


class TestEndToEnd:
    def test_scores_match_committed_derivation(self, e2e_dir, tmp_path):
        gw, _ = e2e_gateway(e2e_dir, tmp_path / "cache")
        manifest = run_experiment(e2e_config(e2e_dir, tmp_path / "out"), gateway=gw)
        expected = json.loads((e2e_dir / "expected_scores.json").read_text())
        report_ = manifest.score_report()
        for scope in ("full", "author", "nest"):
            prf = getattr(report_, scope)
            for field in ("tp", "fp", "fn", "precision", "recall", "f1"):
                assert getattr(prf, field) == expected[scope][field], (scope, field)

    def test_predictions_match_transcription(self, e2e_dir, tmp_path):
        gw, _ = e2e_gateway(e2e_dir, tmp_path / "cache")
        manifest = run_experiment(e2e_config(e2e_dir, tmp_path / "out"), gateway=gw)
        expected = {
            sid: annotations_from_records(records)
            for sid, records in json.loads(
                (e2e_dir / "predictions.json").read_text()
            ).items()
        }
        assert manifest.predictions() == expected

    def test_byte_identical_reruns(self, e2e_dir, tmp_path):
        cache = tmp_path / "cache"
        gw1, p1 = e2e_gateway(e2e_dir, cache)
        m1 = run_experiment(e2e_config(e2e_dir, tmp_path / "out1"), gateway=gw1)
        gw2, p2 = e2e_gateway(e2e_dir, cache)
        m2 = run_experiment(e2e_config(e2e_dir, tmp_path / "out2"), gateway=gw2)
        assert p2.call_count == 0  # warm cache: replay makes no dispatches
        assert (tmp_path / "out1" / "manifest.json").read_bytes() == (
            tmp_path / "out2" / "manifest.json"
        ).read_bytes()

    def test_planted_response_shapes_recorded(self, e2e_dir, tmp_path):
        gw, _ = e2e_gateway(e2e_dir, tmp_path / "cache")
        manifest = run_experiment(e2e_config(e2e_dir, tmp_path / "out"), gateway=gw)
        entries = {e["id"]: e for e in manifest.data["sentences"]}
        assert entries["s01"]["extraction_strategy"] == "FencedBlock"
        assert entries["s03"]["extraction_strategy"] == "LastArray"
        assert entries["s05"]["extraction_strategy"] == "None"
        assert entries["s05"]["predictions"] == []
        rejected_reasons = [reason for _, reason in entries["s06"]["rejected"]]
        assert "MultiTokenEvent" in rejected_reasons
        assert entries["s01"]["events"] == ["said", "phasing"]

    def test_artifacts_written(self, e2e_dir, tmp_path):
        gw, _ = e2e_gateway(e2e_dir, tmp_path / "cache")
        out = tmp_path / "out"
        manifest = run_experiment(e2e_config(e2e_dir, out), gateway=gw)
        assert manifest.path == out / "manifest.json"
        assert (out / "errors.csv").read_text().startswith("sentence_id,")
        for entry in manifest.data["sentences"]:
            assert (out / entry["response_file"]).is_file()
        assert manifest.data["template_versions"].keys() == {"hybrid"}
        assert manifest.data["cost"][MODEL]["calls"] == 12

    def test_unknown_model_rejected_before_calls(self, e2e_dir, tmp_path):
        gw, provider = e2e_gateway(e2e_dir, tmp_path / "cache")
        cfg = e2e_config(e2e_dir, tmp_path / "out", model_id="absent")
        with pytest.raises(ConfigError):
            run_experiment(cfg, gateway=gw)
        assert provider.call_count == 0


class TestFailurePolicy:
    def make_corpus(self, tmp_path):
        return write_jsonl(
            tmp_path / "corpus.jsonl",
            [
                {"id": "ok", "text": "He said so.", "gold_events": ["said"],
                 "gold": [{"source": "AUTHOR", "event": "said", "label": "true"}]},
                {"id": "doomed", "text": "Nothing matches this.", "gold_events": ["matches"],
                 "gold": [{"source": "AUTHOR", "event": "matches", "label": "true"}]},
            ],
        )

    def make_gateway(self, tmp_path):
        provider = ScriptedProvider(
            rules=[{
                "match": "He said so.",
                "reply": '[{"source": "AUTHOR", "event": "said", "label": "true"}]',
            }]
        )
        return Gateway({MODEL: provider}, tmp_path / "cache")

    def config(self, corpus, tmp_path, **overrides):
        return RunConfig(
            corpus_path=corpus,
            mode=RunMode.HYBRID,
            model_id=MODEL,
            out_dir=tmp_path / "out",
            event_strategy=EventStrategy.from_cli_token("gold"),
            event_strategy_token="gold",
            temperature=0.0,
            **overrides,
        )

    def test_lenient_scores_failure_as_empty(self, tmp_path):
        corpus = self.make_corpus(tmp_path)
        manifest = run_experiment(
            self.config(corpus, tmp_path), gateway=self.make_gateway(tmp_path)
        )
        entries = {e["id"]: e for e in manifest.data["sentences"]}
        assert entries["ok"]["error"] is None
        assert entries["doomed"]["error"].startswith("ProviderError")
        assert entries["doomed"]["predictions"] == []
        assert manifest.score_report().full.fn == 1

    def test_strict_aborts(self, tmp_path):
        from beliefbench import GatewayError

        corpus = self.make_corpus(tmp_path)
        with pytest.raises(GatewayError):
            run_experiment(
                self.config(corpus, tmp_path, strict=True),
                gateway=self.make_gateway(tmp_path),
            )


class TestManifestRoundTrip:
    def run_once(self, e2e_dir, tmp_path):
        gw, _ = e2e_gateway(e2e_dir, tmp_path / "cache")
        return run_experiment(e2e_config(e2e_dir, tmp_path / "out"), gateway=gw)

    def test_load_and_rescore(self, e2e_dir, tmp_path):
        manifest = self.run_once(e2e_dir, tmp_path)
        loaded = load_manifest(tmp_path / "out" / "manifest.json")
        assert loaded.run_name == manifest.run_name
        rescored = rescore_manifest(loaded)
        assert rescored == loaded.score_report()

    def test_rescore_detects_corpus_drift(self, e2e_dir, tmp_path):
        manifest = self.run_once(e2e_dir, tmp_path)
        loaded = load_manifest(tmp_path / "out" / "manifest.json")
        moved = tmp_path / "altered.jsonl"
        text = (e2e_dir / "corpus.jsonl").read_text()
        moved.write_text(text + "\n")
        loaded.data["corpus"]["path"] = str(moved)
        with pytest.raises(ScopeMismatch):
            rescore_manifest(loaded)

    def test_load_rejects_non_manifest(self, tmp_path):
        p = tmp_path / "manifest.json"
        p.write_text('{"run_name": "x"}')
        with pytest.raises(ValueError):
            load_manifest(p)


class TestReport:
    def manifests(self, e2e_dir, tmp_path):
        cache = tmp_path / "cache"
        gw1, _ = e2e_gateway(e2e_dir, cache)
        hybrid = run_experiment(e2e_config(e2e_dir, tmp_path / "h"), gateway=gw1)
        gw2, _ = e2e_gateway(e2e_dir, cache)
        unified = run_experiment(
            e2e_config(
                e2e_dir, tmp_path / "u",
                mode=RunMode.UNIFIED, event_strategy=None, event_strategy_token=None,
            ),
            gateway=gw2,
        )
        return unified, hybrid

    def test_single_manifest_row(self, e2e_dir, tmp_path):
        gw, _ = e2e_gateway(e2e_dir, tmp_path / "cache")
        manifest = run_experiment(e2e_config(e2e_dir, tmp_path / "out"), gateway=gw)
        tables = report([manifest])
        assert len(tables.rows) == 1
        assert tables.rows[0][0] == f"hybrid-{MODEL}"
        assert tables.deltas == ()

    def test_hybrid_minus_unified_delta(self, e2e_dir, tmp_path):
        unified, hybrid = self.manifests(e2e_dir, tmp_path)
        tables = report([unified, hybrid])
        assert len(tables.rows) == 2
        labels = [row[0] for row in tables.deltas]
        assert labels == [f"Δ hyb-unif {MODEL}"]

    def test_sota_reference_delta(self, e2e_dir, tmp_path):
        gw, _ = e2e_gateway(e2e_dir, tmp_path / "cache")
        manifest = run_experiment(e2e_config(e2e_dir, tmp_path / "out"), gateway=gw)
        tables = report([manifest], sota_full=69.5)
        label, full_d, author_d, nest_d = tables.deltas[-1]
        assert label.startswith("Δ vs SOTA ")
        # fixture Full F1 is 73.1%, so against 69.5 the movement is +3.6
        assert full_d == "+3.6"
        assert (author_d, nest_d) == ("-", "-")

    def test_mixed_corpora_rejected(self, e2e_dir, toy_corpus_path, tmp_path):
        gw, _ = e2e_gateway(e2e_dir, tmp_path / "cache")
        manifest = run_experiment(e2e_config(e2e_dir, tmp_path / "out"), gateway=gw)
        other = RunManifest(data=json.loads(manifest.to_json()))
        other.data["corpus"]["sha256"] = "0" * 64
        with pytest.raises(ScopeMismatch):
            report([manifest, other])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            report([])
