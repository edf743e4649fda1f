import json

from taggerservice.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, main
from tagger_fixtures import TRAIN_FILE, tiny_base_dir, trained_artifact


class TestTrainCommand:
    def test_happy_path(self, tmp_path, capsys):
        out = tmp_path / "model"
        code = main([
            "train", "--data", str(TRAIN_FILE), "--out", str(out),
            "--base", str(tiny_base_dir()),
            "--epochs", "20", "--learning-rate", "5e-3",
        ])
        captured = capsys.readouterr()
        assert code == EXIT_OK
        assert f"model: {out}" in captured.out
        assert "train F1=100.0" in captured.out
        assert (out / "model.safetensors").exists()
        config = json.loads((out / "training_config.json").read_text())
        assert config["epochs"] == 20

    def test_missing_data_file(self, tmp_path, capsys):
        code = main([
            "train", "--data", str(tmp_path / "nope.jsonl"),
            "--out", str(tmp_path / "out"), "--base", str(tiny_base_dir()),
        ])
        assert code == EXIT_DATA
        assert "data error" in capsys.readouterr().err

    def test_malformed_data(self, tmp_path, capsys):
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"tokens": ["a"], "labels": []}\n', encoding="utf-8")
        code = main([
            "train", "--data", str(bad), "--out", str(tmp_path / "out"),
            "--base", str(tiny_base_dir()),
        ])
        assert code == EXIT_DATA

    def test_bad_hyperparams(self, tmp_path, capsys):
        code = main([
            "train", "--data", str(TRAIN_FILE),
            "--out", str(tmp_path / "out"), "--base", str(tiny_base_dir()),
            "--epochs", "0",
        ])
        assert code == EXIT_CONFIG
        assert "config error" in capsys.readouterr().err


class TestEvalCommand:
    def test_happy_path(self, capsys):
        out, _ = trained_artifact()
        code = main(["eval", "--model", str(out), "--data", str(TRAIN_FILE)])
        captured = capsys.readouterr()
        assert code == EXIT_OK
        assert "F1=100.0" in captured.out
        assert "tp=" in captured.out

    def test_missing_model_dir(self, tmp_path, capsys):
        code = main([
            "eval", "--model", str(tmp_path / "missing"),
            "--data", str(TRAIN_FILE),
        ])
        assert code == EXIT_DATA
