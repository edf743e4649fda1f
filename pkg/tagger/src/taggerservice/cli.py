"""Command line front end: train, serve, eval."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .data import DataFormatError
from .evaluate import evaluate_tagger
from .serve import serve_tagger
from .train import DEFAULT_BASE_MODEL, TaggerHyperparams, TrainingError, train_tagger

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_DATA = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="taggerservice",
        description="Train, serve, and evaluate the O/EVENT token tagger.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="info logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="fine-tune a tagger")
    p_train.add_argument("--data", required=True, help="token/label JSONL path")
    p_train.add_argument("--out", required=True, help="artifact output directory")
    p_train.add_argument(
        "--base", default=DEFAULT_BASE_MODEL,
        help="pretrained base model id or local checkpoint directory",
    )
    p_train.add_argument("--epochs", type=int, default=None)
    p_train.add_argument("--batch-size", type=int, default=None)
    p_train.add_argument("--learning-rate", type=float, default=None)
    p_train.add_argument("--max-seq-len", type=int, default=None)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.set_defaults(func=_cmd_train)

    p_serve = sub.add_parser("serve", help="serve a trained tagger over HTTP")
    p_serve.add_argument("--model", required=True, help="artifact directory")
    p_serve.add_argument("--port", type=int, required=True)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.set_defaults(func=_cmd_serve)

    p_eval = sub.add_parser("eval", help="token F1 on a labeled corpus")
    p_eval.add_argument("--model", required=True, help="artifact directory")
    p_eval.add_argument("--data", required=True, help="token/label JSONL path")
    p_eval.set_defaults(func=_cmd_eval)

    return parser


def _hyperparams(args: argparse.Namespace) -> TaggerHyperparams:
    defaults = TaggerHyperparams()
    return TaggerHyperparams(
        epochs=args.epochs if args.epochs is not None else defaults.epochs,
        batch_size=(
            args.batch_size if args.batch_size is not None else defaults.batch_size
        ),
        learning_rate=(
            args.learning_rate
            if args.learning_rate is not None
            else defaults.learning_rate
        ),
        max_sequence_length=(
            args.max_seq_len
            if args.max_seq_len is not None
            else defaults.max_sequence_length
        ),
    )


def _cmd_train(args: argparse.Namespace) -> int:
    out = train_tagger(
        args.data, args.out, _hyperparams(args), base_model=args.base, seed=args.seed
    )
    score = evaluate_tagger(out, args.data)
    print(f"model: {out}")
    print(f"train F1={score.f1 * 100:.1f} P={score.precision * 100:.1f} "
          f"R={score.recall * 100:.1f}")
    return EXIT_OK


def _require_artifact(model: str) -> Path:
    model_dir = Path(model)
    if not model_dir.is_dir():
        raise FileNotFoundError(f"model directory {model_dir} does not exist")
    return model_dir


def _cmd_serve(args: argparse.Namespace) -> int:
    serve_tagger(_require_artifact(args.model), args.port, host=args.host)
    return EXIT_OK


def _cmd_eval(args: argparse.Namespace) -> int:
    score = evaluate_tagger(_require_artifact(args.model), args.data)
    print(f"F1={score.f1 * 100:.1f} P={score.precision * 100:.1f} "
          f"R={score.recall * 100:.1f} (tp={score.tp} fp={score.fp} fn={score.fn})")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except DataFormatError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"artifact error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingError as exc:
        print(f"training error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
