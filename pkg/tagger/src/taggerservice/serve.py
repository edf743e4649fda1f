"""HTTP tagging service.

POST /tag with {"text": str, "tokens": [str]?} returns {"events": [str]}.
Tokens default to a whitespace split of the text; returned events are
always drawn from the input tokens. Malformed bodies get 400, inference
failures 500. One inference at a time behind a lock; connections queue.
"""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional, Sequence, Union

from .evaluate import load_model, predict_events

logger = logging.getLogger(__name__)


class TagService:
    """Loaded model plus the tokens -> events call the handler needs."""

    def __init__(self, tokenizer, model, max_length: int = 128):
        self.tokenizer = tokenizer
        self.model = model
        self.max_length = max_length
        self._lock = threading.Lock()

    @classmethod
    def from_artifact(cls, model_dir: Union[str, Path]) -> "TagService":
        tokenizer, model, max_length = load_model(model_dir)
        return cls(tokenizer, model, max_length)

    def tag(self, tokens: Sequence[str]) -> list[str]:
        if not tokens:
            return []
        with self._lock:
            return predict_events(self.tokenizer, self.model, tokens, self.max_length)


class _BadRequest(ValueError):
    pass


def _parse_body(raw: bytes) -> list[str]:
    """Extract the token list from a request body; raises _BadRequest."""
    try:
        obj = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise _BadRequest(f"body is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise _BadRequest("body must be a JSON object")
    text = obj.get("text")
    if not isinstance(text, str):
        raise _BadRequest("field 'text' must be a string")
    tokens = obj.get("tokens")
    if tokens is None:
        return text.split()
    if not isinstance(tokens, list) or not all(
        isinstance(t, str) and t for t in tokens
    ):
        raise _BadRequest("field 'tokens' must be a list of non-empty strings")
    return tokens


class _TagHandler(BaseHTTPRequestHandler):
    service: TagService  # bound by make_server

    def _send(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_POST(self) -> None:  # noqa: N802 (http.server API)
        if self.path.rstrip("/") != "/tag":
            self._send(404, {"error": f"unknown path {self.path!r}"})
            return
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length)
        try:
            tokens = _parse_body(raw)
        except _BadRequest as exc:
            self._send(400, {"error": str(exc)})
            return
        try:
            events = self.service.tag(tokens)
        except Exception as exc:
            logger.exception("inference failed")
            self._send(500, {"error": f"inference failed: {exc}"})
            return
        self._send(200, {"events": events})

    def log_message(self, format: str, *args) -> None:
        logger.debug("%s - %s", self.address_string(), format % args)


def make_server(
    service: TagService, host: str = "127.0.0.1", port: int = 0
) -> ThreadingHTTPServer:
    """Build (but do not start) the server; port 0 picks a free port."""
    handler = type("BoundTagHandler", (_TagHandler,), {"service": service})
    server = ThreadingHTTPServer((host, port), handler)
    server.request_queue_size = 16
    return server


def serve_tagger(
    model_dir: Union[str, Path],
    port: int,
    host: str = "127.0.0.1",
    ready: Optional[threading.Event] = None,
) -> None:
    """Load the artifact and serve until interrupted."""
    server = make_server(TagService.from_artifact(model_dir), host, port)
    logger.info("serving on %s:%d", *server.server_address)
    if ready is not None:
        ready.set()
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
