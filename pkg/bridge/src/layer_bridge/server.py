"""Serving loops: newline-delimited JSON over stdio, or HTTP POST /score.

The handshake is the first line on stdio; over HTTP it is served on
GET /score. One request line yields exactly one response line; malformed or
oversized requests produce an error object and the session continues.
"""

from __future__ import annotations

import json
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import IO

from . import protocol
from .model import LayerScorer, SequenceTooLong, TokenizationFailure


def handle_request(scorer: LayerScorer, raw_line: str) -> dict:
    """One request line in, one response object out; never raises."""
    request_id = ""
    try:
        request = protocol.loads(raw_line)
        request_id = str(request.get("id", ""))
        protocol.validate_request(request)
        entries = scorer.score([str(t) for t in request["tokens"]])
        return {
            "id": request_id,
            "layers": [*scorer.candidate_layers, scorer.n_layers],
            "per_token": entries,
        }
    except (SequenceTooLong, TokenizationFailure) as exc:
        return {"id": request_id, "error": str(exc)}
    except Exception as exc:  # malformed JSON, schema violations, model errors
        return {"id": request_id, "error": f"bad request: {exc}"}


def serve_stream(
    scorer: LayerScorer,
    stdin: IO[str],
    stdout: IO[str],
    transcript: IO[str] | None = None,
) -> None:
    def emit(message: dict) -> None:
        line = protocol.dumps(message)
        stdout.write(line + "\n")
        stdout.flush()
        if transcript is not None:
            transcript.write(json.dumps({"dir": "out", "line": line}) + "\n")

    emit(scorer.handshake())
    for raw in stdin:
        if not raw.strip():
            continue
        if transcript is not None:
            transcript.write(json.dumps({"dir": "in", "line": raw.rstrip("\n")}) + "\n")
        emit(handle_request(scorer, raw))


def replay_transcript(scorer: LayerScorer, lines: list[dict]) -> list[str]:
    """Re-drive recorded inputs; returns the fresh output lines in order."""
    outputs = [protocol.dumps(scorer.handshake())]
    for item in lines:
        if item["dir"] == "in":
            outputs.append(protocol.dumps(handle_request(scorer, item["line"])))
    return outputs


class _Handler(BaseHTTPRequestHandler):
    scorer: LayerScorer  # attached by make_http_server

    def _send(self, payload: dict, status: int = 200) -> None:
        body = protocol.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):  # noqa: N802 - http.server hook
        if self.path.rstrip("/") == "/score":
            self._send(self.scorer.handshake())
        else:
            self._send({"id": "", "error": f"unknown path {self.path}"}, status=404)

    def do_POST(self):  # noqa: N802 - http.server hook
        if self.path.rstrip("/") != "/score":
            self._send({"id": "", "error": f"unknown path {self.path}"}, status=404)
            return
        length = int(self.headers.get("Content-Length", "0"))
        raw = self.rfile.read(length).decode("utf-8")
        self._send(handle_request(self.scorer, raw))

    def log_message(self, fmt, *args):  # quiet; diagnostics belong to stderr
        pass


def make_http_server(scorer: LayerScorer, host: str, port: int) -> ThreadingHTTPServer:
    handler = type("BoundHandler", (_Handler,), {"scorer": scorer})
    return ThreadingHTTPServer((host, port), handler)
