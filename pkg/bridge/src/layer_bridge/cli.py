"""Command line: load a model and serve distributions on stdio or HTTP."""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .model import LayerScorer
from .server import make_http_server, serve_stream


def _load(model_path: str):
    try:
        from transformers import AutoModelForCausalLM, AutoTokenizer

        tokenizer = AutoTokenizer.from_pretrained(model_path)
        model = AutoModelForCausalLM.from_pretrained(model_path)
        return model, tokenizer
    except Exception as exc:
        sys.stderr.write(f"layer-bridge: cannot load model {model_path!r}: {exc}\n")
        raise SystemExit(1) from exc


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="layer-bridge", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--model", required=True, help="model name or path")
    parser.add_argument("--http", default=None, metavar="HOST:PORT",
                        help="serve HTTP instead of stdio")
    parser.add_argument("--top-k", type=int, default=256)
    parser.add_argument("--max-tokens", type=int, default=None)
    parser.add_argument("--candidate-layers", default=None,
                        help="comma-separated layer indices; default 0..N/2")
    parser.add_argument("--transcript", default=None,
                        help="append raw stdio traffic to this file")
    args = parser.parse_args(argv)

    model, tokenizer = _load(args.model)
    layers = None
    if args.candidate_layers:
        layers = tuple(int(x) for x in args.candidate_layers.split(","))
    scorer = LayerScorer(
        model,
        tokenizer,
        candidate_layers=layers,
        top_k=args.top_k,
        max_tokens=args.max_tokens,
    )
    if args.http:
        host, _, port = args.http.rpartition(":")
        server = make_http_server(scorer, host or "127.0.0.1", int(port))
        sys.stderr.write(f"layer-bridge: serving on http://{host}:{port}/score\n")
        server.serve_forever()
        return 0
    transcript = open(args.transcript, "a", encoding="utf-8") if args.transcript else None
    try:
        serve_stream(scorer, sys.stdin, sys.stdout, transcript)
    finally:
        if transcript is not None:
            transcript.close()
    return 0


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
