"""Wire protocol: message schemas and canonical serialization.

All messages are single JSON lines. The first message a server emits is the
handshake; afterwards each request line gets exactly one response line (a
scored response or an error object). Canonical serialization (sorted keys,
compact separators) makes transcripts byte-reproducible.
"""

from __future__ import annotations

import json

import jsonschema

HANDSHAKE_SCHEMA = {
    "type": "object",
    "required": ["n_layers", "vocab_size", "candidate_layers"],
    "properties": {
        "n_layers": {"type": "integer", "minimum": 2},
        "vocab_size": {"type": "integer", "minimum": 2},
        "candidate_layers": {
            "type": "array",
            "items": {"type": "integer", "minimum": 0},
            "minItems": 1,
        },
    },
    "additionalProperties": False,
}

REQUEST_SCHEMA = {
    "type": "object",
    "required": ["id", "tokens"],
    "properties": {
        "id": {"type": "string"},
        "tokens": {"type": "array", "items": {"type": "string"}, "minItems": 1},
    },
    "additionalProperties": False,
}

_PER_TOKEN_SCHEMA = {
    "type": "object",
    "required": ["support", "dists", "rest_mass"],
    "properties": {
        "support": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "dists": {
            "type": "object",
            "patternProperties": {
                r"^\d+$": {"type": "array", "items": {"type": "number"}}
            },
            "additionalProperties": False,
        },
        "rest_mass": {
            "type": "object",
            "patternProperties": {r"^\d+$": {"type": "number", "minimum": 0}},
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}

RESPONSE_SCHEMA = {
    "type": "object",
    "required": ["id", "layers", "per_token"],
    "properties": {
        "id": {"type": "string"},
        "layers": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "per_token": {"type": "array", "items": _PER_TOKEN_SCHEMA},
    },
    "additionalProperties": False,
}

ERROR_SCHEMA = {
    "type": "object",
    "required": ["id", "error"],
    "properties": {"id": {"type": "string"}, "error": {"type": "string"}},
    "additionalProperties": False,
}


def dumps(message: dict) -> str:
    """Canonical single-line rendering; identical input, identical bytes."""
    return json.dumps(message, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def loads(line: str) -> dict:
    return json.loads(line)


def validate_handshake(message: dict) -> None:
    jsonschema.validate(message, HANDSHAKE_SCHEMA)


def validate_request(message: dict) -> None:
    jsonschema.validate(message, REQUEST_SCHEMA)


def validate_response(message: dict) -> None:
    if "error" in message:
        jsonschema.validate(message, ERROR_SCHEMA)
    else:
        jsonschema.validate(message, RESPONSE_SCHEMA)
