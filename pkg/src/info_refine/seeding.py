"""Deterministic seed derivation for schedule-independent sampling."""

from __future__ import annotations

import hashlib


def derive_seed(*parts: object) -> int:
    """Hash arbitrary parts into a stable 64-bit seed.

    Uses blake2b over a length-prefixed encoding, so the value depends only on
    the rendered parts, never on interpreter hash randomization, platform, or
    worker scheduling. Any value with a stable str() works as a part.
    """
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        chunk = str(part).encode("utf-8")
        h.update(len(chunk).to_bytes(4, "big"))
        h.update(chunk)
    return int.from_bytes(h.digest(), "big")
