"""Layer-distribution providers: the built-in toy provider and the bridge client.

The toy provider is a deterministic stand-in for a real model's per-layer
heads: pseudo-random logits per (token position, layer) drawn from a seeded
generator, softmaxed. The bridge client speaks newline-delimited JSON to an
external process (or HTTP endpoint) that serves real model distributions on a
coarsened support with a rest-mass bucket.
"""

from __future__ import annotations

import json
import subprocess
import urllib.error
import urllib.request
from typing import Sequence

import numpy as np

from .corpus import Sentence
from .seeding import derive_seed
from .stability import LayerDistributionSet, ProviderConfig

MASK_TOKEN = "[MASK]"
OOV_TOKEN = "<unk>"
SPECIAL_TOKENS = (MASK_TOKEN, OOV_TOKEN)

_TOY_WORDS = (
    "the", "of", "and", "to", "in", "a", "is", "was", "for", "on",
    "as", "with", "by", "at", "from", "it", "that", "he", "she", "they",
    "his", "her", "its", "an", "be", "are", "were", "this", "which", "or",
    "had", "has", "have", "not", "but", "one", "two", "first", "new", "more",
    "after", "also", "into", "over", "time", "year", "city", "world", "war",
    "state", "river", "north", "south", "king", "part", "most", "made", "used",
)

TOY_VOCAB: tuple[str, ...] = SPECIAL_TOKENS + (".", ",", "?", "!") + _TOY_WORDS

_SHARPEN = 2.0
_SMOOTH = 0.02


class ProviderError(RuntimeError):
    """The provider process or endpoint failed."""


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def toy_layer_distributions(
    sentence: Sentence, cfg: ProviderConfig, seed: int
) -> LayerDistributionSet:
    """Deterministic per-layer distributions for every token position.

    Each candidate layer gets independent seeded logits. The final layer is a
    smoothed sharpening of the middle layer's distribution, which keeps the
    final-vs-candidate divergences strictly positive and non-degenerate.
    """
    if cfg.provider_kind != "toy":
        raise ValueError("toy_layer_distributions requires a toy ProviderConfig")
    mid = cfg.n_layers // 2
    per_token: list[dict[int, np.ndarray]] = []
    for pos in range(len(sentence.tokens)):
        dists: dict[int, np.ndarray] = {}
        mid_logits: np.ndarray | None = None
        for layer in sorted(set(cfg.candidate_layers) | {mid}):
            rng = np.random.default_rng(derive_seed(seed, pos, layer))
            logits = rng.standard_normal(cfg.vocab_size)
            if layer == mid:
                mid_logits = logits
            if layer in cfg.candidate_layers:
                dists[layer] = _softmax(logits)
        assert mid_logits is not None
        sharpened = _softmax(_SHARPEN * mid_logits)
        dists[cfg.n_layers] = (1.0 - _SMOOTH) * sharpened + _SMOOTH / cfg.vocab_size
        per_token.append(dists)
    return LayerDistributionSet(final_layer=cfg.n_layers, per_token=per_token)


class ToyProvider:
    """Built-in provider over a closed small vocabulary with an OOV token."""

    kind = "toy"

    def __init__(self, cfg: ProviderConfig | None = None):
        self.cfg = cfg or ProviderConfig()

    def layer_distributions(self, sentence: Sentence, seed: int) -> LayerDistributionSet:
        return toy_layer_distributions(sentence, self.cfg, seed)

    def replacement_vocabulary(self) -> tuple[str, ...]:
        return _TOY_WORDS

    def close(self) -> None:
        pass


def _parse_response(payload: dict, n_layers: int) -> LayerDistributionSet:
    try:
        layers = [int(x) for x in payload["layers"]]
        per_token: list[dict[int, np.ndarray]] = []
        supports: list[np.ndarray] = []
        for entry in payload["per_token"]:
            supports.append(np.asarray(entry["support"], dtype=np.int64))
            dists: dict[int, np.ndarray] = {}
            for layer in layers:
                key = str(layer)
                vec = np.asarray(entry["dists"][key], dtype=np.float64)
                rest = float(entry["rest_mass"][key])
                dists[layer] = np.concatenate([vec, [rest]])
            per_token.append(dists)
    except (KeyError, TypeError, ValueError) as exc:
        raise ProviderError(f"malformed provider response: {exc}") from exc
    out = LayerDistributionSet(
        final_layer=n_layers, per_token=per_token, supports=supports
    )
    out.validate()
    return out


class BridgeClient:
    """Client for an external layer-distribution server.

    Address forms:
      http(s)://host:port  -- handshake via GET /score, requests via POST /score
      anything else        -- command line, spawned as a subprocess speaking
                              newline-delimited JSON on stdin/stdout with the
                              handshake as its first output line
    """

    kind = "bridge"

    def __init__(self, address: str, timeout: float = 60.0):
        self.address = address
        self.timeout = timeout
        self._proc: subprocess.Popen | None = None
        self._request_counter = 0
        if address.startswith(("http://", "https://")):
            handshake = self._http_get()
        else:
            try:
                self._proc = subprocess.Popen(
                    address.split(),
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    text=True,
                )
            except OSError as exc:
                raise ProviderError(f"cannot start provider {address!r}: {exc}") from exc
            line = self._proc.stdout.readline()
            if not line:
                raise ProviderError("provider exited before handshake")
            handshake = self._loads(line)
        try:
            self.cfg = ProviderConfig(
                n_layers=int(handshake["n_layers"]),
                candidate_layers=tuple(int(x) for x in handshake["candidate_layers"]),
                vocab_size=int(handshake["vocab_size"]),
                provider_kind="bridge",
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ProviderError(f"malformed handshake: {exc}") from exc

    @staticmethod
    def _loads(line: str) -> dict:
        try:
            return json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProviderError(f"provider sent invalid JSON: {exc}") from exc

    def _http_get(self) -> dict:
        try:
            with urllib.request.urlopen(self.address.rstrip("/") + "/score", timeout=self.timeout) as resp:
                return self._loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, OSError) as exc:
            raise ProviderError(f"handshake failed for {self.address!r}: {exc}") from exc

    def _roundtrip(self, request: dict) -> dict:
        if self._proc is not None:
            if self._proc.poll() is not None:
                raise ProviderError("provider process has exited")
            self._proc.stdin.write(json.dumps(request) + "\n")
            self._proc.stdin.flush()
            line = self._proc.stdout.readline()
            if not line:
                raise ProviderError("provider closed the stream")
            return self._loads(line)
        data = json.dumps(request).encode("utf-8")
        req = urllib.request.Request(
            self.address.rstrip("/") + "/score",
            data=data,
            headers={"Content-Type": "application/json"},
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return self._loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, OSError) as exc:
            raise ProviderError(f"request failed: {exc}") from exc

    def layer_distributions(self, sentence: Sentence, seed: int) -> LayerDistributionSet:
        self._request_counter += 1
        request = {"id": f"r{self._request_counter}", "tokens": list(sentence.tokens)}
        payload = self._roundtrip(request)
        if "error" in payload:
            raise ProviderError(f"provider error: {payload['error']}")
        if payload.get("id") != request["id"]:
            raise ProviderError("response id does not match request id")
        return _parse_response(payload, self.cfg.n_layers)

    def replacement_vocabulary(self) -> tuple[str, ...] | None:
        # The wire protocol has no vocabulary dump; callers fall back to a
        # corpus-derived vocabulary for replacement sampling.
        return None

    def close(self) -> None:
        if self._proc is not None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            self._proc.wait(timeout=10)
            self._proc = None


def make_provider(kind: str, address: str | None = None, cfg: ProviderConfig | None = None):
    if kind == "toy":
        return ToyProvider(cfg)
    if kind == "bridge":
        if not address:
            raise ValueError("bridge provider needs an address")
        return BridgeClient(address)
    raise ValueError(f"unknown provider kind {kind!r}")


def corpus_vocabulary(sentences: Sequence[Sentence], limit: int = 5000) -> tuple[str, ...]:
    """Most frequent word tokens of a corpus, for replacement sampling."""
    counts: dict[str, int] = {}
    for sentence in sentences:
        for tok in sentence.tokens:
            if tok.isalnum() and tok not in SPECIAL_TOKENS:
                counts[tok] = counts.get(tok, 0) + 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return tuple(tok for tok, _ in ranked[:limit])
