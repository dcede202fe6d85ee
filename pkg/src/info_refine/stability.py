"""Per-token word-distribution stability scoring.

A token's stability score is the largest base-2 Jensen-Shannon divergence
between the final layer's next-token distribution and any candidate early
layer's distribution for that position. High scores mark tokens whose
prediction is still being reshaped in the upper half of the network, which is
the selection signal for corruption targets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_INFORMATIVE_RATIO = 0.5
_SUM_TOLERANCE = 1e-6


class SupportMismatch(ValueError):
    """Distributions do not share a support."""


class MissingLayer(KeyError):
    """A required layer is absent from a distribution set."""


def default_candidate_layers(n_layers: int) -> tuple[int, ...]:
    """Candidate set 0..floor(N/2) inclusive."""
    return tuple(range(n_layers // 2 + 1))


@dataclass(frozen=True)
class ProviderConfig:
    n_layers: int = 8
    candidate_layers: tuple[int, ...] = ()
    vocab_size: int = 64
    hidden_size: int = 32
    provider_kind: str = "toy"

    def __post_init__(self) -> None:
        if self.n_layers < 2:
            raise ValueError("n_layers must be >= 2")
        if self.vocab_size < 2:
            raise ValueError("vocab_size must be >= 2")
        if self.provider_kind not in ("toy", "bridge"):
            raise ValueError(f"unknown provider_kind {self.provider_kind!r}")
        if not self.candidate_layers:
            object.__setattr__(
                self, "candidate_layers", default_candidate_layers(self.n_layers)
            )
        layers = tuple(sorted(set(self.candidate_layers)))
        if layers[0] < 0 or layers[-1] >= self.n_layers:
            raise ValueError("candidate_layers must lie in [0, n_layers)")
        object.__setattr__(self, "candidate_layers", layers)

    def fingerprint(self) -> str:
        return (
            f"{self.provider_kind}:N={self.n_layers}"
            f":J={','.join(map(str, self.candidate_layers))}"
            f":v={self.vocab_size}:h={self.hidden_size}"
        )


@dataclass
class LayerDistributionSet:
    """Per token position, one probability vector per served layer.

    Vectors at one position share a support; for coarsened providers the last
    entry is the rest-mass bucket. The final layer is always present.
    """

    final_layer: int
    per_token: list[dict[int, np.ndarray]]
    supports: list[np.ndarray] | None = None

    def validate(self) -> None:
        for pos, dists in enumerate(self.per_token):
            if self.final_layer not in dists:
                raise MissingLayer(f"final layer missing at position {pos}")
            for layer, vec in dists.items():
                if np.any(vec < 0):
                    raise ValueError(f"negative mass at position {pos}, layer {layer}")
                if abs(float(vec.sum()) - 1.0) > _SUM_TOLERANCE:
                    raise ValueError(
                        f"distribution at position {pos}, layer {layer} "
                        f"sums to {float(vec.sum()):.8f}"
                    )


@dataclass(frozen=True)
class StabilityProfile:
    sentence_ref: str
    scores: tuple[float, ...]
    informative_set: frozenset[int] = field(default_factory=frozenset)


def _kl_bits(p: np.ndarray, m: np.ndarray) -> float:
    mask = p > 0
    return float(np.sum(p[mask] * np.log2(p[mask] / m[mask])))


def jsd(p: np.ndarray, q: np.ndarray) -> float:
    """Base-2 Jensen-Shannon divergence, in [0, 1].

    0 * log(0/x) is treated as 0. The two KL terms are computed against the
    shared midpoint and summed in a fixed order, so jsd(p, q) == jsd(q, p)
    exactly, not just within rounding.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise SupportMismatch(f"support sizes differ: {p.shape} vs {q.shape}")
    if abs(float(p.sum()) - 1.0) > _SUM_TOLERANCE or abs(float(q.sum()) - 1.0) > _SUM_TOLERANCE:
        raise ValueError("inputs must each sum to 1 within 1e-6")
    m = 0.5 * (p + q)
    value = 0.5 * (_kl_bits(p, m) + _kl_bits(q, m))
    return min(max(value, 0.0), 1.0)


def select_informative(scores, ratio: float = DEFAULT_INFORMATIVE_RATIO) -> frozenset[int]:
    """Indices of the top ceil(ratio * n) scores, ties going to lower indices."""
    scores = list(scores)
    if not scores:
        raise ValueError("scores must be non-empty")
    if not 0 < ratio <= 1:
        raise ValueError("ratio must be in (0, 1]")
    count = math.ceil(ratio * len(scores))
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return frozenset(order[:count])


def stability_profile(
    dists: LayerDistributionSet,
    cfg: ProviderConfig,
    sentence_ref: str = "",
    ratio: float = DEFAULT_INFORMATIVE_RATIO,
) -> StabilityProfile:
    """Score every token as max JSD(final layer, candidate layer)."""
    scores: list[float] = []
    for pos, token_dists in enumerate(dists.per_token):
        if dists.final_layer not in token_dists:
            raise MissingLayer(f"final layer absent at position {pos}")
        final_vec = token_dists[dists.final_layer]
        best = 0.0
        for layer in cfg.candidate_layers:
            if layer not in token_dists:
                raise MissingLayer(f"candidate layer {layer} absent at position {pos}")
            best = max(best, jsd(final_vec, token_dists[layer]))
        scores.append(best)
    return StabilityProfile(
        sentence_ref=sentence_ref,
        scores=tuple(scores),
        informative_set=select_informative(scores, ratio),
    )


def coarsen(p: np.ndarray, keep: np.ndarray) -> np.ndarray:
    """Project a distribution onto selected indices plus one rest-mass bucket.

    Merging bins is a deterministic channel, so for any shared coarsening
    jsd(coarsen(p), coarsen(q)) <= jsd(p, q).
    """
    p = np.asarray(p, dtype=np.float64)
    kept = p[keep]
    return np.concatenate([kept, [max(0.0, float(p.sum() - kept.sum()))]])
