"""Builders for the three training tasks.

Each window is turned into exactly one (context, prefix, target) sample:

  select_copy             context is the window verbatim, so the target can be
                          located and copied out of it.
  correct_complete        every context sentence is corrupted at informative
                          tokens; the clean continuation must be restored.
  contextual_stimulation  the pivot sentence is removed from the context, so
                          the continuation can only come from related text.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from random import Random
from typing import Sequence

from .corpus import PrefixSplit, Sentence, SentenceWindow, detokenize
from .providers import MASK_TOKEN, SPECIAL_TOKENS
from .seeding import derive_seed
from .stability import StabilityProfile


class EmptyVocabulary(ValueError):
    """No replacement candidate exists for a token."""


class Task(Enum):
    SELECT_COPY = "select_copy"
    CORRECT_COMPLETE = "correct_complete"
    CONTEXTUAL_STIMULATION = "contextual_stimulation"


ACTION_MASK = "mask"
ACTION_REPLACE = "replace"
ACTION_KEEP = "keep"


@dataclass(frozen=True)
class CorruptionProbs:
    """Selection probability plus action split, conditional on selection."""

    select: float = 0.30
    mask: float = 0.50
    replace: float = 0.40
    keep: float = 0.10

    def __post_init__(self) -> None:
        for name in ("select", "mask", "replace", "keep"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} probability must be in [0, 1]")
        if abs(self.mask + self.replace + self.keep - 1.0) > 1e-9:
            raise ValueError("mask + replace + keep must equal 1")


@dataclass(frozen=True)
class TokenAction:
    token_index: int
    action: str
    new_token: str | None = None


@dataclass(frozen=True)
class CorruptionEntry:
    sentence_index: int
    token_index: int
    action: str
    new_token: str | None = None


@dataclass(frozen=True)
class Provenance:
    doc_id: str
    offset: int
    pivot_index: int
    fraction: float
    window_seed: int
    corruption: tuple[CorruptionEntry, ...] | None = None


@dataclass(frozen=True)
class TrainingSample:
    sample_id: str
    task: Task
    context_sentences: tuple[str, ...]
    prefix: str
    target: str
    provenance: Provenance


def _base_sample(window: SentenceWindow, split: PrefixSplit, task: Task) -> TrainingSample:
    return TrainingSample(
        sample_id=f"{window.doc_id}@{window.offset}",
        task=task,
        context_sentences=tuple(detokenize(s.tokens) for s in window.sentences),
        prefix=detokenize(split.prefix_tokens),
        target=detokenize(split.target_tokens),
        provenance=Provenance(
            doc_id=window.doc_id,
            offset=window.offset,
            pivot_index=window.pivot_index,
            fraction=split.fraction,
            window_seed=window.window_seed,
        ),
    )


def build_select_copy(window: SentenceWindow, split: PrefixSplit) -> TrainingSample:
    """Context is the full window in document order, pivot included verbatim."""
    return _base_sample(window, split, Task.SELECT_COPY)


def corrupt_sentence(
    sentence: Sentence,
    informative: frozenset[int] | set[int],
    probs: CorruptionProbs,
    vocab: Sequence[str],
    rng: Random,
) -> tuple[tuple[str, ...], list[TokenAction]]:
    """Corrupt informative tokens in place, preserving token count.

    Each informative token independently enters the plan with probability
    `select`; an entered token is masked, replaced with a different vocabulary
    token, or kept marked, per the conditional action split. Tokens outside
    the informative set are never touched.
    """
    if not set(informative) <= set(range(len(sentence.tokens))):
        raise ValueError("informative indices out of range")
    tokens = list(sentence.tokens)
    plan: list[TokenAction] = []
    for idx in sorted(informative):
        if rng.random() >= probs.select:
            continue
        draw = rng.random()
        if draw < probs.mask:
            tokens[idx] = MASK_TOKEN
            plan.append(TokenAction(idx, ACTION_MASK, MASK_TOKEN))
        elif draw < probs.mask + probs.replace:
            candidates = [
                t for t in vocab if t != sentence.tokens[idx] and t not in SPECIAL_TOKENS
            ]
            if not candidates:
                raise EmptyVocabulary(
                    f"no replacement candidate for {sentence.tokens[idx]!r}"
                )
            new_token = rng.choice(candidates)
            tokens[idx] = new_token
            plan.append(TokenAction(idx, ACTION_REPLACE, new_token))
        else:
            plan.append(TokenAction(idx, ACTION_KEEP, None))
    return tuple(tokens), plan


def build_correct_complete(
    window: SentenceWindow,
    split: PrefixSplit,
    profiles: Sequence[StabilityProfile],
    probs: CorruptionProbs,
    vocab: Sequence[str],
) -> TrainingSample:
    """Corrupt every sentence of the window, pivot included; keep the split clean.

    Corruption randomness is derived per (window_seed, sentence index), so the
    result does not depend on scheduling.
    """
    if len(profiles) != window.k:
        raise ValueError("need one stability profile per window sentence")
    context: list[str] = []
    plan: list[CorruptionEntry] = []
    for i, sentence in enumerate(window.sentences):
        rng = Random(derive_seed(window.window_seed, "corrupt", i))
        corrupted, actions = corrupt_sentence(
            sentence, profiles[i].informative_set, probs, vocab, rng
        )
        context.append(detokenize(corrupted))
        plan.extend(
            CorruptionEntry(i, a.token_index, a.action, a.new_token) for a in actions
        )
    base = _base_sample(window, split, Task.CORRECT_COMPLETE)
    return replace(
        base,
        context_sentences=tuple(context),
        provenance=replace(base.provenance, corruption=tuple(plan)),
    )


def build_contextual_stimulation(
    window: SentenceWindow, split: PrefixSplit
) -> TrainingSample:
    """Drop the pivot (and any duplicate of it) from the context."""
    pivot_text = detokenize(window.pivot.tokens)
    base = _base_sample(window, split, Task.CONTEXTUAL_STIMULATION)
    context = tuple(
        text
        for i, text in enumerate(base.context_sentences)
        if i != window.pivot_index and text != pivot_text
    )
    return replace(base, context_sentences=context)
