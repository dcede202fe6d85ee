"""Retrieval-perturbation conditions and robustness summaries.

Builds perturbed passage lists per query (answer presence/replacement
scenarios and positive-ratio / position / count sweeps) and summarizes metric
series with the signed max-relative-change statistic.
"""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from random import Random
from typing import Iterable, Sequence

from .metrics import cover_em, metric_tokens, normalize_text
from .seeding import derive_seed

HAS_ANS = "has_ans"
REPLACE = "replace"
NO_ANS = "no_ans"

RATIO_GRID = (100, 80, 60, 40, 20, 0)
RATIO_LIST_SIZE = 5
POSITION_LIST_SIZE = 10
COUNT_MAX = 10

_ARTICLES = {"a", "an", "the"}


class PoolError(ValueError):
    """A passage pool violates its labeling contract."""


class NoDistractor(ValueError):
    """The distractor pool has no usable phrase."""


class InsufficientPassages(ValueError):
    """A query lacks the passages a sweep kind requires."""


class DegenerateSeries(ValueError):
    """A metric series has no positive maximum."""


@dataclass(frozen=True)
class PassagePool:
    query_id: str
    question: str
    gold_answers: tuple[str, ...]
    positives: tuple[str, ...]
    negatives: tuple[str, ...]


@dataclass(frozen=True)
class PassageCondition:
    query_id: str
    kind: str
    setting: int | None
    passages: tuple[str, ...]
    positive_positions: tuple[int, ...] = ()
    replacements: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class SweepReport:
    kind: str
    settings: tuple[int, ...]
    values: tuple[float, ...]
    max_delta_pct: float


def load_pool(path: str | Path) -> list[PassagePool]:
    """Load a pool file, verifying labels by cover-EM containment."""
    pools = []
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
            pool = PassagePool(
                query_id=str(raw["query_id"]),
                question=str(raw.get("question", "")),
                gold_answers=tuple(str(a) for a in raw["answers"]),
                positives=tuple(str(p) for p in raw.get("positives", ())),
                negatives=tuple(str(p) for p in raw.get("negatives", ())),
            )
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise PoolError(f"line {line_no}: malformed pool record: {exc}") from exc
        if not pool.gold_answers:
            raise PoolError(f"line {line_no}: query {pool.query_id!r} has no answers")
        for passage in pool.positives:
            if not cover_em(passage, pool.gold_answers):
                raise PoolError(
                    f"line {line_no}: positive passage contains no answer: {passage!r}"
                )
        for passage in pool.negatives:
            if cover_em(passage, pool.gold_answers):
                raise PoolError(
                    f"line {line_no}: negative passage contains an answer: {passage!r}"
                )
        pools.append(pool)
    return pools


def classify_scenario(pool: PassagePool, retrieved: Sequence[str]) -> str:
    """HAS_ANS iff any gold answer is covered by any retrieved passage."""
    if not retrieved:
        raise ValueError("retrieved passages must be non-empty")
    for passage in retrieved:
        if cover_em(passage, pool.gold_answers):
            return HAS_ANS
    return NO_ANS


def _norm_with_map(text: str) -> tuple[str, list[int]]:
    """normalize_text(text) plus a map from normalized char to raw index."""
    stream: list[tuple[str, int]] = []
    for i, ch in enumerate(text):
        for d in unicodedata.normalize("NFKD", ch):
            if unicodedata.combining(d):
                continue
            if unicodedata.category(d).startswith("P"):
                stream.append((" ", i))
            else:
                for low in d.lower():
                    stream.append((low, i))
    tokens: list[list[tuple[str, int]]] = []
    current: list[tuple[str, int]] = []
    for ch, raw in stream:
        if ch.isspace():
            if current:
                tokens.append(current)
                current = []
        else:
            current.append((ch, raw))
    if current:
        tokens.append(current)
    kept = [t for t in tokens if "".join(c for c, _ in t) not in _ARTICLES]
    out: list[str] = []
    idx_map: list[int] = []
    for ti, tok in enumerate(kept):
        if ti:
            out.append(" ")
            idx_map.append(tok[0][1])
        for ch, raw in tok:
            out.append(ch)
            idx_map.append(raw)
    return "".join(out), idx_map


def _widen_to_word(text: str, start: int, end: int) -> tuple[int, int]:
    """Expand a raw [start, end] span so it never cuts a word in half."""
    while start > 0 and text[start - 1].isalnum() and text[start].isalnum():
        start -= 1
    while end + 1 < len(text) and text[end].isalnum() and text[end + 1].isalnum():
        end += 1
    return start, end


def apply_answer_replacement(
    passages: Sequence[str],
    gold_answers: Sequence[str],
    distractor_pool: Sequence[str],
    rng: Random,
) -> tuple[list[str], dict[str, str]]:
    """Swap every covered answer occurrence for one consistent distractor.

    Matching runs on normalized text (the same normalization cover EM uses)
    and is mapped back to raw spans, widened to word boundaries, so the result
    classifies as answer-free against the original answers. Each answer gets
    the pool phrase with the nearest token length, chosen once and reused
    across all passages.
    """
    answers = sorted(
        {a for a in gold_answers if normalize_text(a)},
        key=lambda a: (-len(normalize_text(a)), a),
    )
    if not answers:
        return list(passages), {}
    normalized = {a: normalize_text(a) for a in answers}
    candidates = [
        d
        for d in distractor_pool
        if normalize_text(d)
        and not any(norm in normalize_text(d) for norm in normalized.values())
    ]
    if not candidates:
        raise NoDistractor("no distractor is free of the gold answers")

    replacements: dict[str, str] = {}
    for answer in answers:
        want = len(metric_tokens(answer))
        best = min(abs(len(metric_tokens(d)) - want) for d in candidates)
        ties = sorted(d for d in candidates if abs(len(metric_tokens(d)) - want) == best)
        replacements[answer] = ties[0] if len(ties) == 1 else rng.choice(ties)

    result = []
    for passage in passages:
        text = passage
        for _ in range(200):
            if not any(norm in normalize_text(text) for norm in normalized.values()):
                break
            norm_text, idx_map = _norm_with_map(text)
            hit = None
            for answer in answers:
                pos = norm_text.find(normalized[answer])
                if pos != -1:
                    hit = (answer, pos)
                    break
            if hit is None:
                raise RuntimeError(
                    "normalization mismatch while replacing answers; "
                    f"passage: {text!r}"
                )
            answer, pos = hit
            span_end = pos + len(normalized[answer]) - 1
            start, end = _widen_to_word(text, idx_map[pos], idx_map[span_end])
            text = text[:start] + replacements[answer] + text[end + 1 :]
        else:
            raise RuntimeError("answer replacement did not converge")
        result.append(text)
    return result, replacements


def interleave_ranked(positives: Sequence[str], negatives: Sequence[str]) -> list[str]:
    """Alternate the two ranked lists, positives first, leftovers appended."""
    out = []
    for i in range(max(len(positives), len(negatives))):
        if i < len(positives):
            out.append(positives[i])
        if i < len(negatives):
            out.append(negatives[i])
    return out


def build_sweep(pool: PassagePool, kind: str, seed: int = 0) -> list[PassageCondition]:
    """Build the perturbed passage lists for one query.

    ratio     6 conditions, 5 passages each, positives at 100..0 percent,
              order shuffled per (seed, query, ratio)
    position  10 conditions, one positive moved across indices 0..9 over 9
              fixed negatives
    count     10 conditions, the top-n prefix of the ranked interleaving
    """
    if kind == "ratio":
        if len(pool.positives) < 5 or len(pool.negatives) < 5:
            raise InsufficientPassages(
                f"{pool.query_id}: ratio sweep needs >=5 positives and >=5 negatives"
            )
        conditions = []
        for ratio in RATIO_GRID:
            n_pos = ratio // 20
            tagged = [(p, True) for p in pool.positives[:n_pos]]
            tagged += [(p, False) for p in pool.negatives[: RATIO_LIST_SIZE - n_pos]]
            Random(derive_seed(seed, pool.query_id, "ratio", ratio)).shuffle(tagged)
            conditions.append(
                PassageCondition(
                    query_id=pool.query_id,
                    kind="ratio",
                    setting=ratio,
                    passages=tuple(p for p, _ in tagged),
                    positive_positions=tuple(
                        i for i, (_, is_pos) in enumerate(tagged) if is_pos
                    ),
                )
            )
        return conditions
    if kind == "position":
        if not pool.positives or len(pool.negatives) < POSITION_LIST_SIZE - 1:
            raise InsufficientPassages(
                f"{pool.query_id}: position sweep needs >=1 positive and >=9 negatives"
            )
        positive = pool.positives[0]
        negatives = list(pool.negatives[: POSITION_LIST_SIZE - 1])
        return [
            PassageCondition(
                query_id=pool.query_id,
                kind="position",
                setting=i,
                passages=tuple(negatives[:i] + [positive] + negatives[i:]),
                positive_positions=(i,),
            )
            for i in range(POSITION_LIST_SIZE)
        ]
    if kind == "count":
        ranked = interleave_ranked(pool.positives, pool.negatives)
        if len(ranked) < COUNT_MAX:
            raise InsufficientPassages(
                f"{pool.query_id}: count sweep needs >={COUNT_MAX} passages"
            )
        return [
            PassageCondition(
                query_id=pool.query_id,
                kind="count",
                setting=n,
                passages=tuple(ranked[:n]),
                positive_positions=tuple(
                    i for i, p in enumerate(ranked[:n]) if p in pool.positives
                ),
            )
            for n in range(1, COUNT_MAX + 1)
        ]
    raise ValueError(f"unknown sweep kind {kind!r}")


def build_scenarios(
    pool: PassagePool,
    distractor_pool: Sequence[str],
    seed: int = 0,
    list_size: int = 5,
) -> list[PassageCondition]:
    """Answer-present, answer-replaced, and answer-free conditions for a query."""
    conditions = []
    if pool.positives:
        retrieved = tuple(interleave_ranked(pool.positives, pool.negatives)[:list_size])
        conditions.append(
            PassageCondition(pool.query_id, HAS_ANS, None, retrieved)
        )
        rng = Random(derive_seed(seed, pool.query_id, "replace"))
        replaced, audit = apply_answer_replacement(
            list(retrieved), pool.gold_answers, distractor_pool, rng
        )
        conditions.append(
            PassageCondition(
                pool.query_id, REPLACE, None, tuple(replaced), replacements=audit
            )
        )
    if pool.negatives:
        conditions.append(
            PassageCondition(
                pool.query_id, NO_ANS, None, tuple(pool.negatives[:list_size])
            )
        )
    if not conditions:
        raise InsufficientPassages(f"{pool.query_id}: no passages at all")
    return conditions


def max_delta(series: Iterable[float]) -> float:
    """Signed max relative change (min - max) / max, as a percentage."""
    values = list(series)
    if not values:
        raise ValueError("series must be non-empty")
    highest = max(values)
    if highest <= 0:
        raise DegenerateSeries("series maximum must be positive")
    return round(100.0 * (min(values) - highest) / highest, 2)


def sweep_report(kind: str, settings: Sequence[int], values: Sequence[float]) -> SweepReport:
    if len(settings) != len(values):
        raise ValueError("settings and values must align")
    return SweepReport(
        kind=kind,
        settings=tuple(settings),
        values=tuple(values),
        max_delta_pct=max_delta(values),
    )
