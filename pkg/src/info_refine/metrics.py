"""Text metrics: cover exact match, ROUGE-L, and token-level F1.

Metric tokenization is whitespace over folded text and never depends on any
model tokenizer. Answer matching for cover EM additionally drops English
articles, mirroring common QA answer normalization.
"""

from __future__ import annotations

import re
import unicodedata
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

_ARTICLES = {"a", "an", "the"}
_WS_RE = re.compile(r"\s+")


@dataclass(frozen=True)
class EvalExample:
    query_id: str
    prediction: str
    gold_answers: tuple[str, ...] = ()
    reference: str | None = None


def _fold(text: str) -> str:
    """Lowercase, strip diacritics, and turn punctuation into spaces."""
    decomposed = unicodedata.normalize("NFKD", text)
    out = []
    for ch in decomposed:
        if unicodedata.combining(ch):
            continue
        if unicodedata.category(ch).startswith("P"):
            out.append(" ")
        else:
            out.append(ch.lower())
    return _WS_RE.sub(" ", "".join(out)).strip()


def normalize_text(text: str) -> str:
    """Folded text with English articles removed."""
    tokens = [t for t in _fold(text).split() if t not in _ARTICLES]
    return " ".join(tokens)


def metric_tokens(text: str) -> list[str]:
    """Whitespace tokens of folded text; articles are kept."""
    return _fold(text).split()


def cover_em(prediction: str, gold_answers: Sequence[str]) -> int:
    """1 iff any normalized gold answer is a substring of the normalized prediction."""
    if not gold_answers:
        raise ValueError("gold_answers must be non-empty")
    pred = normalize_text(prediction)
    for gold in gold_answers:
        norm = normalize_text(gold)
        if norm and norm in pred:
            return 1
    return 0


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Longest common subsequence length by dynamic programming."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        curr = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                curr.append(prev[j - 1] + 1)
            else:
                curr.append(max(prev[j], curr[j - 1]))
        prev = curr
    return prev[-1]


def rouge_l(prediction: str, reference: str) -> float:
    """LCS-based F1 over metric tokens."""
    pred = metric_tokens(prediction)
    ref = metric_tokens(reference)
    lcs = lcs_length(pred, ref)
    if lcs == 0:
        return 0.0
    precision = lcs / len(pred)
    recall = lcs / len(ref)
    return 2 * precision * recall / (precision + recall)


def token_f1(prediction: str, reference: str) -> float:
    """Bag-of-tokens F1 via multiset intersection."""
    pred = Counter(metric_tokens(prediction))
    ref = Counter(metric_tokens(reference))
    overlap = sum((pred & ref).values())
    if overlap == 0:
        return 0.0
    precision = overlap / sum(pred.values())
    recall = overlap / sum(ref.values())
    return 2 * precision * recall / (precision + recall)


def evaluate_examples(examples: Sequence[EvalExample]) -> dict:
    """Aggregate metrics over a prediction set.

    Accuracy is the mean of per-example cover EM (needs gold answers);
    rouge_l and token_f1 are means over examples carrying a reference.
    Values are rounded to 2 decimals on the 0-100 scale.
    """
    report: dict = {"n": len(examples)}
    em_examples = [e for e in examples if e.gold_answers]
    if em_examples:
        acc = sum(cover_em(e.prediction, e.gold_answers) for e in em_examples)
        report["accuracy"] = round(100.0 * acc / len(em_examples), 2)
    ref_examples = [e for e in examples if e.reference is not None]
    if ref_examples:
        report["rouge_l"] = round(
            100.0 * sum(rouge_l(e.prediction, e.reference) for e in ref_examples)
            / len(ref_examples),
            2,
        )
        report["token_f1"] = round(
            100.0 * sum(token_f1(e.prediction, e.reference) for e in ref_examples)
            / len(ref_examples),
            2,
        )
    return report
