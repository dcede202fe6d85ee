"""Document ingestion, sentence segmentation, and window sampling.

Segmentation is a deterministic rule-based splitter: a sentence boundary is a
run of terminal punctuation followed by whitespace and a capital letter or
opening quote, unless the word carrying the punctuation is a known
abbreviation or a single-letter initial. Sentences shorter than three tokens
are merged into the following sentence so that windows never carry fragments.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from random import Random
from typing import Iterable, Sequence

from .seeding import derive_seed


class EmptyDocument(ValueError):
    """No sentence survived segmentation."""


class DocumentTooShort(ValueError):
    """Document has fewer sentences than one window needs."""


class PivotTooShort(ValueError):
    """Pivot sentence has fewer than two tokens and cannot be split."""


# Words that end with '.' without terminating a sentence.
ABBREVIATIONS = frozenset(
    {
        "Mr.", "Mrs.", "Ms.", "Dr.", "Prof.", "St.", "Mt.", "Gen.", "Rep.",
        "Sen.", "Gov.", "Jr.", "Sr.", "Hon.", "Rev.", "Capt.", "Lt.", "Col.",
        "vs.", "etc.", "e.g.", "i.e.", "cf.", "al.", "approx.", "Fig.", "fig.",
        "No.", "no.", "Vol.", "vol.", "pp.", "p.", "ca.", "Co.", "Corp.",
        "Inc.", "Ltd.", "U.S.", "U.K.", "a.m.", "p.m.", "Jan.", "Feb.",
        "Mar.", "Apr.", "Jun.", "Jul.", "Aug.", "Sep.", "Sept.", "Oct.",
        "Nov.", "Dec.",
    }
)

_TERMINALS = ".?!"
_OPENERS = "\"'“‘("
_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)
_MIN_SENTENCE_TOKENS = 3


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str

    def __post_init__(self) -> None:
        if not self.doc_id:
            raise ValueError("doc_id must be non-empty")
        if not self.text.strip():
            raise EmptyDocument(f"document {self.doc_id!r} has no text")


@dataclass(frozen=True)
class Sentence:
    text: str
    tokens: tuple[str, ...]


@dataclass(frozen=True)
class SentenceWindow:
    doc_id: str
    offset: int
    sentences: tuple[Sentence, ...]
    pivot_index: int
    window_seed: int

    @property
    def k(self) -> int:
        return len(self.sentences)

    @property
    def pivot(self) -> Sentence:
        return self.sentences[self.pivot_index]


@dataclass(frozen=True)
class PrefixSplit:
    fraction: float
    prefix_tokens: tuple[str, ...]
    target_tokens: tuple[str, ...]


def tokenize(text: str) -> tuple[str, ...]:
    """Split text into word and single-character punctuation tokens."""
    return tuple(_TOKEN_RE.findall(text))


def _is_punct_token(tok: str) -> bool:
    return len(tok) == 1 and not (tok.isalnum() or tok == "_")


def detokenize(tokens: Iterable[str]) -> str:
    """Join tokens back into text, attaching punctuation to the left.

    The join is local: the glue before a token depends only on that token, so
    any token subsequence renders to a substring of the full rendering.
    Output equals the original text up to whitespace placement.
    """
    out: list[str] = []
    for tok in tokens:
        if out and not _is_punct_token(tok):
            out.append(" ")
        out.append(tok)
    return "".join(out)


def _is_boundary(text: str, idx: int) -> bool:
    """True when the terminal at text[idx] ends a sentence."""
    j = idx + 1
    while j < len(text) and text[j] in "\"'”’)":
        j += 1
    if j >= len(text) or not text[j].isspace():
        return False
    nxt = j
    while nxt < len(text) and text[nxt].isspace():
        nxt += 1
    if nxt >= len(text):
        return True
    if not (text[nxt].isupper() or text[nxt] in _OPENERS):
        return False
    if text[idx] == ".":
        word_start = idx
        while word_start > 0 and not text[word_start - 1].isspace():
            word_start -= 1
        word = text[word_start : idx + 1]
        if word in ABBREVIATIONS:
            return False
        # Single-letter initials such as "J. Smith".
        if len(word) == 2 and word[0].isupper():
            return False
    return True


def sentence_spans(text: str) -> list[tuple[int, int]]:
    """Character spans of the sentences in text, short spans merged forward."""
    spans: list[tuple[int, int]] = []
    start = 0
    i = 0
    while i < len(text):
        if text[i] in _TERMINALS:
            while i + 1 < len(text) and text[i + 1] in _TERMINALS:
                i += 1
            if _is_boundary(text, i):
                spans.append((start, i + 1))
                start = i + 1
        i += 1
    if start < len(text) and text[start:].strip():
        spans.append((start, len(text)))

    merged: list[tuple[int, int]] = []
    pending: tuple[int, int] | None = None
    for span in spans:
        if pending is not None:
            span = (pending[0], span[1])
            pending = None
        if len(tokenize(text[span[0] : span[1]])) < _MIN_SENTENCE_TOKENS:
            pending = span
        else:
            merged.append(span)
    if pending is not None:
        # A short trailing span stays on its own rather than re-merging
        # backward, which would grow an already emitted sentence.
        merged.append(pending)
    return merged


def segment_document(doc: Document) -> list[Sentence]:
    """Split a document into sentences covering every non-whitespace character."""
    text = doc.text
    sentences = []
    for s, e in sentence_spans(text):
        stripped = text[s:e].strip()
        tokens = tokenize(stripped)
        if tokens:
            sentences.append(Sentence(text=stripped, tokens=tokens))
    if not sentences:
        raise EmptyDocument(f"document {doc.doc_id!r} yields no sentences")
    return sentences


def _sample_offsets(n_sentences: int, k: int, n_windows: int, rng: Random) -> list[int]:
    """Uniformly place n_windows disjoint length-k windows over n_sentences."""
    slack = n_sentences - n_windows * k
    picks = sorted(rng.sample(range(slack + n_windows), n_windows))
    return [c + i * (k - 1) for i, c in enumerate(picks)]


def sample_windows(
    doc: Document,
    k: int = 15,
    windows_per_doc: int = 1,
    seed: int = 0,
    sentences: Sequence[Sentence] | None = None,
) -> list[SentenceWindow]:
    """Sample non-overlapping windows of k consecutive sentences.

    The per-window seed depends only on (seed, doc_id, offset), so results are
    identical no matter how documents are scheduled across workers. The pivot
    is drawn uniformly from the window; pivots with fewer than two tokens are
    redrawn up to k times, after which the window is dropped.

    Raises DocumentTooShort when the document has fewer than k sentences;
    callers are expected to count and skip.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    if windows_per_doc < 1:
        raise ValueError("windows_per_doc must be >= 1")
    if sentences is None:
        sentences = segment_document(doc)
    if len(sentences) < k:
        raise DocumentTooShort(
            f"document {doc.doc_id!r} has {len(sentences)} sentences, need {k}"
        )
    n_windows = min(windows_per_doc, len(sentences) // k)
    offsets_rng = Random(derive_seed(seed, doc.doc_id, "offsets"))
    offsets = _sample_offsets(len(sentences), k, n_windows, offsets_rng)

    windows = []
    for offset in offsets:
        window_seed = derive_seed(seed, doc.doc_id, offset)
        pivot_rng = Random(derive_seed(window_seed, "pivot"))
        chunk = tuple(sentences[offset : offset + k])
        pivot = pivot_rng.randrange(k)
        for _ in range(k):
            if len(chunk[pivot].tokens) >= 2:
                break
            pivot = pivot_rng.randrange(k)
        else:
            continue  # no usable pivot found, drop the window
        windows.append(
            SentenceWindow(
                doc_id=doc.doc_id,
                offset=offset,
                sentences=chunk,
                pivot_index=pivot,
                window_seed=window_seed,
            )
        )
    return windows


def split_at_fraction(tokens: Sequence[str], fraction: float) -> PrefixSplit:
    """Split tokens at floor(fraction * n), clamped so both sides are non-empty."""
    n = len(tokens)
    if n < 2:
        raise PivotTooShort(f"need at least 2 tokens to split, got {n}")
    cut = min(max(int(fraction * n), 1), n - 1)
    return PrefixSplit(
        fraction=fraction,
        prefix_tokens=tuple(tokens[:cut]),
        target_tokens=tuple(tokens[cut:]),
    )


def split_prefix_target(pivot: Sentence, window_seed: int) -> PrefixSplit:
    """Split the pivot at a fraction drawn uniformly from [1/3, 2/3]."""
    rng = Random(derive_seed(window_seed, "prefix"))
    fraction = (1.0 + rng.random()) / 3.0
    return split_at_fraction(pivot.tokens, fraction)
