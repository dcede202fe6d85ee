from __future__ import annotations

import random

import pytest

from info_refine.corpus import Document

_WORDS = (
    "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel",
    "india", "juliet", "kilo", "lima", "mike", "november", "oscar", "papa",
    "quebec", "romeo", "sierra", "tango", "uniform", "victor", "whiskey",
)


def make_document(doc_id: str, n_sentences: int, rng: random.Random) -> Document:
    """Document of distinct capitalized sentences, each at least 7 tokens."""
    sentences = []
    for i in range(n_sentences):
        body = " ".join(rng.choice(_WORDS) for _ in range(rng.randint(4, 8)))
        sentences.append(f"Line {i} of {doc_id} says {body}.")
    return Document(doc_id=doc_id, text=" ".join(sentences))


def make_corpus(n_docs: int, sentences_per_doc: int, seed: int = 0) -> list[Document]:
    rng = random.Random(seed)
    return [make_document(f"doc{i:05d}", sentences_per_doc, rng) for i in range(n_docs)]


@pytest.fixture
def small_corpus() -> list[Document]:
    return make_corpus(n_docs=20, sentences_per_doc=24, seed=7)
