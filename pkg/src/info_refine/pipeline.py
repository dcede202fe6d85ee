"""End-to-end dataset construction: ingest, plan windows, build samples.

Every sample is a pure function of (window, window_seed, task, config), so
document processing and sample building can fan out across workers while the
final output stays byte-identical to a sequential run.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .corpus import (
    Document,
    DocumentTooShort,
    PrefixSplit,
    SentenceWindow,
    sample_windows,
    split_prefix_target,
)
from .dataset import SchemaError
from .providers import ToyProvider, corpus_vocabulary
from .scenarios import (
    CorruptionProbs,
    Task,
    TrainingSample,
    build_contextual_stimulation,
    build_correct_complete,
    build_select_copy,
)
from .seeding import derive_seed
from .stability import stability_profile


@dataclass
class BuildCounters:
    documents: int = 0
    docs_too_short: int = 0
    windows: int = 0
    corruption_actions: dict[str, int] = field(
        default_factory=lambda: {"mask": 0, "replace": 0, "keep": 0}
    )


def read_corpus(path: str | Path) -> list[Document]:
    """Read documents from a JSONL file or a directory of text files."""
    path = Path(path)
    docs: list[Document] = []
    seen: set[str] = set()
    if path.is_dir():
        for file in sorted(path.rglob("*.txt")):
            text = file.read_text(encoding="utf-8")
            if not text.strip():
                continue
            doc_id = file.relative_to(path).as_posix()
            docs.append(Document(doc_id=doc_id, text=text))
            seen.add(doc_id)
        return docs
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
            doc = Document(doc_id=str(raw["doc_id"]), text=str(raw["text"]))
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise SchemaError(f"corpus line {line_no}: {exc}") from exc
        if doc.doc_id in seen:
            raise SchemaError(f"corpus line {line_no}: duplicate doc_id {doc.doc_id!r}")
        seen.add(doc.doc_id)
        docs.append(doc)
    return docs


def plan_windows(
    docs: Sequence[Document],
    k: int,
    windows_per_doc: int,
    seed: int,
    counters: BuildCounters | None = None,
) -> list[tuple[SentenceWindow, PrefixSplit]]:
    """Sample windows and prefix splits for the whole corpus."""
    counters = counters if counters is not None else BuildCounters()
    planned = []
    for doc in docs:
        counters.documents += 1
        try:
            windows = sample_windows(doc, k=k, windows_per_doc=windows_per_doc, seed=seed)
        except DocumentTooShort:
            counters.docs_too_short += 1
            continue
        for window in windows:
            planned.append((window, split_prefix_target(window.pivot, window.window_seed)))
            counters.windows += 1
    return planned


def _score_profiles(window: SentenceWindow, provider) -> list:
    profiles = []
    for i, sentence in enumerate(window.sentences):
        dists = provider.layer_distributions(
            sentence, derive_seed(window.window_seed, "layers", i)
        )
        profiles.append(
            stability_profile(
                dists, provider.cfg, sentence_ref=f"{window.doc_id}@{window.offset}#{i}"
            )
        )
    return profiles


def build_one_sample(
    window: SentenceWindow,
    split: PrefixSplit,
    task: Task,
    probs: CorruptionProbs,
    vocab: tuple[str, ...],
    provider,
) -> TrainingSample:
    if task is Task.SELECT_COPY:
        return build_select_copy(window, split)
    if task is Task.CONTEXTUAL_STIMULATION:
        return build_contextual_stimulation(window, split)
    profiles = _score_profiles(window, provider)
    return build_correct_complete(window, split, profiles, probs, vocab)


def _build_toy_sample(args) -> TrainingSample:
    window, split, task, probs, vocab, provider_cfg = args
    return build_one_sample(window, split, task, probs, vocab, ToyProvider(provider_cfg))


def build_samples(
    planned: Sequence[tuple[SentenceWindow, PrefixSplit]],
    tasks: Sequence[Task],
    probs: CorruptionProbs,
    provider,
    workers: int = 1,
    vocab: tuple[str, ...] | None = None,
) -> list[TrainingSample]:
    """Build one sample per planned window, in input order.

    The toy provider fans out over processes; a bridge provider owns a single
    connection and runs serially.
    """
    if len(planned) != len(tasks):
        raise ValueError("one task per planned window required")
    if vocab is None:
        vocab = provider.replacement_vocabulary()
    if vocab is None:
        # Providers without an enumerable vocabulary (the bridge) fall back to
        # tokens observed in the corpus.
        vocab = corpus_vocabulary(
            [s for window, _ in planned for s in window.sentences]
        )
    if workers > 1 and provider.kind == "toy":
        args = [
            (window, split, task, probs, vocab, provider.cfg)
            for (window, split), task in zip(planned, tasks)
        ]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_build_toy_sample, args, chunksize=64))
    return [
        build_one_sample(window, split, task, probs, vocab, provider)
        for (window, split), task in zip(planned, tasks)
    ]


def tally_corruption(samples: Sequence[TrainingSample], counters: BuildCounters) -> None:
    for sample in samples:
        if sample.provenance.corruption:
            for entry in sample.provenance.corruption:
                counters.corruption_actions[entry.action] += 1
