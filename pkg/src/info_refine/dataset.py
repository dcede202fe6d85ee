"""Task assignment, batch mixing schedule, and dataset serialization.

The mixing schedule realizes the 20/40/40 split as the fixed batch cycle
[correct_complete, contextual_stimulation, correct_complete,
contextual_stimulation, select_copy], so any run of 5m batches hits the
target frequencies exactly. Emission is fully deterministic: identical inputs
produce byte-identical files, gzip included.
"""

from __future__ import annotations

import gzip
import hashlib
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from random import Random
from typing import Mapping, Sequence

from . import SCHEMA_VERSION, __version__
from .scenarios import CorruptionEntry, CorruptionProbs, Provenance, Task, TrainingSample
from .seeding import derive_seed

TASK_CYCLE: tuple[Task, ...] = (
    Task.CORRECT_COMPLETE,
    Task.CONTEXTUAL_STIMULATION,
    Task.CORRECT_COMPLETE,
    Task.CONTEXTUAL_STIMULATION,
    Task.SELECT_COPY,
)

DEFAULT_RATIOS: dict[Task, float] = {
    Task.SELECT_COPY: 0.2,
    Task.CORRECT_COMPLETE: 0.4,
    Task.CONTEXTUAL_STIMULATION: 0.4,
}

DEFAULT_SEPARATOR = "\n[SEP]\n"

# Canonical task order for rounding tie-breaks and report keys.
TASK_ORDER: tuple[Task, ...] = (
    Task.SELECT_COPY,
    Task.CORRECT_COMPLETE,
    Task.CONTEXTUAL_STIMULATION,
)


class SchemaError(ValueError):
    """A serialized record does not match the dataset schema."""


@dataclass(frozen=True)
class MixSchedule:
    cycle: tuple[Task, ...] = TASK_CYCLE
    batch_size: int = 32

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.cycle:
            raise ValueError("cycle must be non-empty")


@dataclass(frozen=True)
class BuildInfo:
    """Run parameters recorded in the manifest."""

    master_seed: int = 0
    k: int = 15
    provider_fingerprint: str = ""
    corruption_probs: CorruptionProbs = field(default_factory=CorruptionProbs)
    separator: str = DEFAULT_SEPARATOR
    tool_version: str = __version__


@dataclass(frozen=True)
class DatasetManifest:
    master_seed: int
    k: int
    counts: dict[str, int]
    provider_fingerprint: str
    corruption_probs: dict[str, float]
    separator: str
    tool_version: str
    schema_version: int
    batch_size: int
    data_file: str
    data_sha256: str

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def largest_remainder_counts(n: int, ratios: Mapping[Task, float]) -> dict[Task, int]:
    """Integer counts per task summing to n, by largest-remainder rounding."""
    if n < 0:
        raise ValueError("n must be >= 0")
    total = sum(ratios.values())
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {total}")
    tasks = [t for t in TASK_ORDER if t in ratios]
    floors = {t: int(ratios[t] * n) for t in tasks}
    leftover = n - sum(floors.values())
    by_remainder = sorted(
        tasks, key=lambda t: (-(ratios[t] * n - floors[t]), TASK_ORDER.index(t))
    )
    for t in by_remainder[:leftover]:
        floors[t] += 1
    return floors


def assign_tasks(
    windows: Sequence, ratios: Mapping[Task, float] | None = None, seed: int = 0
) -> list[Task]:
    """Deterministically assign one task per window at the exact target counts.

    Returns a task list aligned with the input order.
    """
    ratios = dict(DEFAULT_RATIOS if ratios is None else ratios)
    counts = largest_remainder_counts(len(windows), ratios)
    order = list(range(len(windows)))
    Random(derive_seed(seed, "assign")).shuffle(order)
    tasks: list[Task | None] = [None] * len(windows)
    cursor = 0
    for task in TASK_ORDER:
        for idx in order[cursor : cursor + counts.get(task, 0)]:
            tasks[idx] = task
        cursor += counts.get(task, 0)
    assert all(t is not None for t in tasks)
    return tasks  # type: ignore[return-value]


def batch_schedule(n_batches: int, cycle: tuple[Task, ...] = TASK_CYCLE) -> list[Task]:
    """Repeat the mixing cycle out to n_batches entries."""
    if n_batches < 1:
        raise ValueError("n_batches must be >= 1")
    return [cycle[i % len(cycle)] for i in range(n_batches)]


def sample_to_record(sample: TrainingSample, separator: str = DEFAULT_SEPARATOR) -> dict:
    if not sample.prefix or not sample.target:
        raise SchemaError(f"sample {sample.sample_id!r} has an empty prefix or target")
    if not sample.context_sentences and sample.task is not Task.CONTEXTUAL_STIMULATION:
        raise SchemaError(f"sample {sample.sample_id!r} has no context")
    corruption = None
    if sample.provenance.corruption is not None:
        corruption = [
            [e.sentence_index, e.token_index, e.action, e.new_token]
            for e in sample.provenance.corruption
        ]
    context_text = " ".join(sample.context_sentences)
    return {
        "id": sample.sample_id,
        "task": sample.task.value,
        "context": list(sample.context_sentences),
        "prefix": sample.prefix,
        "target": sample.target,
        "input_text": context_text + separator + sample.prefix,
        "meta": {
            "doc_id": sample.provenance.doc_id,
            "offset": sample.provenance.offset,
            "l": sample.provenance.pivot_index,
            "f": sample.provenance.fraction,
            "seed": sample.provenance.window_seed,
            "corruption": corruption,
        },
    }


def record_to_sample(record: dict) -> TrainingSample:
    try:
        task = Task(record["task"])
        meta = record["meta"]
        corruption = None
        if meta.get("corruption") is not None:
            corruption = tuple(
                CorruptionEntry(int(si), int(ti), str(action), new)
                for si, ti, action, new in meta["corruption"]
            )
        return TrainingSample(
            sample_id=str(record["id"]),
            task=task,
            context_sentences=tuple(str(s) for s in record["context"]),
            prefix=str(record["prefix"]),
            target=str(record["target"]),
            provenance=Provenance(
                doc_id=str(meta["doc_id"]),
                offset=int(meta["offset"]),
                pivot_index=int(meta["l"]),
                fraction=float(meta["f"]),
                window_seed=int(meta["seed"]),
                corruption=corruption,
            ),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed record: {exc}") from exc


def _schedule_order(samples: Sequence[TrainingSample], schedule: MixSchedule) -> list[TrainingSample]:
    queues: dict[Task, list[TrainingSample]] = {t: [] for t in TASK_ORDER}
    for sample in samples:
        queues[sample.task].append(sample)
    ordered: list[TrainingSample] = []
    cursor = {t: 0 for t in TASK_ORDER}
    slot = 0
    idle = 0
    while len(ordered) < len(samples):
        task = schedule.cycle[slot % len(schedule.cycle)]
        slot += 1
        start = cursor[task]
        if start < len(queues[task]):
            batch = queues[task][start : start + schedule.batch_size]
            cursor[task] += len(batch)
            ordered.extend(batch)
            idle = 0
        else:
            idle += 1
            if idle >= len(schedule.cycle):
                missing = [t.value for t in TASK_ORDER if cursor[t] < len(queues[t])]
                raise ValueError(f"schedule cycle never visits task(s): {missing}")
    return ordered


def _dumps(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def _write_bytes(path: Path, payload: bytes) -> bytes:
    if path.suffix == ".gz":
        buf = io.BytesIO()
        # mtime=0 keeps the gzip header constant across runs.
        with gzip.GzipFile(filename="", mode="wb", fileobj=buf, mtime=0) as gz:
            gz.write(payload)
        payload = buf.getvalue()
    path.write_bytes(payload)
    return payload


def _read_bytes(path: Path) -> bytes:
    data = path.read_bytes()
    if path.suffix == ".gz":
        data = gzip.decompress(data)
    return data


def emit_dataset(
    samples: Sequence[TrainingSample],
    schedule: MixSchedule,
    path: str | Path,
    info: BuildInfo | None = None,
) -> DatasetManifest:
    """Write samples in schedule order as JSON Lines, plus a manifest.

    `path` is the data file (.jsonl or .jsonl.gz); the manifest lands next to
    it as <stem>.manifest.json. Re-running with identical inputs writes
    byte-identical files.
    """
    info = info or BuildInfo()
    path = Path(path)
    ordered = _schedule_order(samples, schedule)
    lines = [_dumps(sample_to_record(s, info.separator)) for s in ordered]
    payload = ("\n".join(lines) + "\n").encode("utf-8") if lines else b""
    path.parent.mkdir(parents=True, exist_ok=True)
    written = _write_bytes(path, payload)

    counts = {t.value: 0 for t in TASK_ORDER}
    for sample in ordered:
        counts[sample.task.value] += 1
    manifest = DatasetManifest(
        master_seed=info.master_seed,
        k=info.k,
        counts=counts,
        provider_fingerprint=info.provider_fingerprint,
        corruption_probs={
            "select": info.corruption_probs.select,
            "mask": info.corruption_probs.mask,
            "replace": info.corruption_probs.replace,
            "keep": info.corruption_probs.keep,
        },
        separator=info.separator,
        tool_version=info.tool_version,
        schema_version=SCHEMA_VERSION,
        batch_size=schedule.batch_size,
        data_file=path.name,
        data_sha256=hashlib.sha256(written).hexdigest(),
    )
    manifest_path = manifest_path_for(path)
    manifest_path.write_text(_dumps(manifest.__dict__) + "\n", encoding="utf-8")
    return manifest


def manifest_path_for(data_path: str | Path) -> Path:
    data_path = Path(data_path)
    stem = data_path.name
    for suffix in (".gz", ".jsonl"):
        if stem.endswith(suffix):
            stem = stem[: -len(suffix)]
    return data_path.with_name(stem + ".manifest.json")


def load_manifest(path: str | Path) -> DatasetManifest:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return DatasetManifest(**raw)
    except (OSError, TypeError, ValueError) as exc:
        raise SchemaError(f"cannot load manifest {path}: {exc}") from exc


def load_dataset(path: str | Path) -> list[TrainingSample]:
    """Read a JSONL dataset back into samples, validating each record."""
    text = _read_bytes(Path(path)).decode("utf-8")
    samples = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"line {line_no}: invalid JSON: {exc}") from exc
        samples.append(record_to_sample(record))
    return samples
