"""Command-line interface.

Subcommands: ingest, build, eval, sweep, report. stdout carries only
machine-readable JSON; diagnostics go to stderr. Exit codes: 1 config error,
2 I/O error, 3 provider failure, 4 query-id mismatch, 5 insufficient passages
for most queries.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import SCHEMA_VERSION, __version__
from .dataset import (
    DEFAULT_RATIOS,
    DEFAULT_SEPARATOR,
    BuildInfo,
    MixSchedule,
    SchemaError,
    assign_tasks,
    emit_dataset,
    load_manifest,
    manifest_path_for,
)
from .metrics import EvalExample, cover_em, evaluate_examples
from .pipeline import BuildCounters, build_samples, plan_windows, read_corpus, tally_corruption
from .providers import ProviderError, make_provider
from .robustness import (
    HAS_ANS,
    NO_ANS,
    InsufficientPassages,
    PassageCondition,
    build_scenarios,
    build_sweep,
    load_pool,
    max_delta,
)
from .scenarios import CorruptionProbs, Task

BRIDGE_ENV_VAR = "INFO_REFINE_BRIDGE"

EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_PROVIDER = 3
EXIT_ID_MISMATCH = 4
EXIT_INSUFFICIENT = 5


class ConfigError(ValueError):
    pass


class IdMismatch(RuntimeError):
    pass


class InsufficientQueries(RuntimeError):
    pass


@dataclass
class RunConfig:
    """Validated build parameters; everything that lands in the manifest."""

    corpus: str
    out: str
    master_seed: int = 0
    k: int = 15
    windows_per_doc: int = 1
    ratios: dict[Task, float] = field(default_factory=lambda: dict(DEFAULT_RATIOS))
    corruption: CorruptionProbs = field(default_factory=CorruptionProbs)
    provider: str = "toy"
    bridge_address: str | None = None
    separator: str = DEFAULT_SEPARATOR
    batch_size: int = 32
    workers: int = 1
    gzip: bool = False

    def __post_init__(self) -> None:
        if self.k < 2:
            raise ConfigError("k must be >= 2")
        if self.windows_per_doc < 1:
            raise ConfigError("windows_per_doc must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if abs(sum(self.ratios.values()) - 1.0) > 1e-9:
            raise ConfigError("ratios must sum to 1")
        if self.provider not in ("toy", "bridge"):
            raise ConfigError(f"unknown provider {self.provider!r}")
        if self.provider == "bridge" and not self.bridge_address:
            raise ConfigError("bridge provider requires an address")


def _emit(obj: dict) -> None:
    sys.stdout.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")


def _diag(message: str) -> None:
    sys.stderr.write(message.rstrip() + "\n")


def _parse_ratios(text: str) -> dict[Task, float]:
    parts = [float(x) for x in text.split(",")]
    if len(parts) != 3:
        raise ConfigError("ratios must be three comma-separated numbers: SC,CC,CS")
    return {
        Task.SELECT_COPY: parts[0],
        Task.CORRECT_COMPLETE: parts[1],
        Task.CONTEXTUAL_STIMULATION: parts[2],
    }


def _parse_corruption(text: str) -> CorruptionProbs:
    parts = [float(x) for x in text.split(",")]
    if len(parts) != 4:
        raise ConfigError(
            "corruption must be four comma-separated numbers: select,mask,replace,keep"
        )
    try:
        return CorruptionProbs(*parts)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config_file(path: str | Path) -> dict[str, str]:
    """Parse a key=value config file; '#' starts a comment."""
    values: dict[str, str] = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"config line {line_no}: expected key=value")
        key, value = stripped.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip().strip("\"'")
    return values


def run_build(cfg: RunConfig) -> int:
    counters = BuildCounters()
    docs = read_corpus(cfg.corpus)
    planned = plan_windows(docs, cfg.k, cfg.windows_per_doc, cfg.master_seed, counters)
    tasks = assign_tasks(planned, cfg.ratios, cfg.master_seed)
    provider = make_provider(cfg.provider, cfg.bridge_address)
    try:
        samples = build_samples(
            planned, tasks, cfg.corruption, provider, workers=cfg.workers
        )
    finally:
        provider.close()
    tally_corruption(samples, counters)

    out_dir = Path(cfg.out)
    data_path = out_dir / ("dataset.jsonl.gz" if cfg.gzip else "dataset.jsonl")
    info = BuildInfo(
        master_seed=cfg.master_seed,
        k=cfg.k,
        provider_fingerprint=provider.cfg.fingerprint(),
        corruption_probs=cfg.corruption,
        separator=cfg.separator,
    )
    manifest = emit_dataset(samples, MixSchedule(batch_size=cfg.batch_size), data_path, info)
    _emit(
        {
            "data_file": str(data_path),
            "manifest_file": str(manifest_path_for(data_path)),
            "data_sha256": manifest.data_sha256,
            "counts": manifest.counts,
            "documents": counters.documents,
            "docs_too_short": counters.docs_too_short,
            "windows": counters.windows,
            "corruption_actions": counters.corruption_actions,
        }
    )
    return 0


def _read_jsonl(path: str | Path) -> list[dict]:
    rows = []
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            rows.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}, line {line_no}: {exc}") from exc
    return rows


def run_ingest(input_dir: str, out: str) -> int:
    docs = read_corpus(input_dir)
    if not docs:
        raise ConfigError(f"no .txt documents under {input_dir!r}")
    out_path = Path(out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with out_path.open("w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps({"doc_id": doc.doc_id, "text": doc.text}, ensure_ascii=False))
            fh.write("\n")
    _emit({"documents": len(docs), "corpus": str(out_path)})
    return 0


def run_eval(predictions: str, gold: str, pool: str | None = None, out: str | None = None) -> int:
    pred_rows = _read_jsonl(predictions)
    gold_rows = _read_jsonl(gold)
    gold_by_id: dict[str, dict] = {}
    for row in gold_rows:
        try:
            gold_by_id[str(row["query_id"])] = row
        except KeyError as exc:
            raise SchemaError(f"gold record missing query_id: {row}") from exc
    pred_ids = {str(r.get("query_id")) for r in pred_rows}
    if pred_ids != set(gold_by_id):
        missing = sorted(pred_ids.symmetric_difference(gold_by_id))[:5]
        raise IdMismatch(f"prediction/gold query ids differ, e.g. {missing}")

    def example(row: dict) -> EvalExample:
        gold_row = gold_by_id[str(row["query_id"])]
        return EvalExample(
            query_id=str(row["query_id"]),
            prediction=str(row.get("prediction", "")),
            gold_answers=tuple(str(a) for a in gold_row.get("answers", ())),
            reference=gold_row.get("reference"),
        )

    report = evaluate_examples([example(r) for r in pred_rows])
    if pool is not None:
        pools = {p.query_id: p for p in load_pool(pool)}
        groups: dict[str, list] = {}
        for row in pred_rows:
            qid = str(row["query_id"])
            setting = row.get("setting")
            if setting is None:
                info = pools.get(qid)
                setting = HAS_ANS if info is not None and info.positives else NO_ANS
            groups.setdefault(str(setting), []).append(example(row))
        report["scenarios"] = {
            name: evaluate_examples(rows) for name, rows in sorted(groups.items())
        }
    if out:
        Path(out).write_text(json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    _emit(report)
    return 0


def _condition_record(cond: PassageCondition) -> dict:
    record = {
        "query_id": cond.query_id,
        "kind": cond.kind,
        "setting": cond.setting,
        "passages": list(cond.passages),
    }
    if cond.positive_positions:
        record["positive_positions"] = list(cond.positive_positions)
    if cond.replacements:
        record["replacements"] = cond.replacements
    return record


def run_sweep(
    pool_path: str,
    kind: str,
    seed: int = 0,
    out: str | None = None,
    predictions: str | None = None,
    series: str | None = None,
    distractors: str | None = None,
) -> int:
    if series is not None:
        values = [float(x) for x in series.split(",")]
        _emit({"kind": kind, "series": values, "max_delta_pct": max_delta(values)})
        return 0

    pools = load_pool(pool_path)
    if not pools:
        raise ConfigError(f"pool file {pool_path!r} is empty")
    distractor_pool: list[str] = []
    if distractors:
        distractor_pool = [str(x) for x in Path(distractors).read_text(encoding="utf-8").splitlines() if x.strip()]

    conditions: list[PassageCondition] = []
    skipped = 0
    for pool in pools:
        try:
            if kind == "scenario":
                fallback = [
                    a for other in pools if other.query_id != pool.query_id
                    for a in other.gold_answers
                ]
                conditions.extend(
                    build_scenarios(pool, distractor_pool or fallback, seed)
                )
            else:
                conditions.extend(build_sweep(pool, kind, seed))
        except InsufficientPassages as exc:
            _diag(f"skipping query: {exc}")
            skipped += 1
    if skipped * 2 > len(pools):
        raise InsufficientQueries(
            f"{skipped}/{len(pools)} queries lack passages for kind={kind!r}"
        )

    if out:
        with Path(out).open("w", encoding="utf-8") as fh:
            for cond in conditions:
                fh.write(json.dumps(_condition_record(cond), ensure_ascii=False, sort_keys=True))
                fh.write("\n")

    summary: dict = {
        "kind": kind,
        "queries": len(pools) - skipped,
        "skipped": skipped,
        "conditions": len(conditions),
    }
    if predictions is not None:
        answer_by_id = {p.query_id: p.gold_answers for p in pools}
        by_setting: dict[object, list[int]] = {}
        for row in _read_jsonl(predictions):
            qid = str(row["query_id"])
            if qid not in answer_by_id:
                raise IdMismatch(f"prediction for unknown query_id {qid!r}")
            score = cover_em(str(row.get("prediction", "")), answer_by_id[qid])
            by_setting.setdefault(row.get("setting"), []).append(score)
        settings = _setting_order(kind, by_setting)
        series_values = [
            round(100.0 * sum(by_setting[s]) / len(by_setting[s]), 2) for s in settings
        ]
        summary["settings"] = settings
        summary["series"] = series_values
        if len(series_values) >= 2:
            summary["max_delta_pct"] = max_delta(series_values)
    _emit(summary)
    return 0


def _setting_order(kind: str, by_setting: dict) -> list:
    """Canonical column order: ratio descends from 100%, scenarios match the
    has-ans / replace / no-ans layout, everything else ascends."""
    if kind == "ratio":
        return sorted(by_setting, key=lambda s: -(s if isinstance(s, (int, float)) else 0))
    if kind == "scenario":
        rank = {HAS_ANS: 0, "replace": 1, NO_ANS: 2}
        return sorted(by_setting, key=lambda s: rank.get(s, 99))
    return sorted(by_setting, key=lambda s: (s is None, s))


def run_report(data: str) -> int:
    data_path = Path(data)
    if data_path.is_dir():
        candidates = sorted(data_path.glob("dataset.jsonl*"))
        if not candidates:
            raise ConfigError(f"no dataset file under {data!r}")
        data_path = candidates[0]
    manifest = load_manifest(manifest_path_for(data_path))
    digest = hashlib.sha256(data_path.read_bytes()).hexdigest()
    _emit(
        {
            "data_file": str(data_path),
            "counts": manifest.counts,
            "total": manifest.total,
            "sha256_ok": digest == manifest.data_sha256,
            "tool_version": manifest.tool_version,
            "schema_version": manifest.schema_version,
        }
    )
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # noqa: D102 - argparse hook
        raise ConfigError(message)


def _build_parser() -> tuple[_Parser, _Parser]:
    parser = _Parser(prog="info-refine", description=__doc__)
    parser.add_argument("--version", action="store_true", help="print versions and exit")
    sub = parser.add_subparsers(dest="command")

    p_ingest = sub.add_parser("ingest", help="convert a text directory to corpus JSONL")
    p_ingest.add_argument("--input", required=True)
    p_ingest.add_argument("--out", required=True)

    p_build = sub.add_parser("build", help="build the training dataset")
    p_build.add_argument("--config", help="key=value file; flags win")
    p_build.add_argument("--corpus")
    p_build.add_argument("--out")
    p_build.add_argument("--seed", type=int, default=0)
    p_build.add_argument("--k", type=int, default=15)
    p_build.add_argument("--windows-per-doc", type=int, default=1)
    p_build.add_argument("--ratios", default="0.2,0.4,0.4", help="SC,CC,CS")
    p_build.add_argument(
        "--corruption", default="0.3,0.5,0.4,0.1", help="select,mask,replace,keep"
    )
    p_build.add_argument("--provider", choices=["toy", "bridge"], default="toy")
    p_build.add_argument("--bridge", default=None, help="bridge command or URL")
    p_build.add_argument("--separator", default=DEFAULT_SEPARATOR)
    p_build.add_argument("--batch-size", type=int, default=32)
    p_build.add_argument("--workers", type=int, default=1)
    p_build.add_argument("--gzip", action="store_true")

    p_eval = sub.add_parser("eval", help="score predictions against gold")
    p_eval.add_argument("--predictions", required=True)
    p_eval.add_argument("--gold", required=True)
    p_eval.add_argument("--pool", default=None)
    p_eval.add_argument("--out", default=None)

    p_sweep = sub.add_parser("sweep", help="emit perturbation conditions / summaries")
    p_sweep.add_argument("--pool", required=True)
    p_sweep.add_argument(
        "--kind", required=True, choices=["ratio", "position", "count", "scenario"]
    )
    p_sweep.add_argument("--seed", type=int, default=0)
    p_sweep.add_argument("--out", default=None)
    p_sweep.add_argument("--predictions", default=None)
    p_sweep.add_argument("--series", default=None, help="precomputed metric series")
    p_sweep.add_argument("--distractors", default=None)

    p_report = sub.add_parser("report", help="verify and summarize a built dataset")
    p_report.add_argument("--data", required=True)
    return parser, p_build


def _apply_config_file(argv: list[str], build_parser: _Parser) -> None:
    """Load --config defaults into the build subparser; explicit flags win."""
    if "--config" not in argv:
        return
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        raise ConfigError("--config needs a path")
    values: dict = load_config_file(argv[idx + 1])
    known = {"corpus", "out", "seed", "k", "windows_per_doc", "ratios", "corruption",
             "provider", "bridge", "separator", "batch_size", "workers", "gzip"}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "gzip" in values:
        values["gzip"] = values["gzip"].lower() in ("1", "true", "yes")
    for key in ("seed", "k", "windows_per_doc", "batch_size", "workers"):
        if key in values:
            values[key] = int(values[key])
    build_parser.set_defaults(**values)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, build_parser = _build_parser()
    try:
        _apply_config_file(argv, build_parser)
        args = parser.parse_args(argv)
        if args.version:
            _emit({"tool_version": __version__, "schema_version": SCHEMA_VERSION})
            return 0
        if args.command is None:
            raise ConfigError("a subcommand is required (see --help)")
        if args.command == "ingest":
            return run_ingest(args.input, args.out)
        if args.command == "build":
            if not args.corpus or not args.out:
                raise ConfigError("build requires --corpus and --out")
            bridge = args.bridge or os.environ.get(BRIDGE_ENV_VAR)
            cfg = RunConfig(
                corpus=args.corpus,
                out=args.out,
                master_seed=args.seed,
                k=args.k,
                windows_per_doc=args.windows_per_doc,
                ratios=_parse_ratios(args.ratios),
                corruption=_parse_corruption(args.corruption),
                provider=args.provider,
                bridge_address=bridge,
                separator=args.separator,
                batch_size=args.batch_size,
                workers=args.workers,
                gzip=args.gzip,
            )
            return run_build(cfg)
        if args.command == "eval":
            return run_eval(args.predictions, args.gold, args.pool, args.out)
        if args.command == "sweep":
            return run_sweep(
                args.pool,
                args.kind,
                seed=args.seed,
                out=args.out,
                predictions=args.predictions,
                series=args.series,
                distractors=args.distractors,
            )
        if args.command == "report":
            return run_report(args.data)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        _diag(f"config error: {exc}")
        return EXIT_CONFIG
    except (ValueError, SchemaError) as exc:
        _diag(f"invalid input: {exc}")
        return EXIT_CONFIG
    except ProviderError as exc:
        _diag(f"provider failure: {exc}")
        return EXIT_PROVIDER
    except IdMismatch as exc:
        _diag(f"id mismatch: {exc}")
        return EXIT_ID_MISMATCH
    except InsufficientQueries as exc:
        _diag(f"insufficient passages: {exc}")
        return EXIT_INSUFFICIENT
    except OSError as exc:
        _diag(f"io error: {exc}")
        return EXIT_IO


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
