"""`refbench run|score|report`.

Exit codes: 0 on completion (model failures are data, not errors), 2 on
configuration or data-alignment errors, 3 on unrecoverable I/O.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

import yaml

from refbench.backends import BackendProfile, make_backend
from refbench.corpus import load_document_gold, load_reference_gold
from refbench.errors import ConfigError, FormatError, RefbenchError
from refbench.fieldscore import ScoringConfig
from refbench.pipeline import (
    Pipeline,
    PipelineConfig,
    RunManifest,
    read_predictions,
    record_outputs,
    write_predictions,
)
from refbench.report import build_report, load_report, render_table, write_report

log = logging.getLogger("refbench")

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3

STRATEGY_FLAGS = {
    "single": "single_call",
    "per-page": "per_page",
    "two-step": "two_step",
    "semantic": "semantic_preselect",
    "grobid": "grobid",
}

CONFIG_KEYS = {"profiles", "thresholds", "strategy", "concurrency", "cache_dir", "embedding", "dataset"}


@dataclasses.dataclass
class Config:
    profiles: dict
    pipeline: PipelineConfig
    scoring: ScoringConfig
    cache_dir: str | None = None
    embedding: str | None = None
    dataset: str = ""


def load_config(path) -> Config:
    """Read the YAML (or JSON) run configuration.

    Documented keys: profiles, thresholds, strategy, concurrency, cache_dir,
    embedding, dataset. API keys are never read from this file.
    """
    data = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"config {path} is not valid YAML/JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping")
    unknown = set(data) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    profiles = {}
    for name, spec in (data.get("profiles") or {}).items():
        if not isinstance(spec, dict):
            raise ConfigError(f"profile {name} must be a mapping")
        profiles[name] = BackendProfile.from_dict(str(name), spec)
    strategy = dict(data.get("strategy") or {})
    if "concurrency" in data:
        strategy["concurrency"] = data["concurrency"]
    try:
        pipeline = PipelineConfig(**strategy)
        scoring = ScoringConfig(**(data.get("thresholds") or {}))
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    cache_dir = os.environ.get("REFBENCH_CACHE_DIR") or data.get("cache_dir")
    return Config(profiles, pipeline, scoring, cache_dir, data.get("embedding"), data.get("dataset") or "")


def _profile(cfg: Config, name: str) -> BackendProfile:
    if name not in cfg.profiles:
        known = ", ".join(sorted(cfg.profiles)) or "none"
        raise ConfigError(f"unknown backend profile {name!r} (configured: {known})")
    return cfg.profiles[name]


def _serves(profile: BackendProfile, cfg: Config) -> str:
    if profile.kind != "replay":
        return profile.kind
    if profile.serves:
        return profile.serves
    source = cfg.profiles.get(profile.source or "")
    return source.kind if source else "chat_llm"


def build_pipeline(cfg: Config, strategy: str, backend_name: str, embedder_name: str | None = None) -> Pipeline:
    profile = _profile(cfg, backend_name)
    kind = _serves(profile, cfg)
    backend = make_backend(profile, cfg.profiles, cfg.cache_dir)
    embedder = None
    if strategy == "semantic_preselect":
        name = embedder_name or cfg.embedding
        if not name:
            raise ConfigError("semantic pre-selection needs an embedding profile (--embedder or 'embedding:')")
        embedder = make_backend(_profile(cfg, name), cfg.profiles, cfg.cache_dir)
    if strategy == "grobid":
        if kind != "grobid":
            raise ConfigError(f"profile {backend_name!r} is not a GROBID profile")
        return Pipeline(None, cfg.pipeline, grobid=backend, backend_name=backend_name)
    if kind != "chat_llm":
        raise ConfigError(f"profile {backend_name!r} is not a chat model profile")
    return Pipeline(backend, cfg.pipeline, embedder=embedder, backend_name=backend_name)


def _load_items(task: str, path, strict: bool):
    if task == "parse":
        return list(load_reference_gold(path, strict=strict))
    return list(load_document_gold(path, strict=strict))


def cmd_run(args) -> int:
    strategy = STRATEGY_FLAGS[args.strategy]
    try:
        cfg = load_config(args.config)
        pipeline = build_pipeline(cfg, strategy, args.backend, args.embedder)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    try:
        items = _load_items(args.task, args.input, args.strict)
    except (OSError, FormatError) as exc:
        log.error("cannot read input: %s", exc)
        return EXIT_IO

    out = Path(args.out)
    profile = cfg.profiles[args.backend]
    manifest = RunManifest(args.task, strategy, args.backend, gen=dataclasses.asdict(profile.gen))
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        log.error("cannot create %s: %s", out, exc)
        return EXIT_IO
    try:
        outputs, manifest = pipeline.run(args.task, strategy, items, manifest)
    except KeyboardInterrupt:
        order = {getattr(item, "doc_id", None) or item.ref_id: k for k, item in enumerate(items)}
        done = sorted(pipeline.completed, key=lambda o: order.get(o.item_id, 0))
        manifest.partial = True
        record_outputs(manifest, done)
        write_predictions(out / "predictions.jsonl", done, args.task)
        manifest.write(out / "manifest.json")
        log.error("interrupted; %d of %d items written, manifest marked partial", len(done), len(items))
        return 130
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except RefbenchError as exc:
        # auth failures, replay cache misses and the like: operator errors
        log.error("run aborted: %s: %s", type(exc).__name__, exc)
        return EXIT_CONFIG
    try:
        write_predictions(out / "predictions.jsonl", outputs, args.task)
        digest = manifest.write(out / "manifest.json")
    except OSError as exc:
        log.error("cannot write outputs: %s", exc)
        return EXIT_IO
    n_fail = len(manifest.failures)
    log.info("%d items, %d failures, manifest %s", len(outputs), n_fail, digest[:12])
    return EXIT_OK


def cmd_score(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    pred_path = Path(args.pred)
    manifest_path = pred_path.parent / "manifest.json"
    manifest = RunManifest.read(manifest_path) if manifest_path.exists() else None
    task = args.task or (manifest.task if manifest else None)
    if task is None:
        log.error("--task is required when no manifest.json sits next to the predictions")
        return EXIT_CONFIG
    if manifest and manifest.task != task:
        log.error("predictions were produced for task %r, not %r", manifest.task, task)
        return EXIT_CONFIG
    try:
        gold = _load_items(task, args.gold, args.strict)
        outputs = read_predictions(pred_path, task)
    except (OSError, ValueError, KeyError) as exc:
        log.error("cannot read gold or predictions: %s", exc)
        return EXIT_IO
    except FormatError as exc:
        log.error("%s", exc)
        return EXIT_IO
    keys = [k.strip() for k in (args.breakdown or "").split(",") if k.strip()]
    try:
        report = build_report(
            task,
            gold,
            outputs,
            dataset=args.dataset or cfg.dataset or Path(args.gold).stem,
            strategy=manifest.strategy if manifest else "",
            backend=manifest.backend if manifest else "",
            manifest_hash=manifest.content_hash() if manifest else None,
            runtime_s=manifest.wall_seconds if manifest else None,
            breakdown_keys=keys,
            config=cfg.scoring,
        )
    except FormatError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    out = Path(args.out)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        write_report(report, out, out.with_suffix(".csv"))
    except OSError as exc:
        log.error("cannot write report: %s", exc)
        return EXIT_IO
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        reports = [load_report(p) for p in args.reports]
    except OSError as exc:
        log.error("cannot read report: %s", exc)
        return EXIT_IO
    except (FormatError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    try:
        text = render_table(reports, args.format)
    except FormatError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    if args.out:
        try:
            Path(args.out).write_text(text, encoding="utf-8")
        except OSError as exc:
            log.error("cannot write %s: %s", args.out, exc)
            return EXIT_IO
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="refbench", description="Benchmark reference extraction and parsing.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a task/strategy/backend over an input corpus")
    run.add_argument("--task", required=True, choices=("extract", "parse", "e2e"))
    run.add_argument("--strategy", default="single", choices=tuple(STRATEGY_FLAGS))
    run.add_argument("--backend", required=True, help="profile name from the config file")
    run.add_argument("--embedder", help="embedding profile for --strategy semantic")
    run.add_argument("--config", help="YAML or JSON config with profiles and parameters")
    run.add_argument("--input", required=True, help="document JSONL (extract, e2e) or reference JSONL (parse)")
    run.add_argument("--out", required=True, help="output directory for predictions.jsonl and manifest.json")
    run.add_argument("--strict", action="store_true", help="abort on malformed input lines")
    run.set_defaults(func=cmd_run)

    score = sub.add_parser("score", help="score predictions against gold")
    score.add_argument("--task", choices=("extract", "parse", "e2e"))
    score.add_argument("--gold", required=True)
    score.add_argument("--pred", required=True)
    score.add_argument("--out", required=True, help="report JSON path; a CSV is written alongside")
    score.add_argument("--breakdown", help="comma-separated label keys, e.g. citation_class,language")
    score.add_argument("--config")
    score.add_argument("--dataset")
    score.add_argument("--strict", action="store_true")
    score.set_defaults(func=cmd_score)

    report = sub.add_parser("report", help="combine reports into one table")
    report.add_argument("reports", nargs="+")
    report.add_argument("--format", default="md", choices=("csv", "md", "json"))
    report.add_argument("--out")
    report.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="refbench: %(levelname)s: %(message)s",
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
