"""Scoring of whole runs against gold and MetricsReport assembly/rendering."""

from __future__ import annotations

import csv
import io
import json
import logging
from pathlib import Path

from refbench.corpus import DocumentGold, ReferenceGold, is_abbreviated_backref
from refbench.errors import FormatError
from refbench.fieldscore import (
    DEFAULT_CONFIG,
    DocumentResult,
    ScoringConfig,
    breakdown,
    category_histogram,
    classify_error,
    pool_results,
    score_endtoend,
    score_record_pair,
    unmatched_gold_score,
)
from refbench.matching import ExtractionScore, pool_extraction, score_extraction
from refbench.pipeline import ItemOutput

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
TABLE_COLUMNS = ("Dataset", "Task", "Strategy", "Backend", "P", "R", "MicroF1", "MacroF1", "Fail", "Runtime_s", "AvgSim")


def _align(gold_ids: list[str], outputs: list[ItemOutput], kind: str) -> dict[str, ItemOutput]:
    by_id = {}
    known = set(gold_ids)
    for o in outputs:
        if o.item_id not in known:
            raise FormatError(f"prediction for unknown {kind} {o.item_id!r}; gold and predictions do not match")
        by_id[o.item_id] = o
    missing = [i for i in gold_ids if i not in by_id]
    if missing:
        log.warning("%d gold %ss have no prediction line; scored as empty", len(missing), kind)
    return by_id


def score_extract_run(docs: list[DocumentGold], outputs: list[ItemOutput], config: ScoringConfig = DEFAULT_CONFIG):
    """Per-document extraction scores, in gold order."""
    by_id = _align([d.doc_id for d in docs], outputs, "doc_id")
    scores = []
    for d in docs:
        o = by_id.get(d.doc_id)
        preds = list(o.predictions) if o else []
        scores.append(score_extraction(d.gold_strings, preds, config.binary_threshold))
    return scores


def score_parse_run(refs: list[ReferenceGold], outputs: list[ItemOutput],
                    config: ScoringConfig = DEFAULT_CONFIG) -> list[DocumentResult]:
    by_id = _align([r.ref_id for r in refs], outputs, "ref_id")
    results = []
    for r in refs:
        o = by_id.get(r.ref_id)
        labels = {"language": r.language, **r.labels}
        res = DocumentResult(doc_id=r.ref_id, labels=labels)
        if o is not None and o.predictions:
            s = score_record_pair(r.record, o.predictions[0], 0, 0, config)
            res.categories.append(classify_error(s, config=config))
        else:
            s = unmatched_gold_score(r.record, 0)
            structural = o is not None and bool(o.failures)
            res.n_failures = int(structural)
            res.categories.append(classify_error(s, structural=structural, config=config))
        res.scores.append(s)
        res.record_labels.append({"abbreviated_backref": is_abbreviated_backref(r.raw)})
        results.append(res)
    return results


def score_e2e_run(docs: list[DocumentGold], outputs: list[ItemOutput],
                  config: ScoringConfig = DEFAULT_CONFIG) -> list[DocumentResult]:
    by_id = _align([d.doc_id for d in docs], outputs, "doc_id")
    results = []
    for d in docs:
        o = by_id.get(d.doc_id)
        preds = list(o.predictions) if o else []
        failed = o is not None and o.failed
        _, categories, scores, unmatched = score_endtoend(d, preds, failed=failed, config=config)
        results.append(
            DocumentResult(
                doc_id=d.doc_id,
                labels=d.labels,
                scores=scores,
                unmatched_pred=unmatched,
                categories=categories,
                record_labels=[{"abbreviated_backref": f} for f in d.backref_flags],
                n_failures=len(o.failures) if o else 0,
            )
        )
    return results


def _extraction_breakdown(docs, scores: list[ExtractionScore], key):
    groups = {}
    for d, s in zip(docs, scores):
        label = d.labels.get(key)
        groups.setdefault("unknown" if label is None else str(label), []).append(s)
    return {label: {"extraction": pool_extraction(groups[label]).to_dict(), "n_documents": len(groups[label])}
            for label in sorted(groups)}


def build_report(task: str, gold: list, outputs: list[ItemOutput], *, dataset: str = "", strategy: str = "",
                 backend: str = "", manifest_hash: str | None = None, runtime_s: float | None = None,
                 breakdown_keys=(), config: ScoringConfig = DEFAULT_CONFIG) -> dict:
    """Score a run and assemble a one-row MetricsReport."""
    n_failures = sum(len(o.failures) for o in outputs)
    row = {
        "dataset": dataset,
        "task": task,
        "strategy": strategy,
        "backend": backend,
        "manifest_hash": manifest_hash,
        "n_failures": n_failures,
        "runtime_s": runtime_s,
        "metrics": None,
        "extraction": None,
        "error_histogram": None,
        "breakdowns": {},
    }
    if task == "extract":
        scores = score_extract_run(gold, outputs, config)
        pooled = pool_extraction(scores)
        row["extraction"] = pooled.to_dict()
        row["metrics"] = {
            "precision": pooled.precision,
            "recall": pooled.recall,
            "micro_f1": pooled.f1,
            "macro_f1": None,
            "per_field": {},
            "n_records": pooled.n_gold,
            "n_failures": n_failures,
        }
        for key in breakdown_keys:
            row["breakdowns"][key] = _extraction_breakdown(gold, scores, key)
    else:
        if task == "parse":
            results = score_parse_run(gold, outputs, config)
        else:
            results = score_e2e_run(gold, outputs, config)
        metrics, hist = pool_results(results)
        metrics.n_failures = n_failures
        row["metrics"] = metrics.to_dict()
        row["error_histogram"] = hist
        total = sum(hist.values())
        row["correct_share"] = hist["Correct"] / total if total else None
        for key in breakdown_keys:
            row["breakdowns"][key] = breakdown(results, key)
    return {"format_version": FORMAT_VERSION, "rows": [row]}


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_report(report: dict, json_path, csv_path=None) -> None:
    json_path = Path(json_path)
    tmp = json_path.with_suffix(json_path.suffix + ".tmp")
    tmp.write_text(dumps_report(report), encoding="utf-8")
    tmp.replace(json_path)
    if csv_path is not None:
        Path(csv_path).write_text(render_table([report], "csv"), encoding="utf-8")


def load_report(path) -> dict:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict) or "format_version" not in data or "rows" not in data:
        raise FormatError("not a MetricsReport", path=str(path))
    return data


def _fmt(value, digits=4):
    if value is None:
        return "--"
    return f"{value:.{digits}f}"


def table_rows(reports: list[dict]) -> list[list[str]]:
    versions = {r["format_version"] for r in reports}
    if len(versions) > 1:
        raise FormatError(f"reports mix format versions {sorted(versions)}")
    rows = []
    for report in reports:
        for row in report["rows"]:
            m = row["metrics"] or {}
            ext = row.get("extraction")
            rows.append([
                row.get("dataset", ""),
                row["task"],
                row.get("strategy", ""),
                row.get("backend", ""),
                _fmt(m.get("precision")),
                _fmt(m.get("recall")),
                _fmt(m.get("micro_f1")),
                _fmt(m.get("macro_f1")),
                str(row.get("n_failures", 0)),
                _fmt(row.get("runtime_s"), 2),
                _fmt(ext.get("avg_sim")) if ext else "",
            ])
    return rows


def render_table(reports: list[dict], fmt: str = "md") -> str:
    """Combined table, one row per (dataset, task, strategy, backend)."""
    if fmt == "json":
        rows = [dict(zip(TABLE_COLUMNS, r)) for r in table_rows(reports)]
        return json.dumps(rows, indent=2, ensure_ascii=False) + "\n"
    rows = table_rows(reports)
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TABLE_COLUMNS)
        writer.writerows(rows)
        return buf.getvalue()
    if fmt == "md":
        lines = ["| " + " | ".join(TABLE_COLUMNS) + " |", "|" + "|".join("---" for _ in TABLE_COLUMNS) + "|"]
        lines += ["| " + " | ".join(r) + " |" for r in rows]
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown table format {fmt!r}")

