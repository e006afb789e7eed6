"""Task execution: prompt assembly, validated backend calls with a single
semantic retry, segmentation strategies, and failure/runtime accounting."""

from __future__ import annotations

import datetime as dt
import hashlib
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from refbench.corpus import DEFAULT_PAGE_DELIMITER, DocumentGold, ReferenceGold, import_tei, page_split
from refbench.errors import ConfigError, FormatError, GrobidError, PayloadTooLarge, PdfRejected, TransportError
from refbench.prompts import TEMPLATE_HASH, TEMPLATE_VERSION, build_prompt, estimate_tokens, format_group
from refbench.schema import (
    ReferenceRecord,
    StructuralError,
    StructuralFailure,
    validate_record,
    validate_record_list,
    validate_string_list,
)
from refbench.textnorm import string_similarity

log = logging.getLogger(__name__)

TASKS = ("extract", "parse", "e2e")
STRATEGIES = ("single_call", "per_page", "two_step", "semantic_preselect", "grobid")
VALID_COMBINATIONS = {
    "extract": ("single_call", "per_page", "semantic_preselect"),
    "parse": ("single_call", "grobid"),
    "e2e": ("single_call", "two_step", "semantic_preselect", "grobid"),
}

_VALIDATORS = {
    "record": validate_record,
    "record_list": validate_record_list,
    "string_list": validate_string_list,
}


@dataclass
class PipelineConfig:
    group_size: int = 1
    dedupe_threshold: float = 0.9
    page_delimiter: str = DEFAULT_PAGE_DELIMITER
    window_chars: int = 2000
    window_overlap: int = 200
    selection_mass: float = 0.95
    selection_cap: float = 0.25
    retrieval_instruction: str = "identify bibliographic reference sections"
    retrieval_query: str = "bibliography, list of references, footnotes citing books and articles"
    two_step_extract: str = "per_page"
    grobid_batch: int = 50
    chars_per_token: float = 4.0
    output_reserve: int = 4096
    context_tokens: int | None = None
    concurrency: int = 1

    def __post_init__(self):
        if self.group_size < 1:
            raise ConfigError("group_size must be >= 1")
        if not 0 <= self.window_overlap < self.window_chars:
            raise ConfigError("window_overlap must be smaller than window_chars")
        if not 0 < self.selection_cap <= 1:
            raise ConfigError("selection_cap must be in (0, 1]")
        if self.two_step_extract not in ("per_page", "single_call"):
            raise ConfigError("two_step_extract must be per_page or single_call")

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()


@dataclass
class Chunk:
    text: str
    char_offset: int
    page_index: int | None = None
    retrieval_score: float | None = None

    @property
    def end(self) -> int:
        return self.char_offset + len(self.text)


@dataclass
class ItemOutput:
    """Predictions for one document (extract/e2e) or one reference (parse)."""

    item_id: str
    predictions: list = field(default_factory=list)
    failures: list[StructuralFailure] = field(default_factory=list)
    # units that produced no valid output vs. units attempted
    n_units: int = 1
    seconds: float = 0.0
    tokens_selected: int | None = None
    tokens_total: int | None = None

    @property
    def failed(self) -> bool:
        """True when no unit produced valid output."""
        return bool(self.failures) and len(self.failures) >= self.n_units

    def to_line(self, task: str) -> dict:
        failures = [f.to_dict() for f in self.failures]
        if task == "parse":
            pred = self.predictions[0] if self.predictions else None
            return {
                "ref_id": self.item_id,
                "prediction": pred.to_dict() if pred is not None else None,
                "failure": failures[0] if failures else None,
            }
        preds = [p.to_dict() if isinstance(p, ReferenceRecord) else p for p in self.predictions]
        return {"doc_id": self.item_id, "predictions": preds, "failures": failures}

    @classmethod
    def from_line(cls, obj: dict, task: str) -> "ItemOutput":
        if task == "parse":
            pred = obj.get("prediction")
            failure = obj.get("failure")
            return cls(
                item_id=obj["ref_id"],
                predictions=[ReferenceRecord.from_dict(pred)] if pred else [],
                failures=[StructuralFailure.from_dict(failure)] if failure else [],
            )
        preds = obj.get("predictions", [])
        if task == "e2e":
            preds = [ReferenceRecord.from_dict(p) for p in preds]
        failures = [StructuralFailure.from_dict(f) for f in obj.get("failures", [])]
        return cls(
            item_id=obj["doc_id"],
            predictions=preds,
            failures=failures,
            n_units=max(1, obj.get("n_units", 1)),
        )


@dataclass
class RunManifest:
    task: str
    strategy: str
    backend: str
    gen: dict = field(default_factory=dict)
    started: str = ""
    finished: str = ""
    wall_seconds: float = 0.0
    item_seconds: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    tokens: dict = field(default_factory=dict)
    prompt_template_version: str = TEMPLATE_VERSION
    prompt_template_hash: str = TEMPLATE_HASH
    config_hash: str = ""
    config: dict = field(default_factory=dict)
    n_items: int = 0
    partial: bool = False

    TIMING_FIELDS = ("started", "finished", "wall_seconds", "item_seconds")

    def to_dict(self, include_timing: bool = True) -> dict:
        d = asdict(self)
        if not include_timing:
            for k in self.TIMING_FIELDS:
                d.pop(k)
        return d

    def write(self, path) -> str:
        """Write atomically; returns the SHA-256 of the timing-free content."""
        path = Path(path)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False), encoding="utf-8")
        tmp.replace(path)
        return self.content_hash()

    def content_hash(self) -> str:
        blob = json.dumps(self.to_dict(include_timing=False), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    @classmethod
    def read(cls, path) -> "RunManifest":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(**data)


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def merge_page_outputs(per_page: list[list[str]], threshold: float = 0.9) -> list[str]:
    """Concatenate page outputs in page order, collapsing a reference repeated
    across a page boundary: the first string of a page is dropped when it is at
    least `threshold`-similar to the last string kept from the previous page,
    and the longer of the two survives."""
    merged: list[str] = []
    previous: list[str] = []
    for page in per_page:
        items = list(page)
        if previous and items and string_similarity(merged[-1], items[0]) >= threshold:
            first = items.pop(0)
            if len(first) > len(merged[-1]):
                merged[-1] = first
        merged.extend(items)
        previous = page
    return merged


def make_chunks(markdown: str, window: int = 2000, overlap: int = 200,
                delimiter: str = DEFAULT_PAGE_DELIMITER) -> list[Chunk]:
    """Pages as chunks; pages longer than `window` become overlapping windows."""
    chunks = []
    for page in page_split(markdown, delimiter):
        if len(page.text) <= window:
            if page.text.strip():
                chunks.append(Chunk(page.text, page.offset, page.index))
            continue
        step = window - overlap
        start = 0
        while True:
            piece = page.text[start : start + window]
            chunks.append(Chunk(piece, page.offset + start, page.index))
            if start + window >= len(page.text):
                break
            start += step
    return chunks


def select_chunks(scores: list[float], mass: float = 0.95, cap: float = 0.25) -> list[int]:
    """Indices (document order) of the smallest top-ranked set holding `mass`
    of the score weight, at most `cap` of all chunks and at least one.

    Weights are scores above the document minimum, so a constant baseline
    similarity does not count. With no weight at all, the first chunks in
    document order are taken up to the cap.
    """
    n = len(scores)
    if n == 0:
        return []
    limit = max(1, math.floor(cap * n))
    s = np.asarray(scores, dtype=float)
    weights = np.clip(s - s.min(), 0.0, None)
    total = math.fsum(weights)
    if total <= 0.0:
        return list(range(limit))
    order = sorted(range(n), key=lambda i: (-s[i], i))
    picked = []
    acc = 0.0
    for i in order:
        picked.append(i)
        acc += weights[i]
        if acc >= mass * total - 1e-12 or len(picked) >= limit:
            break
    return sorted(picked)


def join_chunks(markdown: str, chunks: list[Chunk]) -> str:
    """Selected chunks in document order, overlapping spans merged."""
    spans = []
    for c in sorted(chunks, key=lambda c: c.char_offset):
        if spans and c.char_offset <= spans[-1][1]:
            spans[-1][1] = max(spans[-1][1], c.end)
        else:
            spans.append([c.char_offset, c.end])
    return "\n\n".join(markdown[a:b] for a, b in spans)


class Pipeline:
    def __init__(self, backend=None, config: PipelineConfig | None = None, embedder=None, grobid=None,
                 backend_name: str | None = None):
        self.backend = backend
        self.config = config or PipelineConfig()
        self.embedder = embedder
        self.grobid = grobid
        self.backend_name = backend_name or getattr(backend, "name", None) or getattr(grobid, "name", "unknown")
        self.completed: list[ItemOutput] = []

    # -- single calls ------------------------------------------------------

    def build_prompt(self, task: str, payload: str) -> str:
        c = self.config
        return build_prompt(task, payload, c.context_tokens, c.output_reserve, c.chars_per_token)

    def call_validated(self, prompt: str, expect: str):
        """Call the backend and validate; on an invalid answer retry once with
        the identical prompt. Raises StructuralError after the second failure."""
        validate = _VALIDATORS[expect]
        failure = None
        for attempt in (1, 2):
            try:
                text = self.backend.complete(prompt)
            except TransportError as exc:
                failure = StructuralFailure("transport_error", "", attempt, str(exc))
                continue
            try:
                return validate(text)
            except StructuralError as exc:
                failure = exc.failure
                failure.attempts = attempt
                log.info("invalid %s output (attempt %d): %s", expect, attempt, failure.kind)
        raise StructuralError(failure)

    def _task_call(self, task, payload, expect, out: ItemOutput, unit=""):
        try:
            prompt = self.build_prompt(task, payload)
        except PayloadTooLarge as exc:
            out.failures.append(StructuralFailure("transport_error", "", 1, f"payload_too_large{unit}: {exc}"))
            return None
        try:
            return self.call_validated(prompt, expect)
        except StructuralError as exc:
            failure = exc.failure
            if unit:
                failure.message = f"{unit}: {failure.message}" if failure.message else unit
            out.failures.append(failure)
            return None

    # -- extraction --------------------------------------------------------

    def run_extract_single(self, doc: DocumentGold) -> ItemOutput:
        out = ItemOutput(doc.doc_id)
        result = self._task_call("extract", doc.markdown, "string_list", out)
        out.predictions = result or []
        return out

    def run_extract_per_page(self, doc: DocumentGold) -> ItemOutput:
        pages = [p for p in page_split(doc.markdown, self.config.page_delimiter) if p.text.strip()]
        out = ItemOutput(doc.doc_id, n_units=max(1, len(pages)))
        per_page = []
        for page in pages:
            result = self._task_call("extract", page.text, "string_list", out, unit=f"page {page.index}")
            per_page.append(result or [])
        out.predictions = merge_page_outputs(per_page, self.config.dedupe_threshold)
        return out

    # -- parsing -----------------------------------------------------------

    def run_parse(self, refs: list[ReferenceGold], group_size: int | None = None) -> list[ItemOutput]:
        """Parse gold strings in groups; a failed or misaligned group fails all its members."""
        size = group_size or self.config.group_size
        if size < 1:
            raise ConfigError("group_size must be >= 1")
        outputs = []
        for start in range(0, len(refs), size):
            group = refs[start : start + size]
            outputs.extend(self._parse_group([r.raw for r in group], [r.ref_id for r in group]))
        return outputs

    def _parse_group(self, strings: list[str], ids: list[str]) -> list[ItemOutput]:
        probe = ItemOutput(ids[0])
        if len(strings) == 1:
            record = self._task_call("parse", strings[0], "record", probe)
            records = [record] if record is not None else None
        else:
            records = self._task_call("parse_group", format_group(strings), "record_list", probe)
            if records is not None and len(records) != len(strings):
                probe.failures.append(
                    StructuralFailure(
                        "schema_violation",
                        json.dumps([r.to_dict() for r in records], ensure_ascii=False),
                        1,
                        f"expected {len(strings)} records, got {len(records)}",
                    )
                )
                records = None
        if records is None:
            failure = probe.failures[-1]
            return [ItemOutput(i, [], [failure]) for i in ids]
        return [ItemOutput(i, [r]) for i, r in zip(ids, records)]

    # -- end to end --------------------------------------------------------

    def run_e2e_single(self, doc: DocumentGold) -> ItemOutput:
        out = ItemOutput(doc.doc_id)
        out.predictions = self._task_call("e2e", doc.markdown, "record_list", out) or []
        return out

    def run_e2e_two_step(self, doc: DocumentGold) -> ItemOutput:
        if self.config.two_step_extract == "per_page":
            extracted = self.run_extract_per_page(doc)
        else:
            extracted = self.run_extract_single(doc)
        strings = extracted.predictions
        refs = [ReferenceGold(f"{doc.doc_id}#{k}", s, ReferenceRecord()) for k, s in enumerate(strings)]
        parsed = self.run_parse(refs) if refs else []
        out = ItemOutput(doc.doc_id, n_units=extracted.n_units + len(parsed))
        out.failures = list(extracted.failures)
        seen = set()
        for p in parsed:
            out.predictions.extend(p.predictions)
            for f in p.failures:
                # a failed group is reported once, not once per member
                if id(f) not in seen:
                    seen.add(id(f))
                    out.failures.append(f)
        if extracted.failed:
            out.n_units = len(out.failures)
        return out

    # -- semantic pre-selection --------------------------------------------

    def run_semantic_preselect(self, doc: DocumentGold, task: str) -> ItemOutput:
        if self.embedder is None:
            raise ConfigError("semantic pre-selection needs an embedding profile")
        c = self.config
        chunks = make_chunks(doc.markdown, c.window_chars, c.window_overlap, c.page_delimiter)
        out = ItemOutput(doc.doc_id)
        out.tokens_total = estimate_tokens(doc.markdown, c.chars_per_token)
        if not chunks:
            out.tokens_selected = 0
            return out
        (query,) = self.embedder.embed([c.retrieval_query], c.retrieval_instruction)
        vectors = self.embedder.embed([ch.text for ch in chunks], "")
        for ch, v in zip(chunks, vectors):
            ch.retrieval_score = float(np.clip(np.dot(query, v), -1.0, 1.0))
        picked = select_chunks([ch.retrieval_score for ch in chunks], c.selection_mass, c.selection_cap)
        selection = join_chunks(doc.markdown, [chunks[i] for i in picked])
        out.tokens_selected = estimate_tokens(selection, c.chars_per_token)
        if task == "extract":
            out.predictions = self._task_call("extract", selection, "string_list", out) or []
        elif task == "e2e":
            out.predictions = self._task_call("e2e", selection, "record_list", out) or []
        else:
            raise ConfigError("semantic pre-selection applies to extract and e2e")
        return out

    # -- GROBID ------------------------------------------------------------

    def run_grobid_parse(self, refs: list[ReferenceGold]) -> list[ItemOutput]:
        if self.grobid is None:
            raise ConfigError("grobid strategy needs a grobid profile")
        outputs = []
        for start in range(0, len(refs), self.config.grobid_batch):
            group = refs[start : start + self.config.grobid_batch]
            try:
                records = [r for _, r in import_tei(self.grobid.parse_citations([g.raw for g in group]))]
                if len(records) != len(group):
                    raise GrobidError(200, f"expected {len(group)} biblStruct, got {len(records)}")
            except (TransportError, GrobidError, FormatError, ValueError) as exc:
                failure = StructuralFailure("transport_error", "", 1, str(exc))
                outputs.extend(ItemOutput(g.ref_id, [], [failure]) for g in group)
                continue
            outputs.extend(ItemOutput(g.ref_id, [r]) for g, r in zip(group, records))
        return outputs

    def run_grobid_e2e(self, doc: DocumentGold) -> ItemOutput:
        if self.grobid is None:
            raise ConfigError("grobid strategy needs a grobid profile")
        out = ItemOutput(doc.doc_id)
        try:
            tei = self.grobid.process_fulltext(Path(doc.pdf_path).read_bytes())
            out.predictions = [r for _, r in import_tei(tei)]
        except (TransportError, GrobidError, PdfRejected, FormatError, OSError, ValueError) as exc:
            out.failures.append(StructuralFailure("transport_error", "", 1, str(exc)))
        return out

    # -- orchestration -----------------------------------------------------

    def run(self, task: str, strategy: str, items: list, manifest: RunManifest | None = None):
        """Run one task/strategy over documents (or reference gold for parse).

        Returns (outputs in input order, manifest).
        """
        if task not in TASKS:
            raise ConfigError(f"unknown task {task!r}")
        if strategy not in VALID_COMBINATIONS[task]:
            raise ConfigError(f"strategy {strategy!r} does not apply to task {task!r}")
        if task == "e2e" and strategy == "grobid":
            missing = [d.doc_id for d in items if not d.pdf_path]
            if missing:
                raise ConfigError(f"grobid end-to-end needs pdf_path; missing for {missing[:5]}")
        manifest = manifest or RunManifest(task, strategy, self.backend_name)
        manifest.config = asdict(self.config)
        manifest.config_hash = self.config.digest()
        manifest.n_items = len(items)
        manifest.started = _now()
        t0 = time.perf_counter()
        # finished items, in completion order; lets callers flush partial runs
        self.completed = []

        if task == "parse":
            outputs = self._run_parse_items(strategy, items)
        else:
            fn = {
                ("extract", "single_call"): self.run_extract_single,
                ("extract", "per_page"): self.run_extract_per_page,
                ("extract", "semantic_preselect"): lambda d: self.run_semantic_preselect(d, "extract"),
                ("e2e", "single_call"): self.run_e2e_single,
                ("e2e", "two_step"): self.run_e2e_two_step,
                ("e2e", "semantic_preselect"): lambda d: self.run_semantic_preselect(d, "e2e"),
                ("e2e", "grobid"): self.run_grobid_e2e,
            }[(task, strategy)]

            def timed(doc):
                start = time.perf_counter()
                result = fn(doc)
                result.seconds = time.perf_counter() - start
                self.completed.append(result)
                return result

            outputs = self._map(timed, items)

        manifest.wall_seconds = time.perf_counter() - t0
        manifest.finished = _now()
        record_outputs(manifest, outputs)
        return outputs, manifest

    def _run_parse_items(self, strategy, refs):
        size = self.config.grobid_batch if strategy == "grobid" else self.config.group_size
        batches = [refs[i : i + size] for i in range(0, len(refs), size)]
        run = self.run_grobid_parse if strategy == "grobid" else self.run_parse

        def timed(batch):
            start = time.perf_counter()
            result = run(batch)
            per_item = (time.perf_counter() - start) / max(1, len(result))
            for r in result:
                r.seconds = per_item
            self.completed.extend(result)
            return result

        return [o for batch in self._map(timed, batches) for o in batch]

    def _map(self, fn, items):
        if self.config.concurrency <= 1 or len(items) <= 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(max_workers=self.config.concurrency) as pool:
            return list(pool.map(fn, items))


def record_outputs(manifest: RunManifest, outputs: list[ItemOutput]) -> None:
    """Copy per-item timing, token counts and failures into the manifest."""
    for o in outputs:
        manifest.item_seconds[o.item_id] = o.seconds
        if o.tokens_total is not None:
            manifest.tokens[o.item_id] = {"selected": o.tokens_selected, "total": o.tokens_total}
        for f in o.failures:
            manifest.failures.append({"id": o.item_id, **f.to_dict()})


def write_predictions(path, outputs: list[ItemOutput], task: str) -> None:
    """One JSON line per document (or reference for parsing); written atomically."""
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("w", encoding="utf-8") as fh:
        for o in outputs:
            line = o.to_line(task)
            if task != "parse" and o.n_units != 1:
                line["n_units"] = o.n_units
            fh.write(json.dumps(line, ensure_ascii=False, sort_keys=True) + "\n")
    tmp.replace(path)


def read_predictions(path, task: str) -> list[ItemOutput]:
    outputs = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                outputs.append(ItemOutput.from_line(json.loads(line), task))
    return outputs
