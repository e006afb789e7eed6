"""Field-level scoring of matched record pairs, micro/macro aggregation, the
Correct/Minor/Major/Structural taxonomy, and grouped breakdowns."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

from refbench.matching import f1_score, optimal_assignment
from refbench.schema import SCORED_FIELDS, ReferenceRecord, canonical_string
from refbench.textnorm import _normalized, field_similarity, normalized_similarity

CATEGORIES = ("Correct", "Minor", "Major", "Structural")
KEY_FIELDS = ("full_title", "authors", "year")


@dataclass
class ScoringConfig:
    correct_min: float = 0.95
    major_below: float = 0.60
    exact_year: bool = False
    # None: partial credit from similarity; a float turns extraction TP binary.
    binary_threshold: float | None = None


DEFAULT_CONFIG = ScoringConfig()


@dataclass
class RecordScore:
    gold_index: int
    pred_index: int | None = None
    per_field: dict[str, float] = field(default_factory=dict)
    fn_fields: list[str] = field(default_factory=list)
    fp_fields: list[str] = field(default_factory=list)
    matched: bool = True

    @property
    def tp(self) -> float:
        return math.fsum(self.per_field.values())

    @property
    def pred_count(self) -> int:
        return len(self.per_field) + len(self.fp_fields)

    @property
    def gold_count(self) -> int:
        return len(self.per_field) + len(self.fn_fields)

    def f1(self) -> float:
        if self.pred_count == 0 and self.gold_count == 0:
            return 1.0
        p = self.tp / self.pred_count if self.pred_count else 0.0
        r = self.tp / self.gold_count if self.gold_count else 0.0
        return f1_score(p, r)


@dataclass
class Metrics:
    precision: float
    recall: float
    micro_f1: float
    macro_f1: float | None
    per_field: dict[str, tuple[float, float, float]] = field(default_factory=dict)
    n_records: int = 0
    n_failures: int = 0

    def to_dict(self):
        return {
            "precision": self.precision,
            "recall": self.recall,
            "micro_f1": self.micro_f1,
            "macro_f1": self.macro_f1,
            "per_field": {k: list(v) for k, v in self.per_field.items()},
            "n_records": self.n_records,
            "n_failures": self.n_failures,
        }


def score_record_pair(gold: ReferenceRecord, pred: ReferenceRecord, gold_index=0, pred_index=0,
                      config: ScoringConfig = DEFAULT_CONFIG) -> RecordScore:
    score = RecordScore(gold_index=gold_index, pred_index=pred_index)
    for name in SCORED_FIELDS:
        g, p = gold.has(name), pred.has(name)
        if g and p:
            score.per_field[name] = field_similarity(name, gold.get(name), pred.get(name), config.exact_year)
        elif g:
            score.fn_fields.append(name)
        elif p:
            score.fp_fields.append(name)
    return score


def unmatched_gold_score(gold: ReferenceRecord, gold_index: int) -> RecordScore:
    return RecordScore(gold_index=gold_index, fn_fields=gold.populated_fields(), matched=False)


def _pooled(scores, unmatched_pred, fields=None):
    """(TP, pred_count, gold_count) pooled over records, optionally for a field subset."""
    def keep(name):
        return fields is None or name in fields

    tp_terms = []
    pred_count = 0
    gold_count = 0
    for s in scores:
        for name, sim in s.per_field.items():
            if keep(name):
                tp_terms.append(sim)
                pred_count += 1
                gold_count += 1
        pred_count += sum(1 for f in s.fp_fields if keep(f))
        gold_count += sum(1 for f in s.fn_fields if keep(f))
    for record in unmatched_pred:
        pred_count += sum(1 for f in record.populated_fields() if keep(f))
    return math.fsum(tp_terms), pred_count, gold_count


def _prf(tp, pred_count, gold_count):
    p = tp / pred_count if pred_count else 0.0
    r = tp / gold_count if gold_count else 0.0
    return p, r, f1_score(p, r)


def aggregate_macro(scores: list[RecordScore]) -> float:
    """Mean record F1 over gold records; unmatched gold records score 0."""
    if not scores:
        return 0.0
    return math.fsum(s.f1() if s.matched else 0.0 for s in scores) / len(scores)


def per_field_metrics(scores, field_name, unmatched_pred=()) -> tuple[float, float, float]:
    return _prf(*_pooled(scores, unmatched_pred, fields={field_name}))


def aggregate_micro(scores: list[RecordScore], unmatched_pred_records=(), n_failures=0,
                    fields=SCORED_FIELDS) -> Metrics:
    """Pool TP, predicted and gold field counts over all records and fields."""
    p, r, f = _prf(*_pooled(scores, unmatched_pred_records))
    per_field = {}
    for name in fields:
        tp, pc, gc = _pooled(scores, unmatched_pred_records, fields={name})
        if pc or gc:
            per_field[name] = _prf(tp, pc, gc)
    return Metrics(
        precision=p,
        recall=r,
        micro_f1=f,
        macro_f1=aggregate_macro(scores),
        per_field=per_field,
        n_records=len(scores),
        n_failures=n_failures,
    )


def classify_error(score: RecordScore | None, structural: bool = False,
                   config: ScoringConfig = DEFAULT_CONFIG) -> str:
    """Collapse per-field similarities into one category. Missing fields count as 0."""
    if structural or score is None:
        return "Structural"
    sims = list(score.per_field.values()) + [0.0] * (len(score.fn_fields) + len(score.fp_fields))
    if not sims:
        return "Correct"
    worst = min(sims)
    if worst < config.major_below:
        return "Major"
    if worst < config.correct_min:
        return "Minor"
    return "Correct"


@dataclass
class DocumentResult:
    """Scored output of one document (or one reference for the parsing task)."""

    doc_id: str
    labels: dict = field(default_factory=dict)
    scores: list[RecordScore] = field(default_factory=list)
    unmatched_pred: list[ReferenceRecord] = field(default_factory=list)
    categories: list[str] = field(default_factory=list)
    # per-gold-record labels, e.g. {"abbreviated_backref": True}
    record_labels: list[dict] = field(default_factory=list)
    n_failures: int = 0


def score_endtoend(gold_doc, pred_records: list[ReferenceRecord], failed: bool = False,
                   config: ScoringConfig = DEFAULT_CONFIG):
    """Match predicted records to gold references through their canonical strings, then score fields.

    Returns (Metrics, categories, RecordScores, unmatched predicted records).
    """
    gold_records = gold_doc.gold_records
    gn = [_normalized(s) for s in gold_doc.gold_strings]
    pn = [_normalized(canonical_string(r)) for r in pred_records]
    m = [[normalized_similarity(g, p) for p in pn] for g in gn]
    pairing = optimal_assignment(m) if gn and pn else None
    by_gold = pairing.pred_for_gold() if pairing else {}
    scores = []
    categories = []
    for i, gold in enumerate(gold_records):
        j = by_gold.get(i)
        if j is None:
            s = unmatched_gold_score(gold, i)
        else:
            s = score_record_pair(gold, pred_records[j], i, j, config)
        scores.append(s)
        categories.append(classify_error(s, structural=failed, config=config))
    matched_preds = set(by_gold.values())
    unmatched = [r for j, r in enumerate(pred_records) if j not in matched_preds]
    metrics = aggregate_micro(scores, unmatched, n_failures=int(failed))
    return metrics, categories, scores, unmatched


def category_histogram(categories) -> dict[str, int]:
    counts = Counter(categories)
    return {c: counts.get(c, 0) for c in CATEGORIES}


def pool_results(results: list[DocumentResult]) -> tuple[Metrics, dict[str, int]]:
    scores = [s for r in results for s in r.scores]
    unmatched = [u for r in results for u in r.unmatched_pred]
    failures = sum(r.n_failures for r in results)
    metrics = aggregate_micro(scores, unmatched, n_failures=failures)
    hist = category_histogram(c for r in results for c in r.categories)
    return metrics, hist


RECORD_LEVEL_KEYS = ("abbreviated_backref",)


def breakdown(results: list[DocumentResult], key: str) -> dict[str, dict]:
    """Recompute pooled metrics and the category histogram per label group."""
    groups: dict[str, list[DocumentResult]] = {}
    if key in RECORD_LEVEL_KEYS:
        for r in results:
            parts: dict[str, DocumentResult] = {}
            for k, (score, cat) in enumerate(zip(r.scores, r.categories)):
                labels = r.record_labels[k] if k < len(r.record_labels) else {}
                label = str(labels.get(key, "unknown"))
                part = parts.setdefault(label, DocumentResult(doc_id=r.doc_id))
                part.scores.append(score)
                part.categories.append(cat)
            # unmatched predictions cannot be attributed to a record-level group
            for label, part in parts.items():
                groups.setdefault(label, []).append(part)
    else:
        for r in results:
            label = r.labels.get(key)
            groups.setdefault("unknown" if label is None else str(label), []).append(r)
    out = {}
    for label in sorted(groups):
        metrics, hist = pool_results(groups[label])
        total = sum(hist.values())
        out[label] = {
            "metrics": metrics.to_dict(),
            "histogram": hist,
            "correct_share": hist["Correct"] / total if total else None,
            "n_documents": len({r.doc_id for r in groups[label]}),
        }
    return out
