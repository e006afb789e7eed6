"""Benchmark harness for reference extraction, parsing and end-to-end parsing."""

from refbench.fieldscore import ScoringConfig, classify_error, score_endtoend, score_record_pair
from refbench.matching import brute_force_assignment, optimal_assignment, score_extraction
from refbench.pipeline import Pipeline, PipelineConfig
from refbench.schema import ReferenceRecord, StructuralFailure, canonical_string
from refbench.textnorm import author_list_similarity, field_similarity, name_similarity, string_similarity

__version__ = "0.1.0"

__all__ = [
    "Pipeline",
    "PipelineConfig",
    "ReferenceRecord",
    "ScoringConfig",
    "StructuralFailure",
    "author_list_similarity",
    "brute_force_assignment",
    "canonical_string",
    "classify_error",
    "field_similarity",
    "name_similarity",
    "optimal_assignment",
    "score_endtoend",
    "score_extraction",
    "score_record_pair",
    "string_similarity",
]
