"""Versioned prompt templates: instructions, inline schema block, few-shot
examples, payload. Template text is hashed into every run manifest."""

from __future__ import annotations

import hashlib
import json
import math

from refbench.errors import PayloadTooLarge
from refbench.schema import json_schema

TEMPLATE_VERSION = "1"
INPUT_MARKER = "### Input\n"

_EX_APA = "Floridi, L., & Taddeo, M. (2016). What is data ethics? Philosophical Transactions of the Royal Society A, 374(2083), 20160360. https://doi.org/10.1098/rsta.2016.0360"
_EX_APA_REC = {
    "authors": ["Floridi, L.", "Taddeo, M."],
    "full_title": "What is data ethics?",
    "container_title": "Philosophical Transactions of the Royal Society A",
    "volume": "374",
    "issue": "2083",
    "pages": "20160360",
    "year": "2016",
    "doi": "10.1098/rsta.2016.0360",
}
_EX_DE = "Vgl. Weber, Max: Wirtschaft und Gesellschaft. Tübingen: Mohr 1922, S. 17."
_EX_DE_REC = {
    "authors": ["Weber, Max"],
    "full_title": "Wirtschaft und Gesellschaft",
    "place": "Tübingen",
    "publisher": "Mohr",
    "year": "1922",
    "pages": "17",
}
_EX_IT = "G. Cozzi, Repubblica di Venezia e Stati italiani, Torino, Einaudi, 1982, pp. 91-133."
_EX_IT_REC = {
    "authors": ["Cozzi, G."],
    "full_title": "Repubblica di Venezia e Stati italiani",
    "place": "Torino",
    "publisher": "Einaudi",
    "year": "1982",
    "pages": "91-133",
}
_EX_DOC = (
    "... wie bereits Weber zeigte.[^1]\n\n[^1]: " + _EX_DE + "\n\n## References\n\n" + _EX_APA + "\n"
)

_SCHEMA_BLOCK = json.dumps(json_schema(), indent=2, ensure_ascii=False)


def _dump(obj) -> str:
    return json.dumps(obj, ensure_ascii=False)


TEMPLATES = {
    "extract": (
        "You extract bibliographic references from scholarly documents.\n"
        "Find every reference, both in bibliographies and in footnotes, including short "
        "back-references such as 'Ebd.' or 'ibid.'. Copy each one verbatim, in document order.\n"
        "Answer with strict JSON only (no prose, no code fences): a JSON list of strings.\n\n"
        "### Example\nDocument:\n" + _EX_DOC + "Answer:\n" + _dump([_EX_DE, _EX_APA]) + "\n\n"
    ),
    "parse": (
        "You convert one bibliographic reference string into a structured record.\n"
        "Use only the fields of this JSON schema; omit fields that are not present. "
        "Write person names as 'Surname, Forename'.\n"
        "Answer with strict JSON only (no prose, no code fences): one JSON object.\n\n"
        "### Schema\n" + _SCHEMA_BLOCK + "\n\n"
        "### Example\nReference:\n" + _EX_APA + "\nAnswer:\n" + _dump(_EX_APA_REC) + "\n\n"
        "### Example\nReference:\n" + _EX_IT + "\nAnswer:\n" + _dump(_EX_IT_REC) + "\n\n"
    ),
    "parse_group": (
        "You convert a numbered list of bibliographic reference strings into structured records.\n"
        "Return exactly one record per input line, in input order. Use only the fields of this "
        "JSON schema; omit fields that are not present. Write person names as 'Surname, Forename'.\n"
        "Answer with strict JSON only (no prose, no code fences): a JSON list of objects.\n\n"
        "### Schema\n" + _SCHEMA_BLOCK + "\n\n"
        "### Example\nReferences:\n1. " + _EX_APA + "\n2. " + _EX_IT + "\nAnswer:\n"
        + _dump([_EX_APA_REC, _EX_IT_REC]) + "\n\n"
    ),
    "e2e": (
        "You find every bibliographic reference in a scholarly document, in bibliographies and "
        "footnotes, and convert each into a structured record, in document order.\n"
        "Use only the fields of this JSON schema; omit fields that are not present. "
        "Write person names as 'Surname, Forename'.\n"
        "Answer with strict JSON only (no prose, no code fences): a JSON list of objects.\n\n"
        "### Schema\n" + _SCHEMA_BLOCK + "\n\n"
        "### Example\nDocument:\n" + _EX_DOC + "Answer:\n" + _dump([_EX_DE_REC, _EX_APA_REC]) + "\n\n"
    ),
}

TEMPLATE_HASH = hashlib.sha256(
    json.dumps([TEMPLATE_VERSION, TEMPLATES], sort_keys=True).encode("utf-8")
).hexdigest()


def estimate_tokens(text: str, chars_per_token: float = 4.0) -> int:
    return math.ceil(len(text) / chars_per_token)


def format_group(strings: list[str]) -> str:
    return "\n".join(f"{i}. {s}" for i, s in enumerate(strings, 1))


def build_prompt(task: str, payload: str, context_tokens: int | None = None,
                 output_reserve: int = 4096, chars_per_token: float = 4.0) -> str:
    """Instantiate the task template around the payload.

    Raises PayloadTooLarge when the estimated prompt does not fit
    `context_tokens` after reserving `output_reserve` tokens for the answer.
    """
    if task not in TEMPLATES:
        raise ValueError(f"unknown prompt task {task!r}")
    if not payload or not payload.strip():
        raise ValueError("payload must be non-empty")
    prompt = TEMPLATES[task] + INPUT_MARKER + payload
    if context_tokens is not None:
        budget = context_tokens - output_reserve
        needed = estimate_tokens(prompt, chars_per_token)
        if needed > budget:
            raise PayloadTooLarge(needed, budget)
    return prompt


def split_prompt(prompt: str) -> tuple[str, str]:
    """(task, payload) of a prompt built by `build_prompt`; used by offline stub backends."""
    for task, text in TEMPLATES.items():
        if prompt.startswith(text + INPUT_MARKER):
            return task, prompt[len(text) + len(INPUT_MARKER):]
    raise ValueError("prompt was not produced by build_prompt")
