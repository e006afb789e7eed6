"""Target reference schema, strict-JSON validation of model output, and
canonical string reconstruction."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field, fields

from refbench.errors import RefbenchError

log = logging.getLogger(__name__)

LIST_FIELDS = ("authors", "editors")
STRING_FIELDS = (
    "full_title",
    "container_title",
    "publisher",
    "place",
    "year",
    "volume",
    "issue",
    "pages",
    "doi",
    "url",
)
# Every field that takes part in scoring. `raw` is carried but never scored.
SCORED_FIELDS = LIST_FIELDS + STRING_FIELDS
ALL_FIELDS = SCORED_FIELDS + ("raw",)

CANONICAL_ORDER = (
    "authors",
    "full_title",
    "editors",
    "container_title",
    "volume",
    "issue",
    "place",
    "publisher",
    "year",
    "pages",
    "doi",
    "url",
)

FAILURE_KINDS = ("malformed_json", "empty_output", "truncated", "schema_violation", "transport_error")


@dataclass
class ReferenceRecord:
    authors: list[str] = field(default_factory=list)
    editors: list[str] = field(default_factory=list)
    full_title: str | None = None
    container_title: str | None = None
    publisher: str | None = None
    place: str | None = None
    year: str | None = None
    volume: str | None = None
    issue: str | None = None
    pages: str | None = None
    doi: str | None = None
    url: str | None = None
    raw: str | None = None

    def get(self, name):
        return getattr(self, name)

    def has(self, name) -> bool:
        value = getattr(self, name)
        return bool(value)

    def populated_fields(self) -> list[str]:
        """Scored fields carrying a value, in schema order."""
        return [f for f in SCORED_FIELDS if self.has(f)]

    def to_dict(self, include_raw=True) -> dict:
        out = {}
        for f in ALL_FIELDS:
            if f == "raw" and not include_raw:
                continue
            value = getattr(self, f)
            if value:
                out[f] = list(value) if f in LIST_FIELDS else value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ReferenceRecord":
        """Build a record from trusted data (gold files); use `validate_record` for model output."""
        return _coerce(data)


@dataclass
class StructuralFailure:
    kind: str
    raw_output: str
    attempts: int = 1
    message: str = ""

    def __post_init__(self):
        if self.kind not in FAILURE_KINDS:
            raise ValueError(f"unknown failure kind {self.kind!r}")
        if self.attempts not in (1, 2):
            raise ValueError("attempts must be 1 or 2")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "attempts": self.attempts,
            "message": self.message,
            "raw_output": self.raw_output,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            kind=data["kind"],
            raw_output=data.get("raw_output", ""),
            attempts=data.get("attempts", 1),
            message=data.get("message", ""),
        )


class StructuralError(RefbenchError):
    """Raised by the validators; carries the StructuralFailure describing the output."""

    def __init__(self, failure: StructuralFailure):
        self.failure = failure
        super().__init__(f"{failure.kind}: {failure.message}" if failure.message else failure.kind)


def _fail(kind, raw, message=""):
    raise StructuralError(StructuralFailure(kind=kind, raw_output=raw, message=message))


def _coerce(obj, raw_text=None) -> ReferenceRecord:
    """Map a decoded JSON object onto the schema, raising ValueError on bad shapes."""
    if not isinstance(obj, dict):
        raise ValueError(f"expected a JSON object, got {type(obj).__name__}")
    values = {}
    unknown = [k for k in obj if k not in ALL_FIELDS]
    if unknown:
        log.warning("dropping unknown keys %s", sorted(unknown))
    for name in LIST_FIELDS:
        value = obj.get(name)
        if value is None:
            continue
        if not isinstance(value, list):
            raise ValueError(f"{name} must be a list of strings")
        names = []
        for entry in value:
            if not isinstance(entry, str):
                raise ValueError(f"{name} entries must be strings")
            if entry.strip():
                names.append(entry.strip())
        values[name] = names
    for name in STRING_FIELDS + ("raw",):
        value = obj.get(name)
        if value is None:
            continue
        # Bare numbers (year: 2020, volume: 4) are common and unambiguous.
        if isinstance(value, bool) or not isinstance(value, (str, int, float)):
            raise ValueError(f"{name} must be a string")
        value = str(value).strip()
        if value:
            values[name] = value
    return ReferenceRecord(**values)


_FENCE = re.compile(r"^```[a-zA-Z]*\s*\n(.*)\n\s*```$", re.S)


def _decode(text: str, allow_truncated: bool):
    if text is None or not text.strip():
        _fail("empty_output", text or "")
    body = text.strip()
    m = _FENCE.match(body)
    if m:
        body = m.group(1).strip()
    try:
        return json.loads(body)
    except json.JSONDecodeError as exc:
        if allow_truncated and body.startswith("[") and exc.pos >= len(body):
            _fail("truncated", text, "output ends before the list is closed")
        # An unclosed outer bracket also shows up as an error at end of input
        # after a complete inner object, e.g. '[{"a": 1}'.
        if allow_truncated and body.startswith("[") and not _brackets_closed(body):
            _fail("truncated", text, "output ends before the list is closed")
        _fail("malformed_json", text, str(exc))


def _brackets_closed(body: str) -> bool:
    depth = 0
    in_str = False
    escape = False
    for ch in body:
        if in_str:
            if escape:
                escape = False
            elif ch == "\\":
                escape = True
            elif ch == '"':
                in_str = False
        elif ch == '"':
            in_str = True
        elif ch in "[{":
            depth += 1
        elif ch in "]}":
            depth -= 1
    return depth <= 0 and not in_str


def validate_record(json_text: str) -> ReferenceRecord:
    """Parse one model answer into a ReferenceRecord.

    Raises StructuralError (malformed_json, empty_output, schema_violation).
    """
    obj = _decode(json_text, allow_truncated=False)
    try:
        record = _coerce(obj)
    except ValueError as exc:
        _fail("schema_violation", json_text, str(exc))
    if not record.populated_fields():
        _fail("schema_violation", json_text, "record has no populated fields")
    return record


def _unwrap_list(obj, item_type):
    if isinstance(obj, list):
        return obj
    if isinstance(obj, dict):
        if len(obj) == 1:
            (value,) = obj.values()
            if isinstance(value, list) and all(isinstance(v, item_type) for v in value):
                log.info("unwrapping single-key object into list")
                return value
        if item_type is dict:
            log.info("accepting a single object where a list was expected")
            return [obj]
    return None


def validate_record_list(json_text: str) -> list[ReferenceRecord]:
    obj = _decode(json_text, allow_truncated=True)
    items = _unwrap_list(obj, dict)
    if items is None:
        _fail("schema_violation", json_text, "expected a JSON list of records")
    records = []
    for i, item in enumerate(items):
        try:
            record = _coerce(item)
        except ValueError as exc:
            _fail("schema_violation", json_text, f"item {i}: {exc}")
        if not record.populated_fields():
            log.warning("dropping empty record at position %d", i)
            continue
        records.append(record)
    return records


def validate_string_list(json_text: str) -> list[str]:
    obj = _decode(json_text, allow_truncated=True)
    items = _unwrap_list(obj, str)
    if items is None:
        _fail("schema_violation", json_text, "expected a JSON list of strings")
    out = []
    for item in items:
        if not isinstance(item, str):
            _fail("schema_violation", json_text, "list entries must be strings")
        if item.strip():
            out.append(item.strip())
    return out


def serialize_record(record: ReferenceRecord) -> str:
    return json.dumps(record.to_dict(), ensure_ascii=False, sort_keys=True)


def canonical_string(record: ReferenceRecord) -> str:
    """Concatenate the populated fields in the fixed bibliography order."""
    parts = []
    for name in CANONICAL_ORDER:
        value = getattr(record, name)
        if not value:
            continue
        parts.append("; ".join(value) if name in LIST_FIELDS else value)
    return ", ".join(parts)


def json_schema() -> dict:
    """JSON Schema document for ReferenceRecord, embedded in prompts and published under docs/."""
    props = {}
    for name in LIST_FIELDS:
        props[name] = {"type": "array", "items": {"type": "string", "minLength": 1}}
    for name in STRING_FIELDS:
        props[name] = {"type": "string"}
    props["raw"] = {"type": "string"}
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "ReferenceRecord",
        "type": "object",
        "properties": props,
        "additionalProperties": False,
        "minProperties": 1,
    }
