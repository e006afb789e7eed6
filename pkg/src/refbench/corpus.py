"""Gold-data ingestion: canonical JSONL formats, a TEI adapter for the GROBID
citation model, and page splitting of converted markdown."""

from __future__ import annotations

import json
import logging
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

from refbench.errors import FormatError
from refbench.schema import ReferenceRecord

log = logging.getLogger(__name__)

CITATION_CLASSES = {1: "end_section", 2: "footnote_only", 3: "mixed"}
TEI_NS = "http://www.tei-c.org/ns/1.0"

# "Ebd."/"ibid." open the string; "a.a.O."/"op. cit." usually follow an author name
_BACKREF_LEAD = re.compile(r"^\s*(ebd\.?|ebenda|ibid\.?|ibidem|id\.)(?=[\s,.;:]|$)", re.I)
_BACKREF_ANY = re.compile(r"(^|[\s,;])(a\.\s?a\.\s?o\.?|op\.\s?cit\.?)(?=[\s,.;:]|$)", re.I)


def is_abbreviated_backref(raw: str) -> bool:
    """True for back-references such as "Ebd., S. 12" or "a.a.O."; these are kept verbatim."""
    raw = raw or ""
    return bool(_BACKREF_LEAD.match(raw) or _BACKREF_ANY.search(raw))


@dataclass
class DocumentGold:
    doc_id: str
    markdown: str = ""
    language: str | None = None
    citation_class: int | str | None = None
    category: str | None = None
    pdf_path: str | None = None
    gold_strings: list[str] = field(default_factory=list)
    gold_records: list[ReferenceRecord] = field(default_factory=list)

    @property
    def labels(self) -> dict:
        return {"language": self.language, "citation_class": self.citation_class, "category": self.category}

    @property
    def backref_flags(self) -> list[bool]:
        return [is_abbreviated_backref(s) for s in self.gold_strings]

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "language": self.language,
            "citation_class": self.citation_class,
            "category": self.category,
            "markdown": self.markdown,
            "pdf_path": self.pdf_path,
            "references": [
                {"raw": s, "record": r.to_dict(include_raw=False)}
                for s, r in zip(self.gold_strings, self.gold_records)
            ],
        }


@dataclass
class ReferenceGold:
    ref_id: str
    raw: str
    record: ReferenceRecord
    doc_id: str | None = None
    language: str | None = None
    labels: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "ref_id": self.ref_id,
            "doc_id": self.doc_id,
            "language": self.language,
            "raw": self.raw,
            "record": self.record.to_dict(include_raw=False),
        }
        out.update(self.labels)
        return out


def _citation_class(value):
    if value in (None, "", "unknown"):
        return None
    if isinstance(value, str) and value.isdigit():
        value = int(value)
    if isinstance(value, int):
        if value not in CITATION_CLASSES:
            raise ValueError(f"citation_class must be 1, 2 or 3, got {value}")
        return value
    inverse = {v: k for k, v in CITATION_CLASSES.items()}
    if value in inverse:
        return inverse[value]
    raise ValueError(f"unknown citation_class {value!r}")


def _record(data, where):
    if not isinstance(data, dict):
        raise ValueError(f"{where}: record must be an object")
    return ReferenceRecord.from_dict(data)


def parse_document_line(obj) -> DocumentGold:
    if not isinstance(obj, dict):
        raise ValueError("document line must be a JSON object")
    doc_id = obj.get("doc_id")
    if not isinstance(doc_id, str) or not doc_id:
        raise ValueError("missing doc_id")
    refs = obj.get("references", [])
    if not isinstance(refs, list):
        raise ValueError("references must be a list")
    strings, records = [], []
    for k, ref in enumerate(refs):
        if not isinstance(ref, dict) or not isinstance(ref.get("raw"), str):
            raise ValueError(f"reference {k} needs a raw string")
        strings.append(ref["raw"])
        if "record" in ref:
            records.append(_record(ref["record"], f"reference {k}"))
    if records and len(records) != len(strings):
        raise ValueError("either every reference carries a record or none does")
    return DocumentGold(
        doc_id=doc_id,
        markdown=obj.get("markdown") or "",
        language=obj.get("language"),
        citation_class=_citation_class(obj.get("citation_class")),
        category=obj.get("category"),
        pdf_path=obj.get("pdf_path"),
        gold_strings=strings,
        gold_records=records,
    )


def parse_reference_line(obj) -> ReferenceGold:
    if not isinstance(obj, dict):
        raise ValueError("reference line must be a JSON object")
    ref_id = obj.get("ref_id")
    if not isinstance(ref_id, str) or not ref_id:
        raise ValueError("missing ref_id")
    raw = obj.get("raw")
    if not isinstance(raw, str) or not raw.strip():
        raise ValueError("raw must be a non-empty string")
    labels = {k: obj[k] for k in ("citation_class", "category") if obj.get(k) is not None}
    return ReferenceGold(
        ref_id=ref_id,
        raw=raw,
        record=_record(obj.get("record", {}), ref_id),
        doc_id=obj.get("doc_id"),
        language=obj.get("language"),
        labels=labels,
    )


def _iter_jsonl(path, parse, strict):
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield lineno, parse(json.loads(line))
            except (ValueError, TypeError) as exc:
                err = FormatError(str(exc), line=lineno, path=str(path))
                if strict:
                    raise err from exc
                log.warning("skipping %s", err)


def load_document_gold(path, strict: bool = False) -> Iterator[DocumentGold]:
    """Stream documents from a JSONL file, one document per line."""
    seen = set()
    for lineno, doc in _iter_jsonl(path, parse_document_line, strict):
        if doc.doc_id in seen:
            err = FormatError(f"duplicate doc_id {doc.doc_id}", line=lineno, path=str(path))
            if strict:
                raise err
            log.warning("skipping %s", err)
            continue
        seen.add(doc.doc_id)
        yield doc


def load_reference_gold(path, strict: bool = False) -> Iterator[ReferenceGold]:
    seen = set()
    for lineno, ref in _iter_jsonl(path, parse_reference_line, strict):
        if ref.ref_id in seen:
            err = FormatError(f"duplicate ref_id {ref.ref_id}", line=lineno, path=str(path))
            if strict:
                raise err
            log.warning("skipping %s", err)
            continue
        seen.add(ref.ref_id)
        yield ref


def write_jsonl(path, items):
    with Path(path).open("w", encoding="utf-8") as fh:
        for item in items:
            fh.write(json.dumps(item.to_dict(), ensure_ascii=False) + "\n")


# --- TEI -------------------------------------------------------------------

def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _strip_ns(root):
    for el in root.iter():
        if isinstance(el.tag, str):
            el.tag = _local(el.tag)
    return root


def _text(el) -> str:
    return " ".join("".join(el.itertext()).split()) if el is not None else ""


def _persons(parent, tag):
    names = []
    for person in parent.findall(tag):
        pers = person.find("persName")
        if pers is None:
            # bare <author>Name</author> or an organisation
            name = _text(person)
            if name:
                names.append(name)
            continue
        surname = _text(pers.find("surname"))
        forenames = " ".join(_text(f) for f in pers.findall("forename") if _text(f))
        if surname and forenames:
            names.append(f"{surname}, {forenames}")
        elif surname or forenames:
            names.append(surname or forenames)
        elif _text(pers):
            names.append(_text(pers))
    return names


_YEAR = re.compile(r"\d{4}")


def _bibl_to_record(bibl) -> tuple[str, ReferenceRecord]:
    analytic = bibl.find("analytic")
    monogr = bibl.find("monogr")
    values: dict = {}
    a_title = _text(analytic.find("title")) if analytic is not None else ""
    m_title = _text(monogr.find("title")) if monogr is not None else ""
    if a_title and m_title:
        values["full_title"], values["container_title"] = a_title, m_title
    elif a_title or m_title:
        values["full_title"] = a_title or m_title

    authors = _persons(analytic, "author") if analytic is not None else []
    if not authors and monogr is not None:
        authors = _persons(monogr, "author")
    values["authors"] = authors
    values["editors"] = _persons(monogr, "editor") if monogr is not None else []

    imprint = monogr.find("imprint") if monogr is not None else None
    if imprint is not None:
        date = imprint.find("date")
        if date is not None:
            m = _YEAR.search(date.get("when", "")) or _YEAR.search(_text(date))
            if m:
                values["year"] = m.group(0)
        values["publisher"] = _text(imprint.find("publisher"))
        values["place"] = _text(imprint.find("pubPlace"))
        for scope in imprint.findall("biblScope"):
            unit = scope.get("unit")
            if unit == "page":
                if scope.get("from") and scope.get("to"):
                    value = f"{scope.get('from')}-{scope.get('to')}"
                else:
                    value = _text(scope) or scope.get("from", "")
                values["pages"] = value
            elif unit in ("volume", "issue"):
                values[unit] = _text(scope) or scope.get("from", "")
    for idno in bibl.iter("idno"):
        if (idno.get("type") or "").upper() == "DOI" and "doi" not in values:
            values["doi"] = _text(idno)
    for ptr in bibl.iter("ptr"):
        if ptr.get("target") and "url" not in values:
            values["url"] = ptr.get("target")

    raw_note = None
    for note in bibl.findall("note"):
        if note.get("type") == "raw_reference":
            raw_note = _text(note)
    raw = raw_note or _text(bibl)
    values["raw"] = raw
    record = ReferenceRecord.from_dict({k: v for k, v in values.items() if v})
    return raw, record


def import_tei(tei_text: str) -> list[tuple[str, ReferenceRecord]]:
    """Map every listBibl/biblStruct (or a bare biblStruct root) onto the schema."""
    try:
        root = _strip_ns(ET.fromstring(tei_text))
    except ET.ParseError as exc:
        raise FormatError(f"invalid TEI XML: {exc}") from exc
    if root.tag == "biblStruct":
        bibls = [root]
    else:
        bibls = [b for lb in root.iter("listBibl") for b in lb.findall("biblStruct")]
        if not bibls and root.tag != "listBibl":
            # processCitationList may answer with bare biblStruct siblings
            bibls = list(root.iter("biblStruct"))
    if not bibls:
        log.warning("TEI contains no biblStruct elements")
    return [_bibl_to_record(b) for b in bibls]


def _person_el(parent, tag, name):
    person = ET.SubElement(parent, tag)
    pers = ET.SubElement(person, "persName")
    if "," in name:
        surname, forename = (x.strip() for x in name.split(",", 1))
        if forename:
            ET.SubElement(pers, "forename").text = forename
        ET.SubElement(pers, "surname").text = surname
    else:
        ET.SubElement(pers, "surname").text = name


def record_to_tei(record: ReferenceRecord) -> ET.Element:
    """Inverse of the import mapping, for fixtures and round-trip checks."""
    bibl = ET.Element("biblStruct")
    has_analytic = bool(record.full_title and record.container_title)
    if has_analytic:
        analytic = ET.SubElement(bibl, "analytic")
        ET.SubElement(analytic, "title", level="a").text = record.full_title
        for a in record.authors:
            _person_el(analytic, "author", a)
    monogr = ET.SubElement(bibl, "monogr")
    title = record.container_title if has_analytic else (record.full_title or record.container_title)
    if title:
        ET.SubElement(monogr, "title").text = title
    if not has_analytic:
        for a in record.authors:
            _person_el(monogr, "author", a)
    for e in record.editors:
        _person_el(monogr, "editor", e)
    if record.doi:
        ET.SubElement(bibl, "idno", type="DOI").text = record.doi
    if record.url:
        ET.SubElement(bibl, "ptr", target=record.url)
    imprint = ET.SubElement(monogr, "imprint")
    if record.publisher:
        ET.SubElement(imprint, "publisher").text = record.publisher
    if record.place:
        ET.SubElement(imprint, "pubPlace").text = record.place
    if record.volume:
        ET.SubElement(imprint, "biblScope", unit="volume").text = record.volume
    if record.issue:
        ET.SubElement(imprint, "biblScope", unit="issue").text = record.issue
    if record.pages:
        ET.SubElement(imprint, "biblScope", unit="page").text = record.pages
    if record.year:
        m = _YEAR.search(record.year)
        attrs = {"type": "published"}
        if m:
            attrs["when"] = m.group(0)
        ET.SubElement(imprint, "date", **attrs).text = record.year
    if record.raw:
        ET.SubElement(bibl, "note", type="raw_reference").text = record.raw
    return bibl


def records_to_tei(records: list[ReferenceRecord], fulltext: bool = False) -> str:
    """Serialize records as a TEI document carrying one listBibl."""
    tei = ET.Element("TEI", xmlns=TEI_NS)
    text = ET.SubElement(tei, "text")
    parent = ET.SubElement(ET.SubElement(text, "back"), "div", type="references") if fulltext else text
    list_bibl = ET.SubElement(parent, "listBibl")
    for r in records:
        list_bibl.append(record_to_tei(r))
    return ET.tostring(tei, encoding="unicode")


# --- pages -----------------------------------------------------------------

DEFAULT_PAGE_DELIMITER = r"\n?^\f$\n?"


@dataclass
class Page:
    index: int
    text: str
    offset: int = 0
    # delimiter text that followed this page in the source
    separator: str = ""


def page_split(markdown: str, delimiter: str = DEFAULT_PAGE_DELIMITER) -> list[Page]:
    """Split converted markdown into 1-based pages on a delimiter line.

    "".join(p.text + p.separator for p in pages) restores the input.
    """
    pattern = re.compile(delimiter, re.M)
    pages = []
    pos = 0
    for m in pattern.finditer(markdown):
        if m.end() == m.start():
            continue
        pages.append(Page(len(pages) + 1, markdown[pos : m.start()], pos, m.group(0)))
        pos = m.end()
    tail = markdown[pos:]
    if tail or not pages:
        pages.append(Page(len(pages) + 1, tail, pos, ""))
    return pages


def join_pages(pages: list[Page]) -> str:
    return "".join(p.text + p.separator for p in pages)
