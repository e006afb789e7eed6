"""Deterministic synthetic corpus and offline stand-ins for the external services.

The corpus mimics the three citation regimes (end-section bibliography,
footnotes only, mixed) in English, German and Italian, including abbreviated
back-references. `GoldOracle` answers prompts with the gold-derived output,
`GoldAwareEmbedder` scores chunks by the gold references they contain, and
`grobid_mock_transport` plays a GROBID server that echoes gold records as TEI.
"""

from __future__ import annotations

import json
import random
import re
from pathlib import Path

import httpx
import numpy as np

from refbench.corpus import DocumentGold, ReferenceGold, records_to_tei
from refbench.prompts import split_prompt
from refbench.schema import ReferenceRecord

PAGE_BREAK = "\n\f\n"

_NAMES = {
    "en": (
        ["Anderson", "Baker", "Carter", "Dawson", "Ellis", "Fletcher", "Graham", "Hughes", "Irving", "Jennings",
         "Kendall", "Lawson", "Mitchell", "Norris", "Osborne", "Palmer", "Quinn", "Reynolds", "Sutton", "Turner",
         "Underwood", "Vaughan", "Whitaker", "Young"],
        ["Alice", "Brian", "Claire", "David", "Emma", "Frank", "Grace", "Henry", "Isabel", "James", "Karen", "Louis",
         "Maria", "Nathan", "Olivia", "Peter", "Rachel", "Samuel", "Teresa", "Victor"],
    ),
    "de": (
        ["Bauer", "Becker", "Brandt", "Dietrich", "Engel", "Fischer", "Franke", "Hartmann", "Hoffmann", "Jung",
         "Keller", "Krause", "Lange", "Lorenz", "Möller", "Neumann", "Otto", "Richter", "Schäfer", "Schulze",
         "Vogel", "Walter", "Winkler", "Zimmermann"],
        ["Andreas", "Birgit", "Christian", "Dorothea", "Elke", "Friedrich", "Gisela", "Hans-Peter", "Ingrid",
         "Jürgen", "Katrin", "Lothar", "Monika", "Norbert", "Renate", "Sabine", "Thomas", "Ulrike", "Werner",
         "Karl-Heinz"],
    ),
    "it": (
        ["Barbieri", "Bianchi", "Colombo", "Conti", "De Luca", "Esposito", "Ferrari", "Fontana", "Gallo", "Greco",
         "Lombardi", "Marino", "Mancini", "Moretti", "Pellegrini", "Ricci", "Rinaldi", "Romano", "Santoro",
         "Vitale"],
        ["Alessandro", "Beatrice", "Carlo", "Daniela", "Enrico", "Francesca", "Giovanni", "Lucia", "Marco",
         "Paola", "Roberto", "Silvia", "Tommaso", "Valeria"],
    ),
}

_TITLE_WORDS = {
    "en": ["data", "ethics", "migration", "policy", "networks", "inequality", "labour", "memory", "archives",
           "citizenship", "welfare", "cities", "knowledge", "practice", "risk", "trust", "evidence", "health",
           "identity", "institutions", "markets", "reform", "digital", "rural", "public", "history", "language",
           "science", "climate", "education"],
    "de": ["Arbeit", "Migration", "Gesellschaft", "Staat", "Bildung", "Erinnerung", "Familie", "Wandel",
           "Sozialpolitik", "Ungleichheit", "Geschichte", "Kultur", "Integration", "Stadt", "Demokratie",
           "Wirtschaft", "Öffentlichkeit", "Religion", "Wissen", "Herrschaft", "Jugend", "Alter", "Recht",
           "Gesundheit", "Medien", "Sprache"],
    "it": ["storia", "Venezia", "commercio", "Repubblica", "chiesa", "arte", "società", "archivi", "nobiltà",
           "Stato", "cultura", "mercanti", "laguna", "politica", "economia", "diplomazia", "famiglia", "città",
           "memoria", "libri", "stampa", "patriziato"],
}

_JOINERS = {
    "en": ["and", "of", "in", "for", "between", "after"],
    "de": ["und", "im", "der", "zwischen", "nach", "über"],
    "it": ["e", "di", "nella", "tra", "dopo", "per"],
}

_JOURNALS = {
    "en": ["Journal of Social Policy", "Sociological Review", "Public Health Reports", "Digital Humanities Quarterly",
           "Journal of Documentation", "Urban Studies", "Migration Studies", "Research Policy"],
    "de": ["Kölner Zeitschrift für Soziologie und Sozialpsychologie", "Zeitschrift für Soziologie",
           "Soziale Welt", "Leviathan", "Berliner Journal für Soziologie", "Geschichte und Gesellschaft",
           "Politische Vierteljahresschrift"],
    "it": ["Studi veneziani", "Archivio veneto", "Rivista storica italiana", "Quaderni storici",
           "Ateneo veneto", "Società e storia"],
}

_PUBLISHERS = {
    "en": [("Oxford", "Oxford University Press"), ("Cambridge", "Polity"), ("London", "Routledge"),
           ("Chicago", "University of Chicago Press"), ("New York", "Columbia University Press")],
    "de": [("Frankfurt am Main", "Suhrkamp"), ("Wiesbaden", "VS Verlag"), ("München", "C.H. Beck"),
           ("Tübingen", "Mohr Siebeck"), ("Opladen", "Leske + Budrich"), ("Bielefeld", "transcript")],
    "it": [("Torino", "Einaudi"), ("Bologna", "il Mulino"), ("Venezia", "Marsilio"), ("Roma", "Laterza"),
           ("Milano", "Franco Angeli")],
}

_FILLER = {
    "en": ["the", "study", "shows", "that", "households", "adapted", "their", "strategies", "over", "time",
           "while", "local", "actors", "negotiated", "new", "rules", "across", "several", "regions", "and",
           "this", "pattern", "remains", "visible", "in", "later", "surveys", "we", "argue", "evidence"],
    "de": ["die", "Untersuchung", "zeigt", "dass", "Haushalte", "ihre", "Strategien", "im", "Zeitverlauf",
           "anpassten", "während", "lokale", "Akteure", "neue", "Regeln", "aushandelten", "und", "dieses",
           "Muster", "bleibt", "in", "späteren", "Erhebungen", "sichtbar", "wir", "argumentieren", "Befunde"],
    "it": ["lo", "studio", "mostra", "che", "le", "famiglie", "adattarono", "loro", "strategie", "nel",
           "tempo", "mentre", "gli", "attori", "locali", "negoziavano", "nuove", "regole", "e", "questo",
           "schema", "resta", "visibile", "nelle", "fonti", "successive"],
}

_HEADINGS = {"en": "## References", "de": "## Literaturverzeichnis", "it": "## Bibliografia"}

CATEGORIES = ["Computer Science", "Medicine", "Economics", "Social Sciences**", "Arts and Humanities**",
              "Psychology", "History**", "Environmental Science"]


def _title(rng, lang, words=(3, 6)):
    n = rng.randint(*words)
    pool = _TITLE_WORDS[lang]
    parts = []
    for k in range(n):
        if k and k < n - 1 and rng.random() < 0.3:
            parts.append(rng.choice(_JOINERS[lang]))
        parts.append(rng.choice(pool))
    text = " ".join(parts)
    return text[0].upper() + text[1:]


def _person(rng, lang):
    surnames, forenames = _NAMES[lang]
    return rng.choice(surnames), rng.choice(forenames)


def _initials(forename):
    return " ".join(p[0] + "." for p in re.split(r"[ -]", forename) if p)


def _pages(rng):
    a = rng.randint(1, 400)
    return f"{a}-{a + rng.randint(5, 40)}"


def _ref_en_article(rng):
    people = [_person(rng, "en") for _ in range(rng.randint(1, 3))]
    names = [f"{s}, {_initials(f)}" for s, f in people]
    if len(names) == 1:
        author_text = names[0]
    else:
        author_text = ", ".join(names[:-1]) + ", & " + names[-1]
    year = str(rng.randint(1975, 2023))
    title = _title(rng, "en")
    journal = rng.choice(_JOURNALS["en"])
    vol, issue, pages = str(rng.randint(1, 80)), str(rng.randint(1, 6)), _pages(rng)
    doi = f"10.{rng.randint(1000, 9999)}/{rng.choice('abcdefghjk')}{rng.randint(10000, 99999)}"
    raw = f"{author_text} ({year}). {title}. {journal}, {vol}({issue}), {pages}. https://doi.org/{doi}"
    rec = dict(authors=names, year=year, full_title=title, container_title=journal, volume=vol, issue=issue,
               pages=pages, doi=doi)
    return raw, rec


def _ref_en_book(rng):
    s, f = _person(rng, "en")
    year = str(rng.randint(1960, 2023))
    title = _title(rng, "en", (3, 7))
    place, publisher = rng.choice(_PUBLISHERS["en"])
    raw = f"{s}, {f}. {year}. {title}. {place}: {publisher}."
    return raw, dict(authors=[f"{s}, {f}"], year=year, full_title=title, place=place, publisher=publisher)


def _ref_de_article(rng):
    s, f = _person(rng, "de")
    title = _title(rng, "de")
    journal = rng.choice(_JOURNALS["de"])
    vol, year, pages = str(rng.randint(1, 70)), str(rng.randint(1960, 2022)), _pages(rng)
    raw = f"{s}, {f}: {title}. In: {journal} {vol} ({year}), S. {pages}."
    return raw, dict(authors=[f"{s}, {f}"], full_title=title, container_title=journal, volume=vol, year=year,
                     pages=pages)


def _ref_de_book(rng):
    people = [_person(rng, "de") for _ in range(rng.randint(1, 2))]
    names = [f"{s}, {f}" for s, f in people]
    title = _title(rng, "de", (3, 7))
    place, publisher = rng.choice(_PUBLISHERS["de"])
    year = str(rng.randint(1950, 2022))
    raw = f"{'/'.join(names)}: {title}. {place}: {publisher} {year}."
    return raw, dict(authors=names, full_title=title, place=place, publisher=publisher, year=year)


def _ref_de_chapter(rng):
    s, f = _person(rng, "de")
    es, ef = _person(rng, "de")
    title = _title(rng, "de")
    book = _title(rng, "de", (2, 4))
    place, _ = rng.choice(_PUBLISHERS["de"])
    year, pages = str(rng.randint(1960, 2022)), _pages(rng)
    raw = f"{s}, {f}: {title}. In: {es}, {ef} (Hrsg.): {book}. {place} {year}, S. {pages}."
    return raw, dict(authors=[f"{s}, {f}"], full_title=title, editors=[f"{es}, {ef}"], container_title=book,
                     place=place, year=year, pages=pages)


def _ref_it_book(rng):
    s, f = _person(rng, "it")
    title = _title(rng, "it", (3, 7))
    place, publisher = rng.choice(_PUBLISHERS["it"])
    year, pages = str(rng.randint(1880, 2015)), _pages(rng)
    raw = f"{_initials(f)} {s}, {title}, {place}, {publisher}, {year}, pp. {pages}."
    return raw, dict(authors=[f"{s}, {_initials(f)}"], full_title=title, place=place, publisher=publisher,
                     year=year, pages=pages)


def _ref_it_article(rng):
    s, f = _person(rng, "it")
    title = _title(rng, "it")
    journal = rng.choice(_JOURNALS["it"])
    vol, year, pages = str(rng.randint(1, 60)), str(rng.randint(1900, 2015)), _pages(rng)
    raw = f"{_initials(f)} {s}, {title}, «{journal}», {vol} ({year}), pp. {pages}."
    return raw, dict(authors=[f"{s}, {_initials(f)}"], full_title=title, container_title=journal, volume=vol,
                     year=year, pages=pages)


_STYLES = {
    "en": [_ref_en_article, _ref_en_article, _ref_en_book],
    "de": [_ref_de_article, _ref_de_book, _ref_de_chapter],
    "it": [_ref_it_book, _ref_it_article],
}


def _backref(rng, lang, previous):
    page = str(rng.randint(2, 480))
    if lang == "it":
        return f"Ibid., p. {page}.", dict(pages=page)
    if previous and rng.random() < 0.5:
        surname = previous["authors"][0].split(",")[0] if previous.get("authors") else None
        if surname:
            return f"{surname}, a.a.O., S. {page}.", dict(authors=[surname], pages=page)
    return f"Ebd., S. {page}.", dict(pages=page)


def _paragraph(rng, lang, chars):
    words = _FILLER[lang]
    out = []
    length = 0
    while length < chars:
        sentence = " ".join(rng.choice(words) for _ in range(rng.randint(8, 15)))
        sentence = sentence[0].upper() + sentence[1:] + "."
        out.append(sentence)
        length += len(sentence) + 1
    return " ".join(out)


def _body_page(rng, lang, k):
    return f"## {k}\n\n" + _paragraph(rng, lang, rng.randint(900, 1300))


def _full_refs(rng, lang, n, used):
    refs = []
    while len(refs) < n:
        raw, rec = rng.choice(_STYLES[lang])(rng)
        if raw in used:
            continue
        used.add(raw)
        refs.append((raw, rec))
    return refs


def _footnote_refs(rng, lang, n, used):
    """Full references interleaved with back-references to earlier ones."""
    refs = []
    previous = None
    while len(refs) < n:
        if previous is not None and rng.random() < 0.35:
            raw, rec = _backref(rng, lang, previous)
        else:
            raw, rec = rng.choice(_STYLES[lang])(rng)
            previous = rec
        if raw in used:
            continue
        used.add(raw)
        refs.append((raw, rec))
    return refs


def _footnote_page(rng, lang, k, refs, first_number):
    body = _paragraph(rng, lang, rng.randint(500, 800))
    marks = " ".join(f"[^{first_number + i}]" for i in range(len(refs)))
    notes = "\n".join(f"[^{first_number + i}]: {raw}" for i, (raw, _) in enumerate(refs))
    return f"## {k}\n\n{body} {marks}\n\n---\n\n{notes}"


def _bibliography_page(lang, refs, heading=True):
    head = _HEADINGS[lang] + "\n\n" if heading else ""
    return head + "\n\n".join(raw for raw, _ in refs)


def _document(rng, doc_id, lang, citation_class, category, used):
    pages: list[str] = []
    ordered: list[tuple[str, dict]] = []
    if citation_class == 1:
        refs = _full_refs(rng, lang, rng.randint(10, 14), used)
        pages = [_body_page(rng, lang, k) for k in range(1, 9)]
        half = len(refs) // 2
        pages.append(_bibliography_page(lang, refs[:half]))
        pages.append(_bibliography_page(lang, refs[half:], heading=False))
        ordered = refs
    else:
        n_pages = 12
        if citation_class == 2:
            note_pages = sorted(rng.sample(range(1, n_pages + 1), 3))
            bib = []
        else:
            note_pages = sorted(rng.sample(range(1, n_pages), 2))
            bib = _full_refs(rng, lang, rng.randint(5, 6), used)
        number = 1
        for k in range(1, n_pages + 1):
            if k in note_pages:
                refs = _footnote_refs(rng, lang, rng.randint(3, 5), used)
                pages.append(_footnote_page(rng, lang, k, refs, number))
                number += len(refs)
                ordered.extend(refs)
            elif citation_class == 3 and k == n_pages:
                pages.append(_bibliography_page(lang, bib))
                ordered.extend(bib)
            else:
                pages.append(_body_page(rng, lang, k))
    markdown = PAGE_BREAK.join(pages) + "\n"
    return DocumentGold(
        doc_id=doc_id,
        markdown=markdown,
        language=lang,
        citation_class=citation_class,
        category=category,
        gold_strings=[raw for raw, _ in ordered],
        gold_records=[ReferenceRecord.from_dict(rec) for _, rec in ordered],
    )


# (language, citation class, count)
LAYOUT = [("en", 1, 6), ("de", 1, 6), ("de", 2, 5), ("de", 3, 4), ("it", 2, 2), ("it", 3, 1)]


def generate_corpus(seed: int = 13) -> list[DocumentGold]:
    rng = random.Random(seed)
    used: set[str] = set()
    docs = []
    k = 0
    for lang, cls, count in LAYOUT:
        for _ in range(count):
            category = CATEGORIES[k % len(CATEGORIES)]
            docs.append(_document(rng, f"syn-{k:03d}", lang, cls, category, used))
            k += 1
    return docs


def reference_gold(docs: list[DocumentGold]) -> list[ReferenceGold]:
    refs = []
    for d in docs:
        for i, (raw, rec) in enumerate(zip(d.gold_strings, d.gold_records)):
            labels = {"citation_class": d.citation_class}
            if d.category:
                labels["category"] = d.category
            refs.append(ReferenceGold(f"{d.doc_id}-r{i:03d}", raw, rec, d.doc_id, d.language, labels))
    return refs


def fake_pdf_bytes(doc_id: str) -> bytes:
    return b"%PDF-1.4\n% SYNTHETIC-DOC:" + doc_id.encode() + b":END\n%%EOF\n"


def write_fake_pdfs(docs: list[DocumentGold], directory) -> None:
    """Write placeholder PDFs the mock GROBID server recognizes and set pdf_path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for d in docs:
        path = directory / f"{d.doc_id}.pdf"
        path.write_bytes(fake_pdf_bytes(d.doc_id))
        d.pdf_path = str(path)


# --- offline service doubles ---------------------------------------------

class GoldOracle:
    """Chat backend that answers every prompt with the gold-derived output.

    Extraction prompts get the gold strings found verbatim in the payload, in
    payload order; parsing prompts get the gold record of each input string.
    """

    def __init__(self, pairs, name: str = "gold-oracle"):
        self.name = name
        self.records: dict[str, dict] = {}
        for raw, record in pairs:
            self.records.setdefault(raw, record.to_dict(include_raw=False))
        self._by_length = sorted(self.records, key=len, reverse=True)
        self.calls = 0

    @classmethod
    def from_documents(cls, docs, name="gold-oracle"):
        return cls(((s, r) for d in docs for s, r in zip(d.gold_strings, d.gold_records)), name)

    def find(self, text: str) -> list[str]:
        hits = []
        for raw in self._by_length:
            start = text.find(raw)
            while start != -1:
                hits.append((start, -len(raw), raw))
                start = text.find(raw, start + 1)
        hits.sort()
        found, end = [], -1
        for start, neg_len, raw in hits:
            if start >= end:
                found.append(raw)
                end = start - neg_len
        return found

    def answer(self, task: str, payload: str):
        if task == "extract":
            return self.find(payload)
        if task == "e2e":
            return [self.records[s] for s in self.find(payload)]
        if task == "parse":
            return self.records.get(payload, {})
        if task == "parse_group":
            lines = [re.sub(r"^\d+\. ", "", line) for line in payload.split("\n")]
            return [self.records.get(line, {}) for line in lines]
        raise ValueError(task)

    def complete(self, prompt: str, gen=None) -> str:
        self.calls += 1
        task, payload = split_prompt(prompt)
        return json.dumps(self.answer(task, payload), ensure_ascii=False)


class GoldAwareEmbedder:
    """Deterministic stub: a chunk's vector leans towards the query direction in
    proportion to the number of gold references it contains."""

    def __init__(self, gold_strings, name: str = "gold-aware"):
        self.gold = sorted(set(gold_strings), key=len, reverse=True)
        self.name = name

    def embed(self, texts, instruction: str = ""):
        out = []
        for text in texts:
            if instruction:
                v = np.array([1.0, 0.0])
            else:
                hits = sum(text.count(g) for g in self.gold)
                v = np.array([float(hits), 0.05])
            out.append(v / np.linalg.norm(v))
        return out


def grobid_mock_transport(docs: list[DocumentGold], fail_status: int | None = None) -> httpx.MockTransport:
    """A GROBID stand-in that answers with gold records serialized as TEI."""
    by_raw = {}
    by_doc = {}
    for d in docs:
        for s, r in zip(d.gold_strings, d.gold_records):
            rec = ReferenceRecord.from_dict({**r.to_dict(include_raw=False), "raw": s})
            by_raw.setdefault(s, rec)
        by_doc[d.doc_id] = [
            ReferenceRecord.from_dict({**r.to_dict(include_raw=False), "raw": s})
            for s, r in zip(d.gold_strings, d.gold_records)
        ]

    def handler(request: httpx.Request) -> httpx.Response:
        if fail_status:
            return httpx.Response(fail_status, text="service unavailable")
        if request.url.path == "/api/processCitationList":
            from urllib.parse import parse_qs

            form = parse_qs(request.content.decode("utf-8"))
            records = [by_raw.get(c, ReferenceRecord(raw=c)) for c in form.get("citations", [])]
            return httpx.Response(200, text=records_to_tei(records))
        if request.url.path == "/api/processFulltextDocument":
            m = re.search(rb"SYNTHETIC-DOC:(.+?):END", request.content)
            if not m:
                return httpx.Response(500, text="[BAD_INPUT_DATA] not a PDF")
            return httpx.Response(200, text=records_to_tei(by_doc[m.group(1).decode()], fulltext=True))
        return httpx.Response(404)

    return httpx.MockTransport(handler)


DATA_DIR = Path(__file__).parent / "data"
DOCS_FILE = "synthetic_docs.jsonl"
REFS_FILE = "synthetic_refs.jsonl"


def write_corpus(directory=DATA_DIR, seed: int = 13) -> tuple[Path, Path]:
    """Regenerate the bundled corpus files."""
    from refbench.corpus import write_jsonl

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    docs = generate_corpus(seed)
    write_jsonl(directory / DOCS_FILE, docs)
    write_jsonl(directory / REFS_FILE, reference_gold(docs))
    return directory / DOCS_FILE, directory / REFS_FILE


def load_bundled() -> tuple[list[DocumentGold], list[ReferenceGold]]:
    from refbench.corpus import load_document_gold, load_reference_gold

    docs = list(load_document_gold(DATA_DIR / DOCS_FILE, strict=True))
    refs = list(load_reference_gold(DATA_DIR / REFS_FILE, strict=True))
    return docs, refs


if __name__ == "__main__":
    for path in write_corpus():
        print(path)
