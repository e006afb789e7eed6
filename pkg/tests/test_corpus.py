import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from refbench.corpus import (
    import_tei,
    is_abbreviated_backref,
    join_pages,
    load_document_gold,
    load_reference_gold,
    page_split,
    records_to_tei,
)
from refbench.errors import FormatError
from refbench.schema import ReferenceRecord


def _write(path, lines):
    path.write_text("".join(json.dumps(line) + "\n" for line in lines), encoding="utf-8")
    return path


def test_load_documents_in_order(tmp_path):
    p = _write(tmp_path / "d.jsonl", [
        {"doc_id": "a", "markdown": "x", "references": [{"raw": "Ebd."}]},
        {"doc_id": "b", "markdown": "y", "citation_class": "footnote_only"},
    ])
    docs = list(load_document_gold(p))
    assert [d.doc_id for d in docs] == ["a", "b"]
    assert docs[0].gold_strings == ["Ebd."] and docs[0].backref_flags == [True]
    assert docs[1].citation_class == 2


def test_missing_doc_id_strict(tmp_path):
    p = _write(tmp_path / "d.jsonl", [{"markdown": "x"}])
    with pytest.raises(FormatError) as info:
        list(load_document_gold(p, strict=True))
    assert info.value.line == 1
    assert list(load_document_gold(p)) == []


def test_reference_loader(tmp_path):
    assert list(load_reference_gold(_write(tmp_path / "e.jsonl", []))) == []
    dup = _write(tmp_path / "r.jsonl", [{"ref_id": "x", "raw": "A"}, {"ref_id": "x", "raw": "B"}])
    with pytest.raises(FormatError):
        list(load_reference_gold(dup, strict=True))


def _shaped_lines(n_docs, n_refs):
    per, extra = divmod(n_refs, n_docs)
    for k in range(n_docs):
        count = per + (1 if k < extra else 0)
        refs = [{"raw": f"Author {k}-{i}. Title {i}. 2001.", "record": {"year": "2001"}} for i in range(count)]
        yield {"doc_id": f"doc{k}", "markdown": "text", "references": refs}


def test_cex_shaped_corpus_counts(tmp_path):
    p = _write(tmp_path / "cex.jsonl", list(_shaped_lines(112, 5160)))
    docs = list(load_document_gold(p, strict=True))
    assert len(docs) == 112
    assert sum(len(d.gold_strings) for d in docs) == 5160


def test_linkedbooks_shaped_split(tmp_path):
    lines = [{"ref_id": f"lb{i}", "raw": f"G. Cozzi, Titolo {i}, Torino, 1982.", "language": "it"} for i in range(1194)]
    assert len(list(load_reference_gold(_write(tmp_path / "lb.jsonl", lines), strict=True))) == 1194


@pytest.mark.parametrize(
    "raw, flag",
    [("Ebd., S. 12.", True), ("ebenda", True), ("Weber, a.a.O., S. 3.", True), ("Ibid., p. 4.", True),
     ("Weber, Max: Wirtschaft und Gesellschaft. Tübingen 1922.", False), ("Ebdon, J. (1990). Title.", False)],
)
def test_backref_flag(raw, flag):
    assert is_abbreviated_backref(raw) is flag


TEI = """<TEI xmlns="http://www.tei-c.org/ns/1.0"><text><back><div><listBibl>
<biblStruct>
  <analytic><title level="a">What is data ethics?</title>
    <author><persName><forename>L.</forename><surname>Floridi</surname></persName></author>
    <author><persName><forename>M.</forename><surname>Taddeo</surname></persName></author></analytic>
  <monogr><title level="j">Philosophical Transactions A</title>
    <imprint><biblScope unit="volume">374</biblScope><biblScope unit="page" from="1" to="9"/>
    <date type="published" when="2016-12-28"/></imprint></monogr>
  <idno type="DOI">10.1098/rsta.2016.0360</idno>
  <note type="raw_reference">Floridi, L., &amp; Taddeo, M. (2016). What is data ethics?</note>
</biblStruct>
<biblStruct><monogr><title>Wirtschaft und Gesellschaft</title>
  <author><persName><forename>Max</forename><surname>Weber</surname></persName></author>
  <imprint><publisher>Mohr</publisher><pubPlace>Tübingen</pubPlace><date when="1998-05"/></imprint></monogr>
</biblStruct>
</listBibl></div></back></text></TEI>"""


def test_import_tei_mapping():
    (raw1, r1), (_, r2) = import_tei(TEI)
    assert raw1.startswith("Floridi, L., & Taddeo")
    assert r1.full_title == "What is data ethics?" and r1.container_title == "Philosophical Transactions A"
    assert r1.authors == ["Floridi, L.", "Taddeo, M."]
    assert (r1.volume, r1.pages, r1.year, r1.doi) == ("374", "1-9", "2016", "10.1098/rsta.2016.0360")
    assert r2.full_title == "Wirtschaft und Gesellschaft" and r2.container_title is None
    assert (r2.year, r2.place, r2.publisher) == ("1998", "Tübingen", "Mohr")


def test_import_tei_empty_and_invalid():
    assert import_tei("<TEI><text><listBibl/></text></TEI>") == []
    with pytest.raises(FormatError):
        import_tei("<TEI><unclosed>")


def test_tei_round_trip_on_bundled_corpus(bundled):
    docs, _ = bundled
    for d in docs:
        records = [ReferenceRecord.from_dict({**r.to_dict(False), "raw": s})
                   for s, r in zip(d.gold_strings, d.gold_records)]
        back = import_tei(records_to_tei(records, fulltext=True))
        assert [raw for raw, _ in back] == d.gold_strings
        assert [r.to_dict(False) for _, r in back] == [r.to_dict(False) for r in d.gold_records]


def test_page_split_examples():
    assert [p.text for p in page_split("a\n\x0c\nb")] == ["a", "b"]
    assert [p.index for p in page_split("a\n\x0c\nb")] == [1, 2]
    assert [p.text for p in page_split("just text")] == ["just text"]
    assert [p.text for p in page_split("a\n\x0c\nb\n\x0c\n")] == ["a", "b"]


page_text = st.text(alphabet=st.sampled_from("ab \n\x0c"), max_size=30)


@given(page_text)
def test_page_split_round_trip(s):
    pages = page_split(s)
    assert join_pages(pages) == s
    assert all(s[p.offset : p.offset + len(p.text)] == p.text for p in pages)
    assert [p.index for p in pages] == list(range(1, len(pages) + 1))
