"""GROBID output is TEI XML; the harness maps it onto the same record schema.

This demo uses an in-process stand-in for the GROBID server. Point a profile
at a real server (e.g. http://localhost:8070) to run the same code live.
"""

import tempfile

from refbench.backends import BackendProfile, GrobidBackend
from refbench.corpus import import_tei
from refbench.pipeline import Pipeline
from refbench.report import build_report
from refbench.synthetic import grobid_mock_transport, load_bundled, write_fake_pdfs

docs, refs = load_bundled()
write_fake_pdfs(docs, tempfile.mkdtemp(prefix="refbench-pdf-"))
profile = BackendProfile("grobid", "grobid", "http://grobid.local")
grobid = GrobidBackend(profile, transport=grobid_mock_transport(docs))

tei = grobid.parse_citations([refs[0].raw])
print(tei[:400], "...\n")
for raw, record in import_tei(tei):
    print("raw:   ", raw)
    print("record:", record.to_dict(include_raw=False), "\n")

pipeline = Pipeline(grobid=grobid)
for task, items in (("parse", refs), ("e2e", docs)):
    outputs, _ = pipeline.run(task, "grobid", items)
    m = build_report(task, items, outputs)["rows"][0]["metrics"]
    print(f"grobid {task}: microF1={m['micro_f1']:.4f} macroF1={m['macro_f1']:.4f}")
