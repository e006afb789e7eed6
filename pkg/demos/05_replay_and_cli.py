"""Record model answers once, then benchmark reproducibly through the CLI.

The replay cache is content-addressed by (profile, operation, payload), so a
replay run never touches the network and gives byte-identical predictions.
"""

import tempfile
from pathlib import Path

from refbench import cli
from refbench.pipeline import Pipeline
from refbench.replay import ReplayBackend, ReplayStore
from refbench.synthetic import DATA_DIR, DOCS_FILE, GoldOracle, load_bundled

docs, _ = load_bundled()
work = Path(tempfile.mkdtemp(prefix="refbench-demo-"))

# 1. record: wrap a live backend (here the offline oracle) in a recording replay backend
recorder = ReplayBackend(ReplayStore(work / "cache"), "oracle", GoldOracle.from_documents(docs))
Pipeline(recorder).run("e2e", "single_call", docs)

# 2. replay through the command line
config = work / "refbench.yaml"
config.write_text(f"cache_dir: {work / 'cache'}\ndataset: synthetic\nprofiles:\n  oracle: {{kind: replay, serves: chat_llm}}\n")
gold = str(DATA_DIR / DOCS_FILE)
cli.main(["run", "--task", "e2e", "--backend", "oracle", "--config", str(config), "--input", gold,
          "--out", str(work / "run")])
cli.main(["score", "--gold", gold, "--pred", str(work / "run" / "predictions.jsonl"),
          "--out", str(work / "report.json"), "--breakdown", "citation_class,language,abbreviated_backref",
          "--config", str(config)])
cli.main(["report", str(work / "report.json"), "--format", "md"])
print(f"artifacts in {work}")
