"""Running every task and strategy offline on the bundled synthetic corpus.

A gold-faithful oracle plays the language model and a gold-aware stub plays
the embedding service. Any deviation from a perfect score would therefore be
a harness bug, not a model error.
"""

from refbench.pipeline import Pipeline, VALID_COMBINATIONS
from refbench.report import build_report
from refbench.synthetic import GoldAwareEmbedder, GoldOracle, load_bundled

docs, refs = load_bundled()
print(f"{len(docs)} documents, {len(refs)} references")

oracle = GoldOracle.from_documents(docs)
embedder = GoldAwareEmbedder([s for d in docs for s in d.gold_strings])
pipeline = Pipeline(oracle, embedder=embedder)

for task, strategies in VALID_COMBINATIONS.items():
    for strategy in strategies:
        if strategy == "grobid":
            continue  # see 06_grobid_tei.py
        items = refs if task == "parse" else docs
        outputs, manifest = pipeline.run(task, strategy, items)
        m = build_report(task, items, outputs)["rows"][0]["metrics"]
        line = f"{task:8} {strategy:19} microF1={m['micro_f1']:.4f} failures={len(manifest.failures)}"
        if manifest.tokens:
            selected = sum(v["selected"] for v in manifest.tokens.values())
            total = sum(v["total"] for v in manifest.tokens.values())
            line += f" tokens sent={selected / total:.1%}"
        print(line)
print(f"oracle answered {oracle.calls} prompts")
