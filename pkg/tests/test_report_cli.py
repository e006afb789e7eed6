import json
from pathlib import Path

import pytest

from refbench import cli
from refbench.pipeline import Pipeline, write_predictions
from refbench.replay import ReplayBackend, ReplayStore
from refbench.report import build_report, render_table
from refbench.synthetic import DATA_DIR, DOCS_FILE, REFS_FILE, GoldOracle

DOCS = str(DATA_DIR / DOCS_FILE)
REFS = str(DATA_DIR / REFS_FILE)
GOLDEN = Path(__file__).parent / "data" / "golden_report.md"


@pytest.fixture
def replay_setup(tmp_path, bundled):
    """A config with a replay profile whose cache holds gold-faithful answers."""
    docs, refs = bundled
    cache = tmp_path / "cache"
    recorder = Pipeline(ReplayBackend(ReplayStore(cache), "oracle", GoldOracle.from_documents(docs)))
    recorder.run("e2e", "single_call", docs)
    recorder.run("extract", "single_call", docs)
    recorder.run("parse", "single_call", refs)
    config = tmp_path / "refbench.yaml"
    config.write_text(
        f"cache_dir: {cache}\n"
        "dataset: synthetic\n"
        "profiles:\n"
        "  oracle: {kind: replay, serves: chat_llm}\n"
        "thresholds: {correct_min: 0.95, major_below: 0.60}\n",
        encoding="utf-8",
    )
    return config


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_run_score_report_identity(tmp_path, replay_setup):
    out = tmp_path / "run"
    assert run("run", "--task", "e2e", "--backend", "oracle", "--config", replay_setup, "--input", DOCS,
               "--out", out) == 0
    assert (out / "predictions.jsonl").exists() and (out / "manifest.json").exists()
    report_path = tmp_path / "r.json"
    assert run("score", "--gold", DOCS, "--pred", out / "predictions.jsonl", "--out", report_path,
               "--breakdown", "citation_class,language", "--config", replay_setup) == 0
    row = json.loads(report_path.read_text())["rows"][0]
    m = row["metrics"]
    assert (m["precision"], m["recall"], m["micro_f1"], m["macro_f1"]) == (1.0, 1.0, 1.0, 1.0)
    assert row["backend"] == "oracle" and row["strategy"] == "single_call" and row["manifest_hash"]
    assert sorted(row["breakdowns"]["citation_class"]) == ["1", "2", "3"]
    assert report_path.with_suffix(".csv").read_text().startswith("Dataset,Task,Strategy,Backend,P,R,")
    table = tmp_path / "t.md"
    assert run("report", report_path, "--format", "md", "--out", table) == 0
    assert len(table.read_text().splitlines()) == 3


def test_scoring_twice_is_byte_identical(tmp_path, replay_setup):
    out = tmp_path / "run"
    run("run", "--task", "parse", "--backend", "oracle", "--config", replay_setup, "--input", REFS, "--out", out)
    for name in ("a.json", "b.json"):
        assert run("score", "--gold", REFS, "--pred", out / "predictions.jsonl", "--out", tmp_path / name) == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_unknown_backend_exit_2_and_no_output(tmp_path, replay_setup):
    out = tmp_path / "run"
    assert run("run", "--task", "e2e", "--backend", "missing", "--config", replay_setup, "--input", DOCS,
               "--out", out) == 2
    assert not out.exists()


def test_unreadable_input_exit_3(tmp_path, replay_setup):
    assert run("run", "--task", "e2e", "--backend", "oracle", "--config", replay_setup, "--input",
               tmp_path / "nope.jsonl", "--out", tmp_path / "run") == 3


def test_replay_miss_is_operator_error(tmp_path, replay_setup):
    assert run("run", "--task", "extract", "--strategy", "per-page", "--backend", "oracle", "--config",
               replay_setup, "--input", DOCS, "--out", tmp_path / "run") == 2


def test_secret_in_config_rejected(tmp_path):
    config = tmp_path / "c.yaml"
    config.write_text("profiles:\n  q: {kind: chat_llm, endpoint: 'http://x', api_key: sk}\n")
    assert run("run", "--task", "e2e", "--backend", "q", "--config", config, "--input", DOCS,
               "--out", tmp_path / "o") == 2


def test_score_unknown_id_exit_2(tmp_path):
    pred = tmp_path / "p.jsonl"
    pred.write_text(json.dumps({"doc_id": "not-in-gold", "predictions": [], "failures": []}) + "\n")
    assert run("score", "--task", "extract", "--gold", DOCS, "--pred", pred, "--out", tmp_path / "r.json") == 2


def test_report_mixed_versions_exit_2(tmp_path):
    for name, version in (("a.json", 1), ("b.json", 2)):
        (tmp_path / name).write_text(json.dumps({"format_version": version, "rows": []}))
    assert run("report", tmp_path / "a.json", tmp_path / "b.json") == 2


def _fixture_reports(bundled):
    docs, refs = bundled
    oracle = GoldOracle.from_documents(docs)
    reports = []
    for task, strategy, gold in (("extract", "per_page", docs), ("parse", "single_call", refs),
                                 ("e2e", "two_step", docs)):
        outputs, _ = Pipeline(oracle).run(task, strategy, gold)
        reports.append(build_report(task, gold, outputs, dataset="synthetic", strategy=strategy,
                                    backend="gold-oracle", runtime_s=1.5))
    return reports


def test_md_table_matches_golden(bundled):
    assert render_table(_fixture_reports(bundled), "md") == GOLDEN.read_text(encoding="utf-8")


def test_table_columns_and_formats(bundled):
    reports = _fixture_reports(bundled)
    rows = json.loads(render_table(reports, "json"))
    assert list(rows[0]) == ["Dataset", "Task", "Strategy", "Backend", "P", "R", "MicroF1", "MacroF1", "Fail",
                             "Runtime_s", "AvgSim"]
    assert rows[0]["AvgSim"] == "1.0000" and rows[1]["AvgSim"] == ""
    assert render_table(reports[:1], "csv").count("\n") == 2


def test_predictions_written_by_cli_are_readable(tmp_path, bundled):
    docs, _ = bundled
    outputs, _ = Pipeline(GoldOracle.from_documents(docs)).run("extract", "single_call", docs)
    write_predictions(tmp_path / "p.jsonl", outputs, "extract")
    assert run("score", "--task", "extract", "--gold", DOCS, "--pred", tmp_path / "p.jsonl",
               "--out", tmp_path / "r.json") == 0
    row = json.loads((tmp_path / "r.json").read_text())["rows"][0]
    assert row["extraction"]["avg_sim"] == 1.0 and row["dataset"] == "synthetic_docs"
