import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from refbench.backends import BackendProfile, GrobidBackend  # noqa: E402
from refbench.synthetic import (  # noqa: E402
    GoldAwareEmbedder,
    GoldOracle,
    grobid_mock_transport,
    load_bundled,
    write_fake_pdfs,
)


@pytest.fixture(scope="session")
def bundled():
    return load_bundled()


@pytest.fixture
def docs(bundled):
    # fresh copies: some tests set pdf_path
    from copy import deepcopy

    return deepcopy(bundled[0])


@pytest.fixture
def refs(bundled):
    return list(bundled[1])


@pytest.fixture
def oracle(bundled):
    return GoldOracle.from_documents(bundled[0])


@pytest.fixture
def embedder(bundled):
    return GoldAwareEmbedder([s for d in bundled[0] for s in d.gold_strings])


@pytest.fixture
def grobid(docs, tmp_path):
    write_fake_pdfs(docs, tmp_path / "pdf")
    profile = BackendProfile("grobid", "grobid", "http://grobid.test", max_attempts=1)
    return GrobidBackend(profile, grobid_mock_transport(docs))


# one summary line per acceptance criterion
_CRITERIA: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, text): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    key = marker.args[0]
    state = "PASS"
    if report.skipped:
        state = "SKIP"
    elif report.failed:
        state = "FAIL"
    elif report.when != "call":
        return
    previous = _CRITERIA.get(key, (None, None))[0]
    if previous == "FAIL":
        return
    _CRITERIA[key] = (state, marker.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA):
        state, text = _CRITERIA[key]
        terminalreporter.write_line(f"criterion {key}: {state} - {text}")
