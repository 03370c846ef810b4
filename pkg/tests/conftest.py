import sys
from pathlib import Path

import pytest

from visionreader.data import QARecord
from visionreader.forge import generate_qa, load_templates
from visionreader.synthetic import SyntheticFeatureProvider, synthetic_books

HERE = Path(__file__).parent
FIXTURES = HERE / "fixtures"
sys.path.insert(0, str(HERE / "oracles"))

PRIMARY = ("title", "author", "publisher", "translator")

_acceptance_results: dict[int, tuple[str, str]] = {}


def synthetic_corpus(n_books, seed=0, split="train", categories=PRIMARY, provider=None, translator_rate=0.5):
    """Books, QA records and feature bundles from the synthetic generator."""
    provider = provider or SyntheticFeatureProvider(seed=seed)
    books = synthetic_books(n_books, seed=seed, translator_rate=translator_rate)
    bank = load_templates()
    records = []
    for b in books:
        records.extend(generate_qa(b, bank, seed, categories=categories, split=split))
    bundles = {b.image_id: provider.for_metadata(b) for b in books}
    return books, records, bundles


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    if report.when != "call" and not report.failed:
        return
    prev = _acceptance_results.get(number)
    if prev and prev[0] == "FAIL":
        return
    status = "FAIL" if report.failed else "SKIP" if report.skipped else "PASS"
    if prev is None or status == "FAIL":
        _acceptance_results[number] = (status, title)

def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_acceptance_results):
        status, title = _acceptance_results[number]
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {title}")
