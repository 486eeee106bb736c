import shutil
from pathlib import Path

import pytest

DATA = Path(__file__).parent / "data"


@pytest.fixture()
def data_dir(tmp_path):
    """Private copy of the small fixture corpus; safe to mutate."""
    dst = tmp_path / "data"
    shutil.copytree(DATA, dst)
    return dst


@pytest.fixture(scope="session")
def shared_data_dir(tmp_path_factory):
    """Read-only session copy for tests that never write into it."""
    dst = tmp_path_factory.mktemp("fixture") / "data"
    shutil.copytree(DATA, dst)
    return dst


@pytest.fixture(scope="session")
def paper_scale(tmp_path_factory):
    """Replication-sized corpus: (root_dir, expected-numbers dict)."""
    from fixtures_paper_scale import generate

    root = tmp_path_factory.mktemp("paper_scale")
    expected = generate(root)
    return root, expected


@pytest.fixture(scope="session")
def paper_scale_run(paper_scale):
    """One full pipeline pass over the replication-sized corpus."""
    from termweave.pipeline import load_manifest, run_pipeline

    root, expected = paper_scale
    result = run_pipeline(load_manifest(root / "manifest.json"))
    return root, expected, result


# One PASS/FAIL/SKIP line per acceptance criterion at the end of the run.

_acceptance: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call":
        _acceptance[name] = {"passed": "PASS", "failed": "FAIL",
                             "skipped": "SKIP"}[report.outcome]
    elif report.when == "setup" and report.outcome in ("failed", "skipped"):
        _acceptance[name] = "SKIP" if report.outcome == "skipped" else "FAIL"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, status in _acceptance.items():
        terminalreporter.write_line(f"[ACCEPTANCE] {name}: {status}")
