import os
from pathlib import Path

import numpy as np
import pytest

from chromabin import _backend
from chromabin.imagery import PlanarImage

# criterion id -> (text, statuses of every parametrized run)
ACCEPTANCE_RESULTS: dict[int, tuple[str, list[str]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(id, text): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.skipped):
        status = "SKIP" if report.skipped else ("PASS" if report.passed else "FAIL")
        cid, text = marker.args
        ACCEPTANCE_RESULTS.setdefault(cid, (text, []))[1].append(status)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for cid, (text, statuses) in sorted(ACCEPTANCE_RESULTS.items()):
        if "FAIL" in statuses:
            status = "FAIL"
        elif "PASS" in statuses:
            status = "PASS"
        else:
            status = "SKIP"
        terminalreporter.write_line(f"[{status}] criterion {cid}: {text}")


@pytest.fixture(params=_backend.available())
def backend(request):
    """Run the test once per importable kernel backend."""
    previous = _backend.use(request.param)
    yield request.param
    _backend.use(previous)


@pytest.fixture(scope="session")
def astronaut() -> PlanarImage:
    data = pytest.importorskip("skimage.data")
    return PlanarImage.from_array(data.astronaut())


@pytest.fixture(scope="session")
def coffee() -> PlanarImage:
    data = pytest.importorskip("skimage.data")
    return PlanarImage.from_array(data.coffee())


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture(scope="session")
def oxford_root():
    root = os.environ.get("CHROMABIN_OXFORD_ROOT")
    if not root or not Path(root).is_dir():
        pytest.skip("Oxford dataset not available (set CHROMABIN_OXFORD_ROOT)")
    return Path(root)
