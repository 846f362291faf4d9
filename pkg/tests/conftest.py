from __future__ import annotations

import pytest


@pytest.fixture(autouse=True, scope="session")
def _isolated_cache(tmp_path_factory):
    # oracle values computed during the run must not leak into ~/.cache
    mp = pytest.MonkeyPatch()
    mp.setenv("VWA_CACHE_DIR", str(tmp_path_factory.mktemp("vwa-cache")))
    yield
    mp.undo()


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
