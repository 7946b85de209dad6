import pytest

from voipqos.backend import AVAILABLE
from voipqos.scenario import two_site_topology


@pytest.fixture(scope="session")
def short_cfg():
    """Default topology trimmed to 20 s so the Python backend stays quick."""
    return two_site_topology(duration_s=20.0)


requires_compiled = pytest.mark.skipif("cython" not in AVAILABLE, reason="compiled kernel not built")


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
