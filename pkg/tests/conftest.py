import pytest

from mdiqn.gaintable import ingest_gain_table
from mdiqn.model import default_protocol


@pytest.fixture(scope="session")
def protocol():
    return default_protocol()


@pytest.fixture(scope="session")
def bundled():
    return ingest_gain_table("bundled")


@pytest.fixture(scope="session")
def ab_tally(bundled):
    return next(r.tally for r in bundled if r.label == "AB-1")


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None)
    verdicts = getattr(mod, "VERDICTS", None)
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for n in sorted(verdicts):
            terminalreporter.write_line(verdicts[n])
