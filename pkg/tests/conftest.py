import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_model_arrays(rng, K):
    pi = rng.dirichlet(np.ones(K))
    a = rng.dirichlet(np.ones(K), size=K)
    return pi, a


# one summary line per acceptance criterion, whatever the verbosity
_ACCEPTANCE = []


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" in report.nodeid:
        if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
            _ACCEPTANCE.append((report.nodeid.split("::")[-1], report.outcome, report.duration))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, duration in _ACCEPTANCE:
        num, label = name[len("test_criterion_"):].split("_", 1)
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {num}: {verdict}  {label.replace('_', ' ')}  ({duration:.1f} s)")
