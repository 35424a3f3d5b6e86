import numpy as np
import pytest

from msfeat.datasets import SynthSpec, synth_images

# acceptance outcomes, printed together at the end of the session
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])


@pytest.fixture
def report():
    """Record and print one pass/fail line for an acceptance criterion."""

    def _report(n, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'} criterion {n}: {detail}"
        ACCEPTANCE[n] = line
        print(line)
        return passed

    return _report


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def tiny_corpus():
    """Small 4-class synthetic corpus shared by pipeline-level unit tests."""
    spec = SynthSpec(n_train=6, n_test=6, side=24, seed=3)
    return synth_images(spec)
