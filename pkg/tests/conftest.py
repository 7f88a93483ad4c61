import numpy as np
import pytest

from buildevo.evaluation import make_windows
from buildevo.synthetic import make_synthetic_dataset


@pytest.fixture(scope="session")
def synth():
    return make_synthetic_dataset(seed=0)


@pytest.fixture(scope="session")
def split(synth):
    return make_windows(synth)


@pytest.fixture(scope="session")
def windows(split):
    return split.train


@pytest.fixture(scope="session")
def metadata(synth):
    return synth.metadata_index


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        label, ok, detail = RESULTS[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n:2d}. {label}: {detail}")
