import numpy as np
import pytest

from dpgan import autodiff as ad
from dpgan.synth import make_dataset

_VERDICTS = []
_NOTES = []


@pytest.fixture
def verdict():
    """Record one acceptance line; returns the pass flag so tests can assert on it."""
    def record(criterion, passed, detail):
        _VERDICTS.append((criterion, bool(passed), detail))
        return bool(passed)
    return record


@pytest.fixture
def note():
    def record(text):
        _NOTES.append(text)
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for criterion, ok, detail in sorted(_VERDICTS):
            terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {criterion}: {detail}")
    for text in _NOTES:
        terminalreporter.write_line("")
        for line in text.splitlines():
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def rand(rng, *shape, requires_grad=False):
    return ad.Tensor(rng.standard_normal(shape), requires_grad=requires_grad)


@pytest.fixture(scope="session")
def tiny_data(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "tiny"
    make_dataset(str(path), num=8, size=16, classes=5, seed=3)
    return str(path)
