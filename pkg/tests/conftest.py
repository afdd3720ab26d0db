import numpy as np
import pytest

from gwasverify.genotype import CaseControlDataset, SynthesisConfig, random_label, synthesize_dataset

SMALL = SynthesisConfig(m=600, n_associated=20, seed=11)


@pytest.fixture(scope="session")
def small_config():
    return SMALL


@pytest.fixture(scope="session")
def research():
    return synthesize_dataset(SMALL)


@pytest.fixture(scope="session")
def public():
    return random_label(synthesize_dataset(SMALL.replace(seed=12)), 3)


@pytest.fixture
def tiny():
    g = np.array([[0, 1, 2], [1, 1, 0], [2, 0, 1], [0, 2, 2]], dtype=np.int8)
    return CaseControlDataset(("s1", "s2", "s3", "s4"), np.array([True, True, False, False]), ("r1", "r2", "r3"), g)


_RESULTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_RESULTS] = []


@pytest.fixture
def criterion(request):
    """record(number, passed, detail): logs one acceptance line, shown in the terminal summary."""
    def record(number: int, passed: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        request.config.stash[_RESULTS].append((number, line))
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = sorted(config.stash.get(_RESULTS, []))
    if rows:
        terminalreporter.section("acceptance criteria")
        for _, line in rows:
            terminalreporter.write_line(line)
