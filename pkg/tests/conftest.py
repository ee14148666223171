import numpy as np
import pytest

from dlf import autograd as ag
from dlf.config import tiny_config
from dlf.data import SyntheticSpec, gen_synthetic


@pytest.fixture
def f64():
    with ag.precision(64):
        yield


@pytest.fixture
def f32():
    with ag.precision(32):
        yield


@pytest.fixture(scope="session")
def small_dataset():
    return gen_synthetic(SyntheticSpec(n_train=12, n_valid=6, n_test=6, seed=1))


@pytest.fixture
def tiny():
    return tiny_config()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
