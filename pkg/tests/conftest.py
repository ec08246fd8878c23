import numpy as np
import pytest

from relu_laplace.data import toy_binary, toy_multiclass
from relu_laplace.laplace import LaplaceConfig, fit_llla_binary
from relu_laplace.network import Mlp
from relu_laplace.train import TrainConfig, train_map

# Desk-scale toy setup shared by the theory and acceptance tests.
TOY_N_PER_CLASS = 250
TOY_TRAIN = TrainConfig(epochs=100, batch_size=32, learning_rate=0.05)
FULL_BATCH = LaplaceConfig(batch_size=10**6)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def binary_toy():
    return toy_binary(TOY_N_PER_CLASS, 0.6, seed=0)


@pytest.fixture(scope="session")
def binary_toy_test():
    return toy_binary(TOY_N_PER_CLASS, 0.6, seed=7)


@pytest.fixture(scope="session")
def binary_net(binary_toy):
    return train_map(Mlp.init([2, 50, 50, 1], bias=True, seed=0), binary_toy, TOY_TRAIN)


@pytest.fixture(scope="session")
def binary_net_nobias(binary_toy):
    return train_map(Mlp.init([2, 20, 20, 1], bias=False, seed=0), binary_toy, TOY_TRAIN)


@pytest.fixture(scope="session")
def binary_llla(binary_net, binary_toy):
    return fit_llla_binary(binary_net, binary_toy, FULL_BATCH)


@pytest.fixture(scope="session")
def binary_llla_nobias(binary_net_nobias, binary_toy):
    return fit_llla_binary(binary_net_nobias, binary_toy, FULL_BATCH)


@pytest.fixture(scope="session")
def multiclass_toy():
    return toy_multiclass(TOY_N_PER_CLASS, 0.7, seed=0, dim=10)


@pytest.fixture(scope="session")
def multiclass_net(multiclass_toy):
    return train_map(Mlp.init([10, 50, 50, 4], bias=True, seed=0), multiclass_toy, TOY_TRAIN)



# ---------------------------------------------------------------------------
# acceptance criteria report

_CRITERIA = {}


@pytest.fixture
def criterion():
    """``criterion(n, ok, detail)`` records and prints one PASS/FAIL line, then returns ``ok``."""
    def record(n, ok, detail):
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA[n] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
