import numpy as np
import pytest

from ma1lab.spectral import Arma, Bloomfield, WhiteNoise

CORPUS = {
    "white": WhiteNoise(1.0),
    "ma0.3": Arma(ma=(0.3,)),
    "ma0.5": Arma(ma=(0.5,)),
    "ma0.8": Arma(ma=(0.8,)),
    "ar0.3": Arma(ar=(0.3,)),
    "ar0.5": Arma(ar=(0.5,)),
    "ar0.8": Arma(ar=(0.8,)),
    "ma2": Arma(ma=(0.4, 0.3)),
    "bloomfield": Bloomfield((0.4,)),
}
RATIONAL = {k: (v if isinstance(v, Arma) else Arma()) for k, v in CORPUS.items() if k != "bloomfield"}
THETA_GRID = np.round(np.arange(-0.9, 0.91, 0.1), 10)


@pytest.fixture(params=sorted(CORPUS), scope="session")
def corpus_model(request):
    return CORPUS[request.param]


@pytest.fixture(params=sorted(RATIONAL), scope="session")
def arma_model(request):
    return RATIONAL[request.param]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
