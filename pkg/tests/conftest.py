import pytest

from hysterix import presets
from hysterix.backstepping import Attractor, synthesize
from hysterix.hysteresis import HysteresisController
from hysterix.plant import paper_example
from hysterix.sampling import SampleConfig


@pytest.fixture(scope="session")
def plant():
    return paper_example(1e-3)


@pytest.fixture(scope="session")
def cert():
    return presets.paper_certificate()


@pytest.fixture(scope="session")
def local():
    return presets.paper_local()


@pytest.fixture(scope="session")
def synthesis(plant, cert):
    return synthesize(plant, cert, presets.PAPER_A, presets.PAPER_C)


@pytest.fixture(scope="session")
def controller(local, synthesis):
    return HysteresisController(local, synthesis.controller, presets.PAPER_V_ELL_TILDE)


@pytest.fixture(scope="session")
def attractor(cert):
    return Attractor(cert, cfg=SampleConfig())


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
