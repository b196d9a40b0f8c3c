import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from seclab.sector import model_from_dict, preset

settings.register_profile("seclab", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("seclab")


@pytest.fixture(scope="session")
def plane():
    return model_from_dict(preset())


@pytest.fixture(scope="session")
def point():
    return model_from_dict(preset(fiber="Point"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def acceptance_verdicts(request):
    """Criterion number -> PASS/FAIL, printed at the end of the session."""
    return request.config.stash.setdefault(ACCEPTANCE_KEY, {})


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    verdicts = config.stash.get(ACCEPTANCE_KEY, {})
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for n in sorted(verdicts):
            terminalreporter.write_line(f"Criterion {n}: {verdicts[n]}")
