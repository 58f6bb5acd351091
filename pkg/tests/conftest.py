import pytest

from qrx.maps import bundled
from qrx.pipeline import Pipeline


@pytest.fixture(scope="session")
def pipe_a():
    return Pipeline(bundled("one_minus_two_over_zsq"))


@pytest.fixture(scope="session")
def pipe_lattes():
    return Pipeline(bundled("lattes"))


@pytest.fixture(scope="session")
def pipes(pipe_a, pipe_lattes):
    return {"one_minus_two_over_zsq": pipe_a, "lattes": pipe_lattes}
