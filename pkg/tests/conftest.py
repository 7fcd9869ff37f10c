import hypothesis
import numpy as np
import pytest

from cephforge.pipeline import synth_pool
from cephforge.schema import load_schema

hypothesis.settings.register_profile("default", max_examples=100, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.load_profile("default")


@pytest.fixture(scope="session")
def schema():
    return load_schema()


@pytest.fixture(scope="session")
def pool(schema):
    return synth_pool(40, seed=11, schema=schema)


@pytest.fixture(scope="session")
def pool476(schema):
    return synth_pool(476, seed=0, schema=schema)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
