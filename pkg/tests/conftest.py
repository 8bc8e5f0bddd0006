import os

import hypothesis
import numpy as np
import pytest

from gicblock.case import load_bundled
from gicblock.synthetic import chain_case


hypothesis.settings.register_profile("ci", max_examples=60, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.register_profile("thorough", max_examples=400, deadline=None)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))


@pytest.fixture(scope="session")
def b4gic():
    return load_bundled("b4gic")


@pytest.fixture(scope="session")
def epri21():
    return load_bundled("epri21")


@pytest.fixture(scope="session")
def chain3():
    return chain_case(3)


# acceptance lines, one per criterion, echoed in the terminal summary
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
