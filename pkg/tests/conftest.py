import re

import numpy as np
import pytest

from hermflow import presets
from hermflow.domain import TorusDomain, iwasawa


@pytest.fixture(scope="session")
def torus2():
    return TorusDomain(2, 16)


@pytest.fixture(scope="session")
def tm1_state(torus2):
    return presets.tm1(torus2)


@pytest.fixture(scope="session")
def tm1_fine():
    # the identities need the aliasing of 1/(1 + sin/2) below 1e-8
    return presets.tm1(TorusDomain(2, 48))


@pytest.fixture(scope="session")
def iwasawa_state():
    return presets.iwasawa_balanced(1.0, 2.0, iwasawa())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = []


def _order(label):
    m = re.match(r"(\d+)(.*)", label)
    return (int(m.group(1)), m.group(2)) if m else (10 ** 6, label)


@pytest.fixture
def record():
    """Collect one verdict line per acceptance criterion for the terminal summary."""

    def _record(label, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {label}: {detail}"
        ACCEPTANCE.append((_order(label), line))
        print(line)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
