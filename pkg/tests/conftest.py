import json
from pathlib import Path

import numpy as np
import pytest

from wnrecovery.hazard import load_hazard_config, sample_scenario
from wnrecovery.network import build_network, load_network

DATA = Path(__file__).parent / "data"


def toy_document() -> dict:
    return json.loads((DATA / "toy_network.json").read_text())


@pytest.fixture(scope="session")
def gilroy():
    return load_network()


@pytest.fixture(scope="session")
def hazard():
    return load_hazard_config()


@pytest.fixture()
def toy():
    return build_network(toy_document())


@pytest.fixture(scope="session")
def scenario(gilroy, hazard):
    return sample_scenario(gilroy, hazard, np.random.default_rng(11))


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for num in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[num])
