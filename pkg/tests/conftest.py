import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gradtrack.objective import LogisticModel, generate_logistic_data


@pytest.fixture(scope="session")
def default_logistic() -> LogisticModel:
    # same stream tag the harness uses for the benchmark instance
    return LogisticModel(
        generate_logistic_data(25, 10, 0.25, np.random.default_rng([0, 11]))
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


# verdict lines queued by the acceptance tests; shown after capture ends
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
