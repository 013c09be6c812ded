import copy
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

TINY = {
    "name": "tiny",
    "mode": "regulation",
    "seed": 11,
    "integrator": {"h": 0.01, "horizon": 30.0, "decimation": 10},
    "exosystem": {"S0": [[0, 1], [-1, 0]], "w0": {"uniform": [-1, 1]}},
    "graph": {"snapshots": [[[0, 1, 1]], [[1, 2, 1]]], "schedule": [[0, 1.5], [1, 1.5]]},
    "templates": {
        "t": {
            "A": [[0, 1], [0, -1]], "B": [[0], [1]], "C": [[1, 0]], "D": [[0]],
            "P": [[0, 0], [1, 0]], "Q": [[-1, 0]],
            "dA": [[0, 0], [0.1, 0]],
            "observer_poles": [-2, -3], "state_poles": [-1, -1.5, -2, -2.5],
            "init": {"x": {"uniform": [-1, 1]}, "xi": {"uniform": [-1, 1]}, "w": {"uniform": [-1, 1]},
                     "S": [[0, 0], [0, 0]], "beta_hat": [0]},
        }
    },
    "agents": [{"template": "t"}, {"template": "t"}],
}


@pytest.fixture
def tiny():
    """Small two-agent regulation scenario document."""
    return copy.deepcopy(TINY)


ACCEPTANCE_LINES = []


def record_acceptance(number, ok, detail):
    """Store and print one pass/fail line for an acceptance criterion."""
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
