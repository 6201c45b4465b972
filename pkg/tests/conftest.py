import numpy as np
import pytest

from tempfuse.graph import build_snapshot


def random_snapshots(rng, num_nodes, num_snaps, max_edges, start=0):
    snaps = []
    for k in range(num_snaps):
        m = int(rng.integers(0, max_edges + 1))
        src = rng.integers(0, num_nodes, m)
        dst = rng.integers(0, num_nodes, m)
        tau = start + k + rng.random(m)
        snaps.append(build_snapshot(np.column_stack([src, dst, tau]), num_nodes, start + k))
    return snaps


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
