import numpy as np
import pytest

from fringe_fcs import BinGrid, CloudSpec, Lattice, TwoCloudState, default_state


@pytest.fixture(scope="session")
def big_state():
    """Default scenario with N1 = N2 = 5000 (N = 10^4)."""
    return default_state(5000, 5000)


@pytest.fixture(scope="session")
def big_bins(big_state):
    return BinGrid.uniform(big_state.lattice, 64)


def pair_state(n1=1, n2=1, **kw):
    return default_state(n1, n2, **kw)


def coarse_state(n1, n2, points=41, tau=1.5):
    """Cheap overlapping pair on a short lattice, for tensor-grid oracles."""
    lattice = Lattice(-12.0, 12.0, points)
    return TwoCloudState.from_specs(CloudSpec(tau=tau, n=n1), CloudSpec(tau=tau, n=n2), lattice)


def disjoint_state(n1, n2, offset=20.0):
    """Unexpanded clouds far apart: no overlap on the lattice."""
    lattice = Lattice(-40.0, 40.0, 4097)
    return TwoCloudState.from_specs(CloudSpec(offset=offset, tau=0.0, n=n1),
                                    CloudSpec(offset=offset, tau=0.0, n=n2), lattice)


def rng(seed=0):
    return np.random.default_rng(seed)


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one pass/fail line per acceptance criterion for the terminal summary."""
    def record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
