import numpy as np
import pytest

from spcrystal import IonSet, Lattice, PhysParams, initial_psi, make_kgrid


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def cubic():
    return Lattice.cubic(1.0)


@pytest.fixture
def skewed():
    return Lattice(np.array([[1.0, 0.1, 0.0], [0.3, 0.9, 0.05], [-0.2, 0.15, 1.1]]))


@pytest.fixture
def units():
    return PhysParams()


def random_state(rng, lattice=None, dims=(8, 8, 8), n_ions=None, noise=0.5):
    """Random admissible (psi, ions) on a random near-cubic cell."""
    if lattice is None:
        lattice = Lattice(np.eye(3) + 0.15 * rng.standard_normal((3, 3)))
    grid = make_kgrid(lattice.dual, dims)
    n = int(rng.integers(1, 4)) if n_ions is None else n_ions
    while True:
        ions = IonSet(lattice, rng.random((n, 3)), rng.uniform(0.5, 2.0, n))
        if ions.min_distance > 0.1 * lattice.scale:
            break
    psi = initial_psi(grid, ions.Z, seed=int(rng.integers(1 << 30)), noise=noise)
    return psi, ions


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
