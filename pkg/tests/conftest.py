import numpy as np
import pytest

from fluxlab.lattice import build_domain, monopole_field
from fluxlab.presets import uniform_degree_trace
from fluxlab.solver import SolveConfig, minimize

P = 1.2
MONOPOLE_ENERGY = (4 * np.pi) ** (1 - P) / (3 - 2 * P)  # analytic radial integral


@pytest.fixture(scope="session")
def dom16():
    return build_domain(16, 1.0)


@pytest.fixture(scope="session")
def dom32():
    return build_domain(32, 1.0)


@pytest.fixture(scope="session")
def monopole16(dom16):
    return monopole_field(dom16)


@pytest.fixture(scope="session")
def monopole32(dom32):
    return monopole_field(dom32)


@pytest.fixture(scope="session")
def solved_monopole32(dom32):
    """Shared degree-1 minimizer run at N=32 (acceptance criteria 1, 6, 8, 9)."""
    B = uniform_degree_trace(dom32, 1)
    return minimize(dom32, B, SolveConfig(p=P, seed=1, max_outer_iters=8))
