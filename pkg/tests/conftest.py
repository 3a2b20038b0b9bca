import numpy as np
import pytest

from nlsblow.lab import get_lab


@pytest.fixture(scope="session")
def lab():
    """Production ground-state stack (r_max=30, n=8192), built once."""
    return get_lab()


@pytest.fixture(scope="session")
def lab_small():
    """Coarse stack for fast structural tests."""
    return get_lab(r_max=20.0, n=2048, tol=1e-9)


@pytest.fixture()
def rng():
    return np.random.default_rng(20260810)
