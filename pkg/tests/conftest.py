import numpy as np
import pytest
from hypothesis import settings

from banachpoly.algebra import GridAlgebra, LatticeAlgebra, MatrixAlgebra
from banachpoly.process import OUProcess

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture(scope="session")
def grid():
    return GridAlgebra.default()


@pytest.fixture(scope="session")
def ou():
    return OUProcess.default()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


SPACES = {"grid": GridAlgebra.default(), "matrix": MatrixAlgebra(2), "lattice": LatticeAlgebra(8)}
