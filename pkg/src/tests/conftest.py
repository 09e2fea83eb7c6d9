import numpy as np
import pytest

from src.fem.mesh import build_mesh
from src.fem.spaces import build_space
from src.fem.stokes_ops import StokesOperators
from src.models.pydanticmodels import Domain, SchemeConfig
from src.stochastic.noise import NoiseModel, default_model


@pytest.fixture(scope="session")
def square_ops() -> StokesOperators:
    """2x2 cross-split unit square, 16 triangles."""
    return StokesOperators(build_space(build_mesh(Domain.SQUARE, 2)))


@pytest.fixture(scope="session")
def fine_square_ops() -> StokesOperators:
    """The square mesh above refined once."""
    return StokesOperators(build_space(build_mesh(Domain.SQUARE, 2, level=1)))


@pytest.fixture(scope="session")
def disk_ops() -> StokesOperators:
    return StokesOperators(build_space(build_mesh(Domain.POLYGON_DISK, 8)))


@pytest.fixture(scope="session")
def noise() -> NoiseModel:
    return default_model(N=4, c_scale=0.5)


@pytest.fixture
def scheme() -> SchemeConfig:
    return SchemeConfig(T=0.01, J=4)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
