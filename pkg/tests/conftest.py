import numpy as np
import pytest

from fluxlab import BoxIndicator, gaussian_bump, poisson_law, validate_kernel


@pytest.fixture
def symmetric_kernel_1d():
    return validate_kernel([((1,), 0.5), ((-1,), 0.5)], 1)


@pytest.fixture
def kernel_2d():
    return validate_kernel([((1, 0), 0.5), ((0, 1), 0.5)], 2)


@pytest.fixture
def unit_box_1d():
    return BoxIndicator(1.0, 1)


@pytest.fixture
def unit_bump_1d():
    return gaussian_bump([0.0], 1.0, 1.0)


@pytest.fixture
def poisson_unit():
    return poisson_law(1.0)


@pytest.fixture
def identity_1d():
    return np.array([[1.0]])
