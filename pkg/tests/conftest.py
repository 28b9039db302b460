import numpy as np
import pytest

from homoglab import kernels


@pytest.fixture(params=["numpy", "numba"])
def impl(request):
    """Kernel table for one backend."""
    return kernels.IMPLEMENTATIONS[request.param]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
