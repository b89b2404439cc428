import numpy as np
import pytest

from ridgeconf.density import Component, DensityModel
from ridgeconf.indexing import build_index_maps
from ridgeconf.kernel import KernelSpec, kernel_constants


@pytest.fixture(scope="session")
def spec2():
    return KernelSpec(2)


@pytest.fixture(scope="session")
def spec3():
    return KernelSpec(3)


@pytest.fixture(scope="session")
def consts2(spec2):
    return kernel_constants(spec2)


@pytest.fixture(scope="session")
def consts3(spec3):
    return kernel_constants(spec3)


@pytest.fixture(scope="session")
def maps2():
    return build_index_maps(2)


@pytest.fixture(scope="session")
def maps3():
    return build_index_maps(3)


@pytest.fixture(scope="session")
def mixture2():
    """Three-component bivariate mixture with correlated covariances."""
    comps = (
        Component(0.5, np.array([0.0, 0.0]), np.array([[1.0, 0.3], [0.3, 0.5]])),
        Component(0.3, np.array([1.5, 0.5]), np.array([[0.4, -0.1], [-0.1, 0.6]])),
        Component(0.2, np.array([-1.0, 1.0]), np.array([[0.3, 0.0], [0.0, 0.3]])),
    )
    return DensityModel(comps, np.array([[-3.0, 3.0], [-3.0, 3.0]]))


def central_diff(fn, x, step):
    """Central differences of fn (points -> (..., k) arrays) along each axis.

    Returns an array with a trailing axis of length d.
    """
    x = np.asarray(x, float)
    d = x.shape[-1]
    out = []
    for i in range(d):
        e = np.zeros(d)
        e[i] = step
        out.append((fn(x + e) - fn(x - e)) / (2 * step))
    return np.stack(out, axis=-1)
