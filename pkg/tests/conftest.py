import numpy as np
import pytest

from cherenkov_mub.kernel import MomentumKernel, build_kernel, reference_scenario


@pytest.fixture(scope="session")
def scenario():
    return reference_scenario()


@pytest.fixture(scope="session")
def kernel(scenario):
    return build_kernel(scenario)


def synthetic_kernel(diag, offdiag=None, k_max=10.0):
    """Normalized kernel from a diagonal profile (and optional full matrix)."""
    diag = np.asarray(diag, float)
    axis = np.linspace(0.0, k_max, diag.size)
    f = np.diag(diag) if offdiag is None else np.asarray(offdiag, float)
    return MomentumKernel(axis, f).normalized()
