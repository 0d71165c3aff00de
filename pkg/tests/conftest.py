import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nived.assembly import NivedDiscretization
from nived.geometry import Rectangle, build_partition, generate_structured_mesh

settings.register_profile(
    "nived", deadline=None, max_examples=25,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("nived")


def rigid_modes(x, center=(0.0, 0.0)):
    """Two translations and one rotation about ``center`` as (3, 2N) rows."""
    x = np.asarray(x) - np.asarray(center)
    n = len(x)
    modes = np.zeros((3, 2 * n))
    modes[0, 0::2] = 1.0
    modes[1, 1::2] = 1.0
    modes[2, 0::2] = -x[:, 1]
    modes[2, 1::2] = x[:, 0]
    return modes


@pytest.fixture(scope="session")
def square_partition():
    return build_partition(generate_structured_mesh(Rectangle(0, 0, 1, 1), 6, seed=11))


@pytest.fixture(scope="session")
def square_nived(square_partition):
    return NivedDiscretization(square_partition)
