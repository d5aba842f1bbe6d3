import numpy as np
import pytest

from murf.config import default_cluster, default_fit_params


@pytest.fixture(scope="session")
def clusters():
    return default_cluster()


@pytest.fixture(scope="session")
def ref_params():
    params, f0 = default_fit_params()
    return params, f0


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
