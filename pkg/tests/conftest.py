import numpy as np
import pytest

import lorenzlab as ll
from lorenzlab import measures as ms
from lorenzlab.maps import one_d_map_batch


@pytest.fixture(scope="session")
def model():
    return ll.reference_model()


@pytest.fixture(scope="session")
def ulam_1024(model):
    return ms.ulam_operator(lambda x: one_d_map_batch(model, x), 1024)


@pytest.fixture(scope="session")
def density_1024(ulam_1024):
    return ms.invariant_density(ulam_1024)


@pytest.fixture(scope="session")
def srb_256(model):
    # small family for cheap structural tests
    return ms.srb_iterate(model, 20, 256, 256)


@pytest.fixture(scope="session")
def srb_512(model):
    return ms.srb_iterate(model, 25, 512, 512)
