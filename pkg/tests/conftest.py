import warnings

import numpy as np
import pytest

from chaplygin_lab import catalog

# the pinned two-wheeled-robot parameters give an indefinite (regular) full
# kinetic form; the library warns about it once per build
warnings.filterwarnings("ignore",
                        message=".*assembled block metric is indefinite.*")


@pytest.fixture(scope="session")
def entries():
    return {name: catalog.build(name) for name in catalog.names()}


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
