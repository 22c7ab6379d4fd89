import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from manikin import backend


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=backend.available())
def any_backend(request):
    """Run a test once per available kernel backend."""
    previous = backend.active_name()
    backend.use(request.param)
    yield request.param
    backend.use(previous)
