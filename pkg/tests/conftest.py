import numpy as np
import pytest

from svf import kernels

BACKENDS = ["python"] + (["cython"] if kernels.compiled is not None else [])


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Run the test once per available kernel backend."""
    impl = kernels.fallback if request.param == "python" else kernels.compiled
    monkeypatch.setattr(kernels, "impl", impl)
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def spikes(rng, shape, p=0.5):
    return (rng.random(shape) < p).astype(np.uint8)
