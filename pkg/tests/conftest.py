import pytest

from ssrl import kernels


@pytest.fixture(params=kernels.available_backends())
def each_backend(request):
    """Run a test once per available kernel backend."""
    previous = kernels.use_backend(request.param)
    yield request.param
    kernels.use_backend(previous)
