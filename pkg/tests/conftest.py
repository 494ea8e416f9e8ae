import pytest

from mobequity import kernels


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    # JIT compilation happens once here so timed tests measure the
    # algorithms, not compiler startup
    kernels.warmup()
