import pytest

from edgeprof import _kernels


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile all numba kernels once so timed tests measure math, not JIT."""
    _kernels.warm_kernels()
