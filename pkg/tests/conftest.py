import pytest

from weightlab import _sweeps


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # load (or build) the compiled sweep kernels once, outside any timed block
    _sweeps.warmup()
