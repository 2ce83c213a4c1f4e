import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    max_examples=25,
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(autouse=True)
def _strict_float_errors():
    # surface accidental overflows in the code under test; libraries that
    # handle their own edge cases opt out locally with np.errstate
    with np.errstate(over="warn", invalid="warn"):
        yield
