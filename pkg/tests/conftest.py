from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def translation_fixture():
    from regiondrag.bench import make_translation_sample

    return make_translation_sample()


@pytest.fixture(scope="session")
def toy_backend():
    from regiondrag.backends import ToyDenoiser

    return ToyDenoiser(seed=0)
