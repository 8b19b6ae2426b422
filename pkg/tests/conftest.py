import numpy as np
import pytest
from hypothesis import settings, strategies as st

from diffeostat import FiniteSampleSpace, ProbabilityMeasure

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

X3 = FiniteSampleSpace.of_size(3)
UNIFORM3 = ProbabilityMeasure(X3, [1 / 3, 1 / 3, 1 / 3])
XI = ProbabilityMeasure(X3, [0.5, 0.3, 0.2])
INDICATORS = [[3.0, 0.0, 0.0], [0.0, 3.0, 0.0], [0.0, 0.0, 3.0]]


@st.composite
def positive_weights(draw, n=None, min_n=2, max_n=6):
    n = n or draw(st.integers(min_n, max_n))
    raw = draw(st.lists(st.floats(0.05, 1.0), min_size=n, max_size=n))
    w = np.array(raw)
    return w / w.sum()


@st.composite
def seeds(draw):
    return draw(st.integers(0, 2**32 - 1))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
