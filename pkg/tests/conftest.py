import numpy as np
import pytest

from kinlang.rng import stream


class ZeroGaussianRng:
    """Test double: Gaussian draws are zero, everything else passes through.

    Used to isolate the deterministic part of a noise-driven update while
    leaving uniform draws (times, signs) intact.
    """

    def __init__(self, seed: int = 0):
        self._inner = stream(seed)

    def standard_normal(self, size=None):
        return np.zeros(size if size is not None else ())

    def normal(self, loc=0.0, scale=1.0, size=None):
        return np.full(size if size is not None else (), float(loc))

    def random(self, size=None):
        return self._inner.random(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._inner.uniform(low, high, size)

    def integers(self, *args, **kwargs):
        return self._inner.integers(*args, **kwargs)


class ScriptedRng:
    """Test double replaying fixed uniform values; Gaussians come from a seed."""

    def __init__(self, uniforms, seed: int = 0):
        self._uniforms = list(uniforms)
        self._inner = stream(seed)

    def random(self, size=None):
        assert size is None
        return self._uniforms.pop(0)

    def standard_normal(self, size=None):
        return self._inner.standard_normal(size)


@pytest.fixture
def zero_rng():
    return ZeroGaussianRng()
