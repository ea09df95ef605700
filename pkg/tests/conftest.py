import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def brute_force_distinguishable(a, b):
    """Outcome probabilities for two independent photons, by enumerating paths.

    Photon H goes to k with probability |a_k|^2 and V to l with |b_l|^2; the
    unordered outcome {k, l} accumulates both orderings.
    """
    n = a.size
    p = np.zeros((n, n))
    for k in range(n):
        for m in range(n):
            w = abs(a[k]) ** 2 * abs(b[m]) ** 2
            i, j = min(k, m), max(k, m)
            p[i, j] += w
    return p
