import math
import sys

import numpy as np
import pytest


def naive_k0(S, T, theta):
    """Double sum written as two explicit loops."""
    S = np.atleast_2d(np.asarray(S, dtype=float))
    T = np.atleast_2d(np.asarray(T, dtype=float))
    tot = 0.0
    for x in S:
        for y in T:
            tot += math.exp(-float(np.sum((x - y) ** 2)) / (2 * theta**2))
    return tot / (len(S) * len(T))


def naive_de(S, T, theta_X, theta_H, sigma2=1.0):
    d2 = naive_k0(S, S, theta_X) + naive_k0(T, T, theta_X) - 2 * naive_k0(S, T, theta_X)
    return sigma2 * math.exp(-max(d2, 0.0) / (2 * theta_H**2))


def random_sets(rng, n, p_max=10, d=2, p_min=1):
    return [rng.random((int(rng.integers(p_min, p_max + 1)), d)) for _ in range(n)]


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
