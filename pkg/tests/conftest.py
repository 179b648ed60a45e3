import math

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def brute_force_rank(responses, h, ell, kernel_scale, y):
    """Conformity rank rebuilt from scratch with explicit loops.

    Scores every augmented point with the augmented estimator
    n/(n+1) * p_hat(v) + K(|y - v| / h) / ((n+1) h^l) and counts the points
    whose score does not exceed the score of ``y``.
    """
    pts = [list(map(float, r)) for r in responses] + [list(map(float, y))]
    n = len(pts) - 1

    def kern(a, b):
        d2 = sum((ai - bi) ** 2 for ai, bi in zip(a, b))
        return kernel_scale * math.exp(-d2 / (2 * h * h))

    def aug(v):
        p_hat = sum(kern(r, v) for r in pts[:n]) / (n * h**ell) if n else 0.0
        return n / (n + 1) * p_hat + kern(pts[n], v) / ((n + 1) * h**ell)

    target = aug(pts[n])
    return sum(1 for p in pts if aug(p) <= target) / (n + 1)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
