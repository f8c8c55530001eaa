import math

import numpy as np
import pytest

from qmaxent import exponential, shannon, tsallis


def builtin_functionals():
    """The functional set used by the property suites and oracle sweeps."""
    return [
        shannon(),
        tsallis(0.5),
        tsallis(1.5),
        tsallis(2.0),
        tsallis(3.0),
        tsallis(8.0),
        exponential(-4.0),
        exponential(0.5),
        exponential(1.0),
        exponential(4.0),
    ]


# Bell sweep set: shannon, tsallis q in {1.5, 2, 3, 8}, exponential q in {-4, 0.5, 1, 4}
def bell_oracle_functionals():
    return [shannon(), tsallis(1.5), tsallis(2), tsallis(3), tsallis(8),
            exponential(-4), exponential(0.5), exponential(1), exponential(4)]


@pytest.fixture(params=builtin_functionals(), ids=lambda fn: fn.spec)
def functional(request):
    return request.param


# ---------------------------------------------------------------------------
# independent oracles: raw textbook formulas and plain bisection, no shared code


def raw_fprime(kind, q=None):
    if kind == "shannon":
        return lambda p: -math.log(p) - 1.0
    if kind == "tsallis":
        return lambda p: (1.0 - q * p ** (q - 1.0)) / (q - 1.0)
    if kind == "exponential":
        return lambda p: (1.0 - q * math.exp(q * p) / (math.exp(q) - 1.0)) / q
    raise ValueError(kind)


def bisect(g, lo, hi, tol=1e-15):
    glo = g(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if (gm > 0) == (glo > 0):
            lo, glo = mid, gm
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


def oracle_p_plus(kind, q, b):
    """Root of f'(p) + f'(p - b) - 2 f'((1 + b)/2 - p) on (b, (1 + b)/2), or b at cutoff."""
    d = raw_fprime(kind, q)
    eps = 1e-15

    def g(p):
        return d(p) + d(p - b) - 2.0 * d((1.0 + b) / 2.0 - p)

    lo, hi = b + eps, (1.0 + b) / 2.0 - eps
    if g(lo) <= 0:
        return b
    return bisect(g, lo, hi)


def grid_min_largest(b, step=1e-4):
    """Brute-force minimum over p+ of max(p+, p-, p0) on the constraint line."""
    pp = np.arange(b, (1.0 + b) / 2.0 + step / 2, step)
    pm = pp - b
    p0 = (1.0 + b) / 2.0 - pp
    ok = p0 >= 0
    largest = np.maximum(np.maximum(pp, pm), p0)[ok]
    k = int(np.argmin(largest))
    return pp[ok][k], largest[k]


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
