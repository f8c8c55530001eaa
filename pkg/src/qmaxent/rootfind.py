"""Safeguarded scalar root finding on a sign-changing bracket."""

from __future__ import annotations

import math
from typing import Callable


class BracketError(ValueError):
    pass


def bracketed_root(func: Callable[[float], float], lo: float, hi: float,
                   xtol: float = 1e-12, max_iter: int = 500) -> float:
    """Root of ``func`` in [lo, hi] by Illinois regula falsi with bisection fallback.

    ``func(lo)`` and ``func(hi)`` must have opposite signs (or one may vanish).
    Iteration stops once the bracket is narrower than ``xtol`` (floored at a
    few ulps of the endpoints).  Any step that fails to halve the bracket is
    followed by a bisection, so the worst case is plain bisection.
    """
    a, b = float(lo), float(hi)
    fa, fb = float(func(a)), float(func(b))
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if math.isnan(fa) or math.isnan(fb) or (fa > 0) == (fb > 0):
        raise BracketError(f"no sign change on [{a!r}, {b!r}]: f={fa!r}, {fb!r}")
    side = 0
    force_bisect = False
    for _ in range(max_iter):
        width = b - a
        if width <= max(xtol, 4 * math.ulp(max(abs(a), abs(b)))):
            break
        if force_bisect or not (math.isfinite(fa) and math.isfinite(fb)):
            x = 0.5 * (a + b)
        else:
            x = (a * fb - b * fa) / (fb - fa)
            if not a < x < b:
                x = 0.5 * (a + b)
        fx = float(func(x))
        if fx == 0.0:
            return x
        if math.isnan(fx):
            raise BracketError(f"function is NaN at {x!r}")
        if (fx > 0) == (fa > 0):
            a, fa = x, fx
            if side == -1 and math.isfinite(fb):
                fb *= 0.5
            side = -1
        else:
            b, fb = x, fx
            if side == 1 and math.isfinite(fa):
                fa *= 0.5
            side = 1
        force_bisect = (b - a) > 0.5 * width
    return a if abs(fa) < abs(fb) else b
