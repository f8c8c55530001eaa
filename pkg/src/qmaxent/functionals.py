"""Concave trace-entropy kernels.

An :class:`EntropicFunctional` bundles a concave ``f`` on [0, 1] with
``f(0) = f(1) = 0`` together with its first three derivatives, the inverse
of ``f'`` and the two endpoint slopes ``f'(0+)`` and ``f'(1-)``.  The entropy
of a density is ``Tr f(rho)``.

Three builtin families are provided:

* ``shannon``      f(p) = -k p ln p
* ``tsallis``      f(p) = k (p - p**q) / (q - 1),   q > 0
* ``exponential``  f(p) = (k/q) [p - (e**(q p) - 1) / (e**q - 1)]

All maps accept scalars or numpy arrays.  ``f'(0+) = +inf`` is stored as
``math.inf`` and every cutoff decision branches on it explicitly.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

__all__ = [
    "AdditivityClass",
    "EntropicFunctional",
    "FieldRangeError",
    "classify_additivity",
    "custom",
    "exponential",
    "gamma_coefficient",
    "inverse_fprime",
    "make_builtin",
    "mirror",
    "parse_functional",
    "shannon",
    "tsallis",
]

ArrayFn = Callable[[np.ndarray], np.ndarray]

_CONCAVITY_SAMPLES = 1000
_BOUNDARY_TOL = 1e-12
# relative slack allowed below f'(1) before a field is rejected
_FIELD_SLACK = 1e-12


class FieldRangeError(ValueError):
    """A field value lies below f'(1), outside the unit-normalized domain."""


class AdditivityClass(enum.Enum):
    SUB_ADDITIVE = "SubAdditive"
    SUPER_ADDITIVE = "SuperAdditive"
    ADDITIVE = "Additive"
    INDETERMINATE = "Indeterminate"


def _arr(p):
    return np.asarray(p, dtype=float)


def _bisect_inverse(df: ArrayFn, tol: float = 1e-13) -> ArrayFn:
    """Invert a strictly decreasing ``df`` on (0, 1) by vectorized bisection.

    Endpoints are never evaluated, so a divergent ``df(0)`` is harmless.
    """

    def inv(h):
        h = _arr(h)
        lo = np.zeros_like(h)
        hi = np.ones_like(h)
        n_iter = int(math.ceil(math.log2(1.0 / tol))) + 2
        with np.errstate(all="ignore"):
            for _ in range(n_iter):
                mid = 0.5 * (lo + hi)
                above = df(mid) > h
                lo = np.where(above, mid, lo)
                hi = np.where(above, hi, mid)
        return 0.5 * (lo + hi)

    return inv


def _log_gap(df: ArrayFn, ref: float, sign: float) -> Optional[ArrayFn]:
    if math.isinf(ref):
        return None

    def gap(p):
        with np.errstate(all="ignore"):
            return np.log(sign * (ref - df(_arr(p))))

    return gap


@dataclass(frozen=True, eq=False)
class EntropicFunctional:
    """A concave kernel ``f`` with its derivative stack.

    ``log_gap0(p) = log(f'(0) - f'(p))`` and ``log_gap1(p) = log(f'(p) - f'(1))``
    are log-domain slope gaps used by the scalar root finders; they keep the
    stationarity equations resolvable when ``f'`` saturates in floating point
    (large |q|).  They default to direct evaluation from ``df``.
    """

    name: str
    params: Mapping[str, float]
    f: ArrayFn = field(repr=False)
    df: ArrayFn = field(repr=False)
    d2f: ArrayFn = field(repr=False)
    d3f: ArrayFn = field(repr=False)
    fprime0: float
    fprime1: float
    inv_df: Optional[ArrayFn] = field(default=None, repr=False)
    log_gap0: Optional[ArrayFn] = field(default=None, repr=False)
    log_gap1: Optional[ArrayFn] = field(default=None, repr=False)
    # closed-form f'''/f''; avoids 0/0 when both underflow
    curvature_ratio: Optional[ArrayFn] = field(default=None, repr=False)
    # inverses of the slope gaps: p with f'(0) - f'(p) = g, resp. f'(p) - f'(1) = g
    inv_gap0: Optional[ArrayFn] = field(default=None, repr=False)
    inv_gap1: Optional[ArrayFn] = field(default=None, repr=False)

    def __post_init__(self):
        k = self.params.get("k", 1.0)
        if not k > 0:
            raise ValueError(f"scale k must be positive, got {k}")
        if self.inv_df is None:
            object.__setattr__(self, "inv_df", _bisect_inverse(self.df))
        if self.log_gap0 is None:
            object.__setattr__(self, "log_gap0", _log_gap(self.df, self.fprime0, 1.0))
        if self.log_gap1 is None:
            object.__setattr__(self, "log_gap1", _log_gap(self.df, self.fprime1, -1.0))
        inv = self.inv_df
        if self.inv_gap0 is None and not math.isinf(self.fprime0):
            object.__setattr__(self, "inv_gap0", lambda g: inv(self.fprime0 - _arr(g)))
        if self.inv_gap1 is None and not math.isinf(self.fprime1):
            object.__setattr__(self, "inv_gap1", lambda g: inv(self.fprime1 + _arr(g)))
        self._validate()

    def _validate(self):
        f0, f1 = float(self.f(0.0)), float(self.f(1.0))
        if abs(f0) > _BOUNDARY_TOL or abs(f1) > _BOUNDARY_TOL:
            raise ValueError(f"{self.name}: f(0)={f0!r}, f(1)={f1!r}; both must vanish")
        grid = np.linspace(0.0, 1.0, _CONCAVITY_SAMPLES + 2)[1:-1]
        with np.errstate(all="ignore"):
            curv = _arr(self.d2f(grid))
        # deep tails may underflow to -0.0; any positive or NaN sample is fatal
        if not np.all(curv <= 0.0) or not np.any(curv < 0.0):
            raise ValueError(f"{self.name}: f'' is not negative on (0, 1); kernel is not concave")
        if not self.fprime1 < self.fprime0:
            raise ValueError(f"{self.name}: need f'(1) < f'(0)")

    @property
    def spec(self) -> str:
        """String form accepted by :func:`parse_functional`."""
        if self.name == "custom" or self.name.startswith("mirror("):
            return self.name
        parts = [f"{key}={_fmt(val)}" for key, val in self.params.items()
                 if not (key == "k" and val == 1.0)]
        return self.name + (":" + ",".join(parts) if parts else "")

    @property
    def has_cutoff(self) -> bool:
        return not math.isinf(self.fprime0)

    def __call__(self, p):
        return self.f(p)

    def inverse_fprime(self, h):
        return inverse_fprime(self, h)

    def __repr__(self):
        return f"EntropicFunctional({self.spec!r})"


def _fmt(x: float) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() else repr(x)


def inverse_fprime(fn: EntropicFunctional, h):
    """Probability ``p(h)`` maximizing ``f(p) - p h`` on [0, 1].

    Returns ``[f']^{-1}(h)`` for ``f'(1) <= h < f'(0)`` and exactly 0 at or
    beyond the cutoff ``h >= f'(0)``.  Raises :class:`FieldRangeError` for
    ``h < f'(1)``.
    """
    h_arr = _arr(h)
    if not math.isinf(fn.fprime1):
        floor = fn.fprime1 - _FIELD_SLACK * (1.0 + abs(fn.fprime1))
        if np.any(h_arr < floor) or np.any(np.isnan(h_arr)):
            raise FieldRangeError(f"field below f'(1)={fn.fprime1!r} for {fn.spec}")
    out = np.zeros_like(h_arr)
    inside = h_arr < fn.fprime0
    if np.any(inside):
        with np.errstate(all="ignore"):
            vals = _arr(fn.inv_df(h_arr[inside]))
        out[inside] = np.clip(vals, 0.0, 1.0)
    if np.ndim(h) == 0:
        return float(out)
    return out


# --------------------------------------------------------------------------
# builtin families


def shannon(k: float = 1.0) -> EntropicFunctional:
    def f(p):
        p = _arr(p)
        with np.errstate(all="ignore"):
            return np.where(p > 0, -k * p * np.log(np.where(p > 0, p, 1.0)), 0.0)

    def df(p):
        with np.errstate(divide="ignore"):
            return -k * (np.log(_arr(p)) + 1.0)

    def d2f(p):
        with np.errstate(divide="ignore"):
            return -k / _arr(p)

    def d3f(p):
        with np.errstate(divide="ignore"):
            return k / _arr(p) ** 2

    def inv(h):
        return np.exp(-_arr(h) / k - 1.0)

    def gap1(p):
        with np.errstate(all="ignore"):
            return math.log(k) + np.log(-np.log(_arr(p)))

    return EntropicFunctional("shannon", {"k": float(k)}, f, df, d2f, d3f,
                              fprime0=math.inf, fprime1=-float(k), inv_df=inv,
                              log_gap1=gap1, curvature_ratio=lambda p: -1.0 / _arr(p),
                              inv_gap1=lambda g: np.exp(-_arr(g) / k))


def tsallis(q: float, k: float = 1.0) -> EntropicFunctional:
    """Tsallis kernel; ``q == 1`` returns the Shannon kernel."""
    q = float(q)
    if not q > 0:
        raise ValueError(f"tsallis requires q > 0, got {q}")
    if q == 1.0:
        return shannon(k)
    qm1 = q - 1.0

    def _pow_m1(p):
        # p**(q-1) - 1 without loss near q = 1
        with np.errstate(all="ignore"):
            return np.expm1(qm1 * np.log(_arr(p)))

    def f(p):
        p = _arr(p)
        with np.errstate(all="ignore"):
            val = -k * p * _pow_m1(p) / qm1
        return np.where(p > 0, val, 0.0)

    def df(p):
        p = _arr(p)
        with np.errstate(all="ignore"):
            return -k * (_pow_m1(p) / qm1 + p ** qm1)

    def d2f(p):
        with np.errstate(all="ignore"):
            return -k * q * _arr(p) ** (q - 2.0)

    def d3f(p):
        with np.errstate(all="ignore"):
            return -k * q * (q - 2.0) * _arr(p) ** (q - 3.0)

    def inv(h):
        with np.errstate(all="ignore"):
            return np.exp((np.log1p(-qm1 * _arr(h) / k) - math.log1p(qm1)) / qm1)

    log_c = math.log(k * q / abs(qm1))

    def gap1(p):
        with np.errstate(all="ignore"):
            return log_c + np.log(np.abs(_pow_m1(p)))

    scale = k * q / abs(qm1)

    def inv_gap1(g):
        with np.errstate(all="ignore"):
            return np.exp(np.log1p(-np.sign(qm1) * _arr(g) / scale) / qm1)

    gap0 = inv_gap0 = None
    if q > 1:
        def gap0(p):
            with np.errstate(all="ignore"):
                return log_c + qm1 * np.log(_arr(p))

        def inv_gap0(g):
            with np.errstate(all="ignore"):
                return (_arr(g) / scale) ** (1.0 / qm1)

    fprime0 = k / qm1 if q > 1 else math.inf
    return EntropicFunctional("tsallis", {"q": q, "k": float(k)}, f, df, d2f, d3f,
                              fprime0=fprime0, fprime1=-float(k), inv_df=inv,
                              log_gap0=gap0, log_gap1=gap1,
                              curvature_ratio=lambda p: (q - 2.0) / _arr(p),
                              inv_gap0=inv_gap0, inv_gap1=inv_gap1)


_SMALL_Q = 1e-3
_LARGE_Q = 30.0


def _exp_cutoff(q: float) -> float:
    """1/q - 1/(e^q - 1), the cutoff slope f'(0) at unit scale."""
    if abs(q) < _SMALL_Q:
        return 0.5 - q / 12.0 + q ** 3 / 720.0 - q ** 5 / 30240.0
    if q > 0:
        return 1.0 / q - math.exp(-q) / -math.expm1(-q)
    return 1.0 / q - 1.0 / math.expm1(q)


def exponential(q: float, k: float = 1.0) -> EntropicFunctional:
    """Exponential kernel; ``q == 0`` returns the limit ``k p (1 - p) / 2``."""
    q = float(q)
    k = float(k)
    if q == 0.0:
        return _exponential_limit(k)
    hc = _exp_cutoff(q)

    if q > 0:
        log_den = math.log(-math.expm1(-q))

        def g(p):
            p = _arr(p)
            return np.exp(q * (p - 1.0)) * np.expm1(-q * p) / math.expm1(-q)

        def qw(p):
            return q * np.exp(q * (_arr(p) - 1.0)) / -math.expm1(-q)

        def log_g(p):
            p = _arr(p)
            with np.errstate(all="ignore"):
                return q * (p - 1.0) + np.log(-np.expm1(-q * p)) - log_den

        def log_1mg(p):
            with np.errstate(all="ignore"):
                return np.log(-np.expm1(-q * (1.0 - _arr(p)))) - log_den
    else:
        log_den = math.log(-math.expm1(q))

        def g(p):
            return np.expm1(q * _arr(p)) / math.expm1(q)

        def qw(p):
            return q * np.exp(q * _arr(p)) / math.expm1(q)

        def log_g(p):
            with np.errstate(all="ignore"):
                return np.log(-np.expm1(q * _arr(p))) - log_den

        def log_1mg(p):
            p = _arr(p)
            with np.errstate(all="ignore"):
                return q * p + np.log(-np.expm1(q * (1.0 - p))) - log_den

    def f(p):
        p = _arr(p)
        if abs(q) < _SMALL_Q:
            s = p * (1.0 - p)
            t = 2.0 * p - 1.0
            series = (s / 2.0 + q * s * t / 12.0 - q ** 2 * s ** 2 / 24.0
                      + q ** 3 * s * t * (3.0 * p ** 2 - 3.0 * p - 1.0) / 720.0)
            return k * series
        return k * (p - g(p)) / q

    def df(p):
        return k * (hc - g(p))

    def d2f(p):
        return -k * qw(p)

    def d3f(p):
        return -k * q * qw(p)

    def inv(h):
        x = _arr(h) / k
        with np.errstate(all="ignore"):
            if q >= _LARGE_Q:
                return 1.0 + (math.log1p(-math.exp(-q)) + np.log(1.0 / q - x)) / q
            if q <= -_LARGE_Q:
                return (math.log1p(-math.exp(q)) + np.log(x - 1.0 / q)) / q
            return np.log1p(-math.expm1(q) * (x - hc)) / q

    def gap0(p):
        return math.log(k) + log_g(p)

    def gap1(p):
        return math.log(k) + log_1mg(p)

    def inv_gap0(gap):
        y = _arr(gap) / k
        with np.errstate(all="ignore"):
            if q >= _LARGE_Q:
                return 1.0 + np.log(y * -math.expm1(-q) + math.exp(-q)) / q
            return np.log1p(y * math.expm1(q)) / q

    def inv_gap1(gap):
        y = _arr(gap) / k
        with np.errstate(all="ignore"):
            if q > 0:
                return 1.0 + np.log1p(y * math.expm1(-q)) / q
            return np.log(math.exp(q) + y * -math.expm1(q)) / q

    return EntropicFunctional("exponential", {"q": q, "k": k}, f, df, d2f, d3f,
                              fprime0=k * hc, fprime1=k * (hc - 1.0), inv_df=inv,
                              log_gap0=gap0, log_gap1=gap1,
                              curvature_ratio=lambda p: np.full_like(_arr(p), q),
                              inv_gap0=inv_gap0, inv_gap1=inv_gap1)


def _exponential_limit(k: float) -> EntropicFunctional:
    def f(p):
        p = _arr(p)
        return 0.5 * k * p * (1.0 - p)

    def df(p):
        return k * (0.5 - _arr(p))

    def d2f(p):
        return np.full_like(_arr(p), -k)

    def d3f(p):
        return np.zeros_like(_arr(p))

    def inv(h):
        return 0.5 - _arr(h) / k

    def gap0(p):
        with np.errstate(divide="ignore"):
            return np.log(k * _arr(p))

    def gap1(p):
        with np.errstate(divide="ignore"):
            return np.log(k * (1.0 - _arr(p)))

    return EntropicFunctional("exponential", {"q": 0.0, "k": k}, f, df, d2f, d3f,
                              fprime0=0.5 * k, fprime1=-0.5 * k, inv_df=inv,
                              log_gap0=gap0, log_gap1=gap1,
                              curvature_ratio=lambda p: np.zeros_like(_arr(p)),
                              inv_gap0=lambda g: _arr(g) / k,
                              inv_gap1=lambda g: 1.0 - _arr(g) / k)


def make_builtin(kind: str, **params: float) -> EntropicFunctional:
    """Build ``shannon``, ``tsallis`` or ``exponential`` from keyword params."""
    kind = kind.strip().lower()
    k = params.pop("k", 1.0)
    if kind == "shannon":
        if params:
            raise ValueError(f"shannon takes only k, got {sorted(params)}")
        return shannon(k)
    if kind in ("tsallis", "exponential"):
        if set(params) != {"q"}:
            raise ValueError(f"{kind} needs exactly q (and optional k), got {sorted(params)}")
        ctor = tsallis if kind == "tsallis" else exponential
        return ctor(params["q"], k)
    raise ValueError(f"unknown functional kind {kind!r}")


def parse_functional(spec: str) -> EntropicFunctional:
    """Parse ``"shannon"``, ``"tsallis:q=2"``, ``"exponential:q=1,k=2"``."""
    kind, _, rest = spec.strip().partition(":")
    params = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, eq, val = item.partition("=")
        if not eq:
            raise ValueError(f"bad parameter {item!r} in functional spec {spec!r}")
        try:
            params[key.strip()] = float(val)
        except ValueError:
            raise ValueError(f"bad value for {key.strip()!r} in functional spec {spec!r}") from None
    return make_builtin(kind, **params)


def custom(f, df, d2f, d3f, inv_df=None, *, fprime0=None, fprime1=None,
           name: str = "custom", params: Optional[Mapping[str, float]] = None
           ) -> EntropicFunctional:
    """Wrap user-supplied scalar maps as a functional.

    Missing ``inv_df`` is synthesized by bisection on ``df``.  Missing endpoint
    slopes are evaluated from ``df``; a non-finite ``df(0)`` is taken as +inf.
    """

    def vec(fun):
        return np.vectorize(fun, otypes=[float]) if fun is not None else None

    f, df, d2f, d3f, inv_df = map(vec, (f, df, d2f, d3f, inv_df))
    if fprime0 is None:
        with np.errstate(all="ignore"):
            try:
                fprime0 = float(df(0.0))
            except (ValueError, ZeroDivisionError, OverflowError):
                fprime0 = math.inf
        if not math.isfinite(fprime0):
            fprime0 = math.inf
    if fprime1 is None:
        fprime1 = float(df(1.0))
    return EntropicFunctional(name, dict(params or {"k": 1.0}), f, df, d2f, d3f,
                              fprime0=float(fprime0), fprime1=float(fprime1),
                              inv_df=inv_df)


def mirror(fn: EntropicFunctional) -> EntropicFunctional:
    """The reflected kernel p -> f(1 - p)."""

    def f(p):
        return fn.f(1.0 - _arr(p))

    def df(p):
        return -fn.df(1.0 - _arr(p))

    def d2f(p):
        return fn.d2f(1.0 - _arr(p))

    def d3f(p):
        return -fn.d3f(1.0 - _arr(p))

    def inv(h):
        h = _arr(h)
        # base inverse at -h lands inside (f'(1), f'(0)) whenever h is in range
        return 1.0 - inverse_fprime(fn, -h)

    ratio = None
    if fn.curvature_ratio is not None:
        def ratio(p):
            return -fn.curvature_ratio(1.0 - _arr(p))

    def swap(gap):
        if gap is None:
            return None
        return lambda p: gap(1.0 - _arr(p))

    def reflect(inv_gap):
        if inv_gap is None:
            return None
        return lambda g: 1.0 - inv_gap(g)

    return EntropicFunctional(f"mirror({fn.spec})", dict(fn.params), f, df, d2f, d3f,
                              fprime0=-fn.fprime1, fprime1=-fn.fprime0, inv_df=inv,
                              log_gap0=swap(fn.log_gap1), log_gap1=swap(fn.log_gap0),
                              curvature_ratio=ratio,
                              inv_gap0=reflect(fn.inv_gap1), inv_gap1=reflect(fn.inv_gap0))


# --------------------------------------------------------------------------
# scalar analytics


def classify_additivity(fn: EntropicFunctional, grid_size: int = 1000) -> AdditivityClass:
    """Additivity class from the sign of (p f''(p))' = f'' + p f''' on a grid."""
    if grid_size < 100:
        raise ValueError("grid_size must be at least 100")
    p = np.linspace(0.0, 1.0, grid_size + 2)[1:-1]
    with np.errstate(all="ignore"):
        d2 = _arr(fn.d2f(p))
        d3 = _arr(fn.d3f(p))
    slope = d2 + p * d3
    scale = np.maximum(1.0, np.abs(d2) + np.abs(p * d3))
    zero = np.abs(slope) <= 1e-10 * scale
    if np.all(zero):
        return AdditivityClass.ADDITIVE
    if np.all((slope <= 0) | zero):
        return AdditivityClass.SUB_ADDITIVE
    if np.all((slope >= 0) | zero):
        return AdditivityClass.SUPER_ADDITIVE
    return AdditivityClass.INDETERMINATE


def gamma_coefficient(fn: EntropicFunctional) -> float:
    """Quadratic coefficient of p+(b) near b = 0: -f'''(1/4) / (4 f''(1/4))."""
    if fn.curvature_ratio is not None:
        return float(-0.25 * fn.curvature_ratio(0.25))
    return float(-0.25 * fn.d3f(0.25) / fn.d2f(0.25))
