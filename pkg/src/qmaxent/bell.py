"""Two-qubit inference from the Bell-CHSH expectation value.

Constraining ``<B> = b`` with ``B = |Phi+><Phi+| - |Psi-><Psi-|`` yields a
Bell-diagonal density with weights ``p+`` (on Phi+), ``p-`` (on Psi-) and
``p0`` (shared by Psi+ and Phi-).  Maximizing ``S_f`` reduces to a single
monotone scalar equation, solved here by a bracketed root; above the
critical field ``b_c`` the weight ``p-`` is pinned at zero.

The generalized observable ``B_a = |Phi+><Phi+| - a |Psi-><Psi-|`` is handled
by the generic solver in :mod:`qmaxent.solver`; its scalar counterpart is
only used for the critical field and the fake-entanglement interval.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple

import numpy as np

from .functionals import EntropicFunctional
from .rootfind import BracketError, bracketed_root
from .solver import ConstraintSet, SolverOptions, solve

__all__ = [
    "BellBasis",
    "BellDiagonalState",
    "BellReport",
    "Regime",
    "bell_basis",
    "bell_observable",
    "chsh_observable",
    "critical_b",
    "critical_b_closed_form",
    "critical_b_root",
    "exponential_p_plus",
    "fake_entanglement_interval",
    "min_largest_eigenvalue_state",
    "q_threshold",
    "separability",
    "small_b_expansion",
    "solve_bell",
    "solve_bell_alpha",
    "solve_with_dispersion",
]

ENTANGLEMENT_GUARD = 1e-12
_EDGE = 1e-14
_ROOT_XTOL = 1e-12


class Regime(enum.Enum):
    INTERIOR = "Interior"
    CUTOFF = "Cutoff"


class BellBasis(NamedTuple):
    phi_plus: np.ndarray
    phi_minus: np.ndarray
    psi_plus: np.ndarray
    psi_minus: np.ndarray


def bell_basis() -> BellBasis:
    """Bell states in the product ordering (uu, ud, du, dd)."""
    s = 1.0 / math.sqrt(2.0)
    return BellBasis(
        phi_plus=np.array([s, 0.0, 0.0, s]),
        phi_minus=np.array([s, 0.0, 0.0, -s]),
        psi_plus=np.array([0.0, s, s, 0.0]),
        psi_minus=np.array([0.0, s, -s, 0.0]),
    )


def _projector(v) -> np.ndarray:
    return np.outer(v, np.conj(v)).astype(complex)


def bell_observable(alpha: float = 1.0) -> np.ndarray:
    """``B_a = |Phi+><Phi+| - a |Psi-><Psi-|``."""
    if alpha < 0:
        raise ValueError(f"alpha must be non-negative, got {alpha}")
    basis = bell_basis()
    return _projector(basis.phi_plus) - alpha * _projector(basis.psi_minus)


def chsh_observable() -> np.ndarray:
    """The scaled Bell-CHSH observable, eigenvalues {1, -1, 0, 0}."""
    return bell_observable(1.0)


@dataclass(frozen=True)
class BellDiagonalState:
    p_plus: float
    p_minus: float
    p_zero: float

    def __post_init__(self):
        weights = (self.p_plus, self.p_minus, self.p_zero)
        if min(weights) < -1e-12:
            raise ValueError(f"negative Bell weight in {weights}")
        if abs(self.p_plus + self.p_minus + 2.0 * self.p_zero - 1.0) > 1e-12:
            raise ValueError(f"Bell weights {weights} do not sum to 1")

    @property
    def largest_eigenvalue(self) -> float:
        return max(self.p_plus, self.p_minus, self.p_zero)

    def swapped(self) -> "BellDiagonalState":
        return BellDiagonalState(self.p_minus, self.p_plus, self.p_zero)

    def matrix(self) -> np.ndarray:
        basis = bell_basis()
        return (self.p_plus * _projector(basis.phi_plus)
                + self.p_minus * _projector(basis.psi_minus)
                + self.p_zero * (_projector(basis.psi_plus) + _projector(basis.phi_minus)))

    @classmethod
    def from_matrix(cls, rho) -> "BellDiagonalState":
        """Bell-basis weights of ``rho``; the two p0 entries are averaged."""
        rho = np.asarray(rho)
        basis = bell_basis()

        def weight(v):
            return float(np.real(np.conj(v) @ rho @ v))

        p_plus, p_minus = weight(basis.phi_plus), weight(basis.psi_minus)
        return cls(p_plus, p_minus, 0.5 * (1.0 - p_plus - p_minus))


@dataclass(frozen=True)
class BellReport:
    state: BellDiagonalState
    b: float
    b_c: float
    regime: Regime
    largest_eigenvalue: float
    concurrence: float
    entangled: bool
    fake: bool
    lambda0: float
    lambda1: float
    entropy: float
    alpha: float = 1.0
    q_threshold: Optional[float] = None


# --------------------------------------------------------------------------
# scalar stationarity in log-gap form


def _side(fn: EntropicFunctional) -> int:
    """Pick the slope gap (0: below f'(0), 1: above f'(1)) that resolves best.

    For saturating kernels one of the gaps is flat to machine precision over
    most of (0, 1); the other keeps its full spread.
    """
    if fn.log_gap0 is None:
        return 1
    probe = np.array([0.25, 0.75])
    spread0 = abs(float(np.diff(fn.log_gap0(probe))[0]))
    spread1 = abs(float(np.diff(fn.log_gap1(probe))[0]))
    return 0 if spread0 >= spread1 else 1


def _stationarity(fn: EntropicFunctional, alpha: float, side: int):
    """``G(p+, p-, p0) = a f'(p+) + f'(p-) - (1+a) f'(p0)`` up to a positive factor.

    Returned as a log ratio, so only its sign and monotonicity matter; it
    decreases along the constraint line as p- grows.
    """
    log_a = math.log(alpha) if alpha > 0 else -math.inf
    log_1pa = math.log1p(alpha)

    if side == 0:
        def G(pp, pm, p0):
            lg = fn.log_gap0
            return float(log_1pa + lg(p0) - np.logaddexp(log_a + lg(pp), lg(pm)))
    else:
        def G(pp, pm, p0):
            lg = fn.log_gap1
            return float(np.logaddexp(log_a + lg(pp), lg(pm)) - log_1pa - lg(p0))
    return G


def _slope_difference(fn: EntropicFunctional, side: int, x: float, y: float) -> float:
    """``f'(x) - f'(y)`` computed through the slope gaps when they resolve better."""
    if side == 0:
        return float(np.exp(fn.log_gap0(y)) - np.exp(fn.log_gap0(x)))
    return float(np.exp(fn.log_gap1(x)) - np.exp(fn.log_gap1(y)))


def _scalar_solution(b: float, alpha: float, fn: EntropicFunctional,
                     xtol: float = _ROOT_XTOL) -> Tuple[float, float, float]:
    """(p+, p-, p0) for ``0 <= b < 1`` from the scalar equation, or the cutoff state.

    The unknown is ``p-`` on (0, (1-b)/(1+a)), i.e. ``p+ = b + a p-`` on the
    natural bracket (b, (a+b)/(1+a)); ``p-`` stays exact this way near the cutoff.
    """
    side = _side(fn)
    G = _stationarity(fn, alpha, side)
    top = (1.0 - b) / (1.0 + alpha)

    def point(pm):
        return b + alpha * pm, pm, 0.5 * (1.0 - b - (1.0 + alpha) * pm)

    def residual(pm):
        return G(*point(pm))

    lo, hi = _EDGE, top - _EDGE
    if hi <= lo or residual(lo) <= 0.0:
        return b, 0.0, 0.5 * (1.0 - b)
    try:
        pm = bracketed_root(residual, lo, hi, xtol=xtol)
    except BracketError:
        # the upper end failed to turn negative within float range: the
        # stationary point sits against p0 -> 0, which needs b -> 1
        pm = hi
    pp, pm, p0 = point(pm)
    return pp, pm, max(p0, 0.0)


# --------------------------------------------------------------------------
# critical field


def critical_b_closed_form(fn: EntropicFunctional) -> Optional[float]:
    """Closed-form ``b_c`` for the Tsallis and exponential families (else None)."""
    q = fn.params.get("q")
    if fn.name == "tsallis" and q is not None:
        if q <= 1.0:
            return 1.0
        return 1.0 / (1.0 + 2.0 ** (1.0 - 1.0 / (q - 1.0)))
    if fn.name == "exponential" and q is not None and q >= 1e-2:
        # cancellation-free only for q > 0; small q loses digits in 2/q
        beta = (1.0 + math.sqrt(1.0 + math.exp(-q) / 27.0)) ** (1.0 / 3.0)
        return 1.0 / 3.0 + (2.0 / q) * math.log(beta - math.exp(-q / 3.0) / (3.0 * beta))
    return None


def critical_b_root(fn: EntropicFunctional, alpha: float = 1.0, xtol: float = 1e-13) -> float:
    """Root in b of ``a f'(b) + f'(0) - (1+a) f'((1-b)/2)``; 1 when ``f'(0) = inf``."""
    if math.isinf(fn.fprime0) or alpha == 0.0:
        return 1.0
    if _side(fn) == 1:
        G = _stationarity(fn, alpha, 1)

        def residual(b):
            return G(b, 0.0, 0.5 * (1.0 - b))
    else:
        # p- = 0 drops out of the log-sum since log_gap0(0) = -inf
        lg = fn.log_gap0
        offset = math.log1p(alpha) - math.log(alpha)

        def residual(b):
            return float(offset + lg(0.5 * (1.0 - b)) - lg(b))

    return bracketed_root(residual, _EDGE, 1.0 - _EDGE, xtol=xtol)


def critical_b(fn: EntropicFunctional, alpha: float = 1.0) -> float:
    """Critical field: closed form where available (``alpha = 1``), else the root."""
    if alpha == 1.0:
        closed = critical_b_closed_form(fn)
        if closed is not None:
            return closed
    return critical_b_root(fn, alpha)


def q_threshold(fn: EntropicFunctional, alpha: float = 1.0) -> Optional[float]:
    """q above which ``b_c(alpha) <= 1/2`` (no fake entanglement); None off-family."""
    if fn.name == "tsallis":
        return math.inf if alpha == 0 else 1.0 + math.log2(1.0 + 1.0 / alpha)
    if fn.name == "exponential":
        return math.inf if alpha == 0 else -4.0 * math.log(alpha)
    return None


# --------------------------------------------------------------------------
# reports


def separability(state: BellDiagonalState) -> Tuple[bool, float]:
    """(entangled, concurrence) for a Bell-diagonal state."""
    pM = state.largest_eigenvalue
    entangled = pM > 0.5 + ENTANGLEMENT_GUARD
    return entangled, (2.0 * pM - 1.0) if entangled else 0.0


def _report(state, b, b_c, fn, lambda0, lambda1, alpha=1.0, threshold=None) -> BellReport:
    entangled, conc = separability(state)
    S = float(np.sum(fn.f(np.array([state.p_plus, state.p_minus, state.p_zero, state.p_zero]))))
    return BellReport(
        state=state,
        b=b,
        b_c=b_c,
        regime=Regime.CUTOFF if abs(b) >= b_c else Regime.INTERIOR,
        largest_eigenvalue=state.largest_eigenvalue,
        concurrence=conc,
        entangled=entangled,
        fake=entangled and abs(b) < 0.5,
        lambda0=lambda0,
        lambda1=lambda1,
        entropy=S,
        alpha=alpha,
        q_threshold=threshold,
    )


def solve_bell(b: float, fn: EntropicFunctional) -> BellReport:
    """Max-entropy Bell-diagonal state with ``<B> = b``."""
    b = float(b)
    if not -1.0 <= b <= 1.0:
        raise ValueError(f"b must lie in [-1, 1], got {b}")
    b_c = critical_b(fn)
    a = abs(b)
    if a >= b_c:
        pp, pm, p0 = a, 0.0, 0.5 * (1.0 - a)
    else:
        pp, pm, p0 = _scalar_solution(a, 1.0, fn)
    side = _side(fn)
    with np.errstate(all="ignore"):
        lambda1 = _slope_difference(fn, side, pp, p0) if p0 > 0 else -math.inf
        lambda0 = float(fn.df(p0)) if p0 > 0 else fn.fprime0
    state = BellDiagonalState(pp, pm, p0)
    if b < 0:
        state, lambda1 = state.swapped(), -lambda1
    return _report(state, b, b_c, fn, lambda0, lambda1)


def exponential_p_plus(b: float, q: float) -> float:
    """Closed-form p+ for the exponential kernel below its critical field."""
    if q == 0.0:
        return 0.25 * (1.0 + 2.0 * b)
    x = abs(b * q / 2.0)
    log_cosh = x + math.log1p(math.exp(-2.0 * x)) - math.log(2.0)
    return 0.25 * (1.0 + 2.0 * b) - log_cosh / (2.0 * q)


def min_largest_eigenvalue_state(b: float) -> BellDiagonalState:
    """The feasible state with the smallest largest eigenvalue at ``<B> = b``."""
    if not 0.0 <= b <= 1.0:
        raise ValueError(f"b must lie in [0, 1], got {b}")
    if b <= 1.0 / 3.0:
        return BellDiagonalState(0.25 * (1.0 + b), 0.25 * (1.0 - 3.0 * b), 0.25 * (1.0 + b))
    return BellDiagonalState(b, 0.0, 0.5 * (1.0 - b))


def solve_with_dispersion(b: float, b2: float) -> BellDiagonalState:
    """Max-entropy state given ``<B> = b`` and ``<B^2> = b2``, the same for every f."""
    if not (abs(b) <= b2 <= 1.0):
        raise ValueError(f"inconsistent constraints: need |b| <= b2 <= 1, got b={b}, b2={b2}")
    return BellDiagonalState(0.5 * (b2 + b), 0.5 * (b2 - b), 0.5 * (1.0 - b2))


def _p_plus(b: float, fn: EntropicFunctional, alpha: float) -> float:
    if alpha == 1.0:
        return solve_bell(b, fn).state.p_plus
    if b >= critical_b(fn, alpha):
        return b
    return _scalar_solution(b, alpha, fn)[0]


def fake_entanglement_interval(fn: EntropicFunctional, alpha: float = 1.0,
                               tol: float = 1e-10) -> Optional[Tuple[float, float]]:
    """Open interval (b*, 1/2) of entangled inferences at b < 1/2, or None.

    ``p+`` increases with b, so b* is the root of ``p+(b) = 1/2``.  For
    ``alpha != 1`` the scalar equation of ``B_alpha`` is used.
    """
    def excess(b):
        return _p_plus(b, fn, alpha) - 0.5

    if excess(0.5) <= 0.0:
        return None
    return bracketed_root(excess, 0.0, 0.5, xtol=tol), 0.5


def small_b_expansion(fn: EntropicFunctional, b: float) -> float:
    """Quadratic small-field approximant ``(1 + 2b + gamma b^2) / 4``."""
    from .functionals import gamma_coefficient

    if abs(b) > 0.1:
        raise ValueError(f"the expansion is only meant for |b| <= 0.1, got {b}")
    return 0.25 * (1.0 + 2.0 * b + gamma_coefficient(fn) * b * b)


def solve_bell_alpha(b: float, alpha: float, fn: EntropicFunctional,
                     opts: Optional[SolverOptions] = None) -> BellReport:
    """Max-entropy state with ``<B_a> = b``, through the generic dual solver."""
    b, alpha = float(b), float(alpha)
    if alpha < 0:
        raise ValueError(f"alpha must be non-negative, got {alpha}")
    if not -alpha <= b <= 1.0:
        raise ValueError(f"b={b} is infeasible for alpha={alpha}: need -alpha <= b <= 1")
    if b < 0:
        raise ValueError("solve_bell_alpha covers b >= 0")
    b_c = critical_b(fn, alpha)
    threshold = q_threshold(fn, alpha)
    if b == 1.0:
        # the only feasible state
        state = BellDiagonalState(1.0, 0.0, 0.0)
        return _report(state, b, b_c, fn, math.nan, math.nan, alpha, threshold)
    cs = ConstraintSet.with_identity([bell_observable(alpha)], [b])
    sol = solve(cs, fn, opts)
    state = BellDiagonalState.from_matrix(sol.rho.matrix)
    return _report(state, b, b_c, fn, float(sol.lambda_[0]), float(sol.lambda_[1]),
                   alpha, threshold)
