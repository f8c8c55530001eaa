"""Maximum-entropy inference under expectation-value constraints.

The density maximizing ``S_f`` subject to ``Tr(rho O_a) = t_a`` is
``rho = p(h)`` with field ``h = sum_a lambda_a O_a``, where ``p`` applies
:func:`~qmaxent.functionals.inverse_fprime` to the eigenvalues of ``h``.
The multipliers minimize the convex dual

    Phi(lambda) = Tr[f(rho) - rho h] + sum_a lambda_a t_a

whose gradient is ``t_a - <O_a>`` and whose Hessian is the curvature
matrix ``A``.  :func:`solve` runs damped Newton on ``Phi``.

Internally the field is carried relative to an endpoint slope ``r`` (``f'(0)``
or ``f'(1)``), i.e. as ``h - r I``.  For kernels whose slope saturates
(large q) the occupied eigenvalues of ``h`` sit within 1e-10 of the cutoff,
and only the shifted field resolves them to full precision.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

from .density import DEGENERACY_GAP, DensityOperator, eigh, is_hermitian
from .functionals import EntropicFunctional, FieldRangeError, inverse_fprime

__all__ = [
    "ConstraintSet",
    "CurvatureData",
    "InfeasibleError",
    "MaxEntSolution",
    "MaxIterationsError",
    "SolverError",
    "SolverOptions",
    "TraceRow",
    "curvature",
    "density_from_field",
    "dual_objective",
    "primal_sensitivities",
    "solve",
]

log = logging.getLogger(__name__)

_MAX_SHRINK = 60
_RESOLVED_DP = 1e-7
_DIRECT_ITERS = 50
_STAGE_ITERS = 12
_MIN_STRIDE = 1e-6
_LS_RTOL = 1e-3
_STALL_STEPS = 25
_STALL_DELTA = 1e-14


class SolverError(RuntimeError):
    def __init__(self, message: str, solution: "Optional[MaxEntSolution]" = None):
        super().__init__(message)
        self.solution = solution


class InfeasibleError(SolverError):
    """Residuals stalled above tolerance; the targets are likely unattainable."""


class MaxIterationsError(SolverError):
    pass


@dataclass
class ConstraintSet:
    """Observables ``O_0 = I, O_1, ..., O_m`` with their target expectations."""

    observables: List[np.ndarray]
    targets: np.ndarray

    def __post_init__(self):
        self.observables = [np.asarray(O, dtype=complex) for O in self.observables]
        self.targets = np.asarray(self.targets, dtype=float)
        if not self.observables:
            raise ValueError("need at least the identity observable")
        n = self.observables[0].shape[0]
        if len(self.targets) != len(self.observables):
            raise ValueError(f"{len(self.observables)} observables but {len(self.targets)} targets")
        for a, O in enumerate(self.observables):
            if O.shape != (n, n):
                raise ValueError(f"observable {a} has shape {O.shape}, expected {(n, n)}")
            if not is_hermitian(O):
                raise ValueError(f"observable {a} is not Hermitian")
        if np.max(np.abs(self.observables[0] - np.eye(n))) > 1e-12:
            raise ValueError("first observable must be the identity")
        if abs(self.targets[0] - 1.0) > 1e-12:
            raise ValueError("normalization target must be 1")
        vecs = np.array([O.ravel() for O in self.observables])
        if np.linalg.svd(vecs, compute_uv=False).min() <= 1e-10:
            raise ValueError("observables are linearly dependent")

    @classmethod
    def with_identity(cls, observables: Sequence, targets: Sequence[float]) -> "ConstraintSet":
        """Prepend ``O_0 = I`` (target 1) to the given observables."""
        observables = [np.asarray(O, dtype=complex) for O in observables]
        if not observables:
            raise ValueError("with_identity needs at least one observable to size the identity")
        n = observables[0].shape[0]
        return cls([np.eye(n, dtype=complex)] + observables, [1.0] + list(targets))

    @property
    def dim(self) -> int:
        return self.observables[0].shape[0]

    @property
    def size(self) -> int:
        return len(self.observables)

    def field(self, lam) -> np.ndarray:
        return np.tensordot(np.asarray(lam, dtype=float), np.array(self.observables), axes=1)


@dataclass
class SolverOptions:
    """Newton controls.

    Convergence means ``max |t_a - <O_a>| <= tol``, or below the float
    resolution floor reported as :attr:`MaxEntSolution.residual_floor` when
    that is larger (only near a cutoff with a wide field spread).
    """

    tol: float = 1e-10
    max_iter: int = 200
    ridge: float = 1e-12
    verbose: bool = False


@dataclass(frozen=True)
class CurvatureData:
    A: np.ndarray
    C: np.ndarray


class TraceRow(NamedTuple):
    iteration: int
    dual_value: float
    residual_norm: float
    step_length: float


@dataclass
class MaxEntSolution:
    lambda_: np.ndarray
    rho: DensityOperator
    field: np.ndarray
    dual_value: float
    entropy: float
    residuals: np.ndarray
    curvature: CurvatureData
    iterations: int
    trace: List[TraceRow] = field(default_factory=list)
    residual_floor: float = 0.0


class _Reference(NamedTuple):
    value: float
    side: Optional[int]  # 0: gaps below f'(0), 1: gaps above f'(1), None: absolute


def _reference(fn: EntropicFunctional, n: int) -> _Reference:
    has0, has1 = fn.inv_gap0 is not None, fn.inv_gap1 is not None
    if has0 and has1:
        has0 = float(fn.log_gap0(1.0 / n)) <= float(fn.log_gap1(1.0 / n))
    if has0:
        return _Reference(fn.fprime0, 0)
    if has1:
        return _Reference(fn.fprime1, 1)
    return _Reference(0.0, None)


def _probabilities(fn: EntropicFunctional, ref: _Reference, x: np.ndarray) -> np.ndarray:
    """Eigenvalue probabilities for shifted field eigenvalues ``x = h - r``."""
    if ref.side is None:
        return np.asarray(inverse_fprime(fn, x), dtype=float)
    span = fn.fprime0 - fn.fprime1
    slack = 1e-12 * (1.0 + abs(ref.value))
    gap = -x if ref.side == 0 else x
    if ref.side == 0:
        if np.any(gap > span + slack):
            raise FieldRangeError(f"field below f'(1) for {fn.spec}")
        live = gap > 0
        inv = fn.inv_gap0
    else:
        if np.any(gap < -slack):
            raise FieldRangeError(f"field below f'(1) for {fn.spec}")
        gap = np.maximum(gap, 0.0)
        live = gap < span
        inv = fn.inv_gap1
    p = np.zeros_like(gap)
    if np.any(live):
        with np.errstate(all="ignore"):
            p[live] = np.asarray(inv(gap[live]), dtype=float)
    if np.any(np.isnan(p)):
        raise FieldRangeError(f"field outside the domain of {fn.spec}")
    return np.clip(p, 0.0, 1.0)


class _FieldState(NamedTuple):
    ref: float
    shifted: np.ndarray  # h - r I
    x: np.ndarray        # eigenvalues of the shifted field, descending
    V: np.ndarray
    p: np.ndarray
    rotated: np.ndarray  # V^dagger O_a V stacked over a

    @property
    def h(self) -> np.ndarray:
        return self.shifted + self.ref * np.eye(len(self.x))

    @property
    def hvals(self) -> np.ndarray:
        return self.x + self.ref


def _shifted_state(theta, cs: ConstraintSet, fn: EntropicFunctional,
                   ref: _Reference) -> _FieldState:
    shifted = cs.field(theta)
    x, V = eigh(shifted, tol=1e-9)
    p = _probabilities(fn, ref, x)
    rotated = np.einsum("ki,akl,lj->aij", V.conj(), np.array(cs.observables), V)
    return _FieldState(ref.value, shifted, x, V, p, rotated)


def _field_state(lam, cs: ConstraintSet, fn: EntropicFunctional) -> _FieldState:
    ref = _reference(fn, cs.dim)
    theta = np.array(lam, dtype=float)
    theta[0] -= ref.value
    return _shifted_state(theta, cs, fn, ref)


def _expectations(state: _FieldState) -> np.ndarray:
    return np.real(np.einsum("i,aii->a", state.p, state.rotated))


def _dual_from_state(theta, cs, fn, state):
    # Phi = Tr f(rho) - Tr rho h + lambda.t, written in the shifted variables
    p = state.p
    value = float(np.sum(fn.f(p)) - p @ state.x + np.dot(theta, cs.targets)
                  + state.ref * (1.0 - p.sum()))
    return value, cs.targets - _expectations(state)


def density_from_field(h, fn: EntropicFunctional) -> DensityOperator:
    """``p(h)``: eigenbasis of ``h``, eigenvalues mapped through ``[f']^{-1}``.

    The result is not renormalized; its trace is whatever the field implies.
    """
    hvals, V = eigh(h, tol=1e-9)
    p = inverse_fprime(fn, hvals)
    return DensityOperator.from_spectrum(p, V)


def dual_objective(lam, cs: ConstraintSet, fn: EntropicFunctional):
    """Convex dual value and its gradient ``t - <O>`` at multipliers ``lam``."""
    state = _field_state(lam, cs, fn)
    theta = np.array(lam, dtype=float)
    theta[0] -= state.ref
    return _dual_from_state(theta, cs, fn, state)


def _slopes(fn: EntropicFunctional, p) -> np.ndarray:
    """p'(h_i) = 1/f''(p_i) inside the support, 0 beyond the cutoff."""
    dp = np.zeros_like(p)
    live = p > 0
    if np.any(live):
        with np.errstate(divide="ignore"):
            dp[live] = 1.0 / np.asarray(fn.d2f(p[live]), dtype=float)
    return dp


def _curvature_from_state(fn, state: _FieldState) -> CurvatureData:
    h, p = state.x, state.p
    dp = _slopes(fn, p)
    dh = h[:, None] - h[None, :]
    # the 1e-9 degeneracy rule only applies while p_i - p_j is unresolved: for
    # saturating kernels the whole field spread can be below 1e-9
    dpij = np.abs(p[:, None] - p[None, :])
    near = (np.abs(dh) < DEGENERACY_GAP) & (dpij <= _RESOLVED_DP * np.maximum(p[:, None], p[None, :]))
    with np.errstate(divide="ignore", invalid="ignore"):
        C = (p[None, :] - p[:, None]) / dh
    C = np.where(near, -0.5 * (dp[:, None] + dp[None, :]), C)
    O = state.rotated
    A = np.real(np.einsum("aij,bij,ij->ab", O, O.conj(), C))
    return CurvatureData(0.5 * (A + A.T), C)


def curvature(lam, cs: ConstraintSet, fn: EntropicFunctional) -> CurvatureData:
    """Curvature ``A`` of the dual (and the kernel matrix ``C``) at ``lam``."""
    return _curvature_from_state(fn, _field_state(np.asarray(lam, dtype=float), cs, fn))


def _newton_direction(A: np.ndarray, grad: np.ndarray, ridge: float) -> np.ndarray:
    """Solve ``(A + mu I) d = -grad``; the ridge ``mu`` only enters if A is near-singular."""
    w = np.linalg.eigvalsh(A)
    top = max(float(w[-1]), 0.0)
    mu = 0.0
    if w[0] <= 1e-12 * max(top, 1.0):
        mu = max(ridge, 1e-10 * top)
    M = A + mu * np.eye(len(grad))
    return np.linalg.solve(M, -grad)


def _initial_lambda(cs: ConstraintSet, fn: EntropicFunctional, ref: _Reference) -> np.ndarray:
    """Shifted multipliers of the uniform state, f'(1/n) - r."""
    lam = np.zeros(cs.size)
    u = 1.0 / cs.dim
    if ref.side == 0:
        lam[0] = -math.exp(float(fn.log_gap0(u)))
    elif ref.side == 1:
        lam[0] = math.exp(float(fn.log_gap1(u)))
    else:
        lam[0] = float(fn.df(u))
    return lam


def _residual_floor(cs: ConstraintSet, fn: EntropicFunctional, state: _FieldState) -> float:
    """Float resolution of the residuals at this field.

    Eigenvalues of the shifted field carry an absolute error of about
    ``eps * ||h - r I||``, which ``p`` amplifies by ``|p'(h_i)|``.  Near a
    cutoff with a large field spread this exceeds the requested tolerance.
    """
    dp = np.abs(_slopes(fn, state.p))
    if not np.all(np.isfinite(dp)):
        return math.inf
    norms = [np.linalg.norm(O, 2) for O in cs.observables]
    return float(np.finfo(float).eps * np.linalg.norm(state.shifted, 2) * dp.sum() * max(norms))


def _converged(grad, cs, fn, state, tol) -> bool:
    res = float(np.max(np.abs(grad)))
    return res <= tol or res <= _residual_floor(cs, fn, state)


def _package(theta, cs, fn, state, iterations, trace) -> MaxEntSolution:
    value, grad = _dual_from_state(theta, cs, fn, state)
    rho = DensityOperator.from_spectrum(state.p, state.V)
    S = float(np.sum(fn.f(rho.spectrum)))
    lam = np.array(theta, dtype=float)
    lam[0] += state.ref
    return MaxEntSolution(
        lambda_=lam,
        rho=rho,
        field=state.h,
        dual_value=float(S - state.p @ state.x - state.ref * state.p.sum()),
        entropy=S,
        residuals=-grad,
        curvature=_curvature_from_state(fn, state),
        iterations=iterations,
        trace=trace,
        residual_floor=_residual_floor(cs, fn, state),
    )



def _line_search(lam, direction, cs, fn, ref):
    """Approximate minimizer of the dual along ``direction``.

    The dual is convex along the ray, so its directional derivative
    ``phi'(t) = grad(lam + t d) . d`` is non-decreasing.  The full step is
    taken when ``phi'(1) <= 0``; otherwise the step halves until the
    derivative turns non-positive and the sign change is then refined.  Using
    the derivative rather than dual values keeps the search meaningful after
    the dual decrease falls below float resolution.
    """
    cache = {}

    def evaluate(t):
        if t not in cache:
            trial = lam + t * direction
            try:
                st = _shifted_state(trial, cs, fn, ref)
            except FieldRangeError:
                cache[t] = None
            else:
                v, g = _dual_from_state(trial, cs, fn, st)
                cache[t] = (trial, st, v, g, float(g @ direction))
        return cache[t]

    t = 1.0
    hi = None
    for _ in range(_MAX_SHRINK):
        r = evaluate(t)
        if r is not None and r[4] <= 0.0:
            break
        hi = t
        t *= 0.5
    else:
        return None
    if hi is None:
        return evaluate(t)[:4] + (t,)
    lo = t
    # phi'(lo) <= 0 < phi'(hi) (or hi infeasible): bisect on the derivative
    while hi - lo > _LS_RTOL * lo:
        mid = 0.5 * (lo + hi)
        r = evaluate(mid)
        if r is not None and r[4] <= 0.0:
            lo = mid
        else:
            hi = mid
    return evaluate(lo)[:4] + (lo,)


class _Run(NamedTuple):
    ok: bool
    lam: np.ndarray
    state: _FieldState
    used: int
    error: Optional[type]
    message: str


def _newton(cs, fn, ref, lam, opts, budget, trace) -> _Run:
    """Damped Newton from shifted multipliers ``lam`` for at most ``budget`` steps.

    Accepted steps are appended to ``trace``, numbered after its last row.
    """
    state = _shifted_state(lam, cs, fn, ref)
    value, grad = _dual_from_state(lam, cs, fn, state)
    stall = 0
    for used in range(budget + 1):
        if _converged(grad, cs, fn, state, opts.tol):
            return _Run(True, lam, state, used, None, "")
        if used == budget:
            break
        res_norm = float(np.max(np.abs(grad)))
        A = _curvature_from_state(fn, state).A
        direction = _newton_direction(A, grad, opts.ridge)
        accepted = _line_search(lam, direction, cs, fn, ref)
        if accepted is None or accepted[2] > value + 1e-12 * (1.0 + abs(value)):
            return _Run(False, lam, state, used, InfeasibleError,
                        f"line search failed with residual {res_norm:.3g}")
        delta = abs(accepted[2] - value)
        lam, state, value, grad, step = accepted
        it = trace[-1].iteration + 1
        trace.append(TraceRow(it, value, float(np.max(np.abs(grad))), step))
        if opts.verbose:
            log.info("iter %d  dual %.17g  residual %.3e  step %.3g", it, value, trace[-1][2], step)
        stall = stall + 1 if delta < _STALL_DELTA else 0
        if stall >= _STALL_STEPS and not _converged(grad, cs, fn, state, opts.tol):
            return _Run(False, lam, state, used + 1, InfeasibleError,
                        f"residual stalled at {trace[-1][2]:.3g} for {stall} steps")
    return _Run(False, lam, state, budget, MaxIterationsError,
                f"residual {trace[-1][2]:.3g} after {budget} steps")


def _continuation(cs, fn, ref, opts, budget, trace) -> _Run:
    """Walk the targets from the uniform state's values to ``cs.targets``.

    Each stage is a short warm-started Newton solve; the stride doubles on
    success and shrinks by 4 on failure.  Trace rows of every stage are kept,
    so their dual values refer to the intermediate targets.  Used when plain Newton from the
    uniform start fails, typically for strongly saturating kernels where the
    dual is far from quadratic.
    """
    start = np.array([np.trace(O).real / cs.dim for O in cs.observables])
    lam = _initial_lambda(cs, fn, ref)
    s, stride, used = 0.0, 0.25, 0
    stage_opts = SolverOptions(tol=max(opts.tol, 1e-8), max_iter=_STAGE_ITERS,
                               ridge=opts.ridge, verbose=opts.verbose)
    run = None
    while used < budget:
        s_next = min(1.0, s + stride)
        final = s_next == 1.0
        stage = ConstraintSet(cs.observables, start + s_next * (cs.targets - start))
        run = _newton(stage, fn, ref, lam, opts if final else stage_opts,
                      budget - used if final else min(_STAGE_ITERS, budget - used), trace)
        used += run.used
        if run.ok:
            if final:
                return run._replace(used=used)
            s, lam, stride = s_next, run.lam, min(2.0 * stride, 1.0 - s_next)
            continue
        if final and run.error is MaxIterationsError and used >= budget:
            break
        stride *= 0.25
        if stride < _MIN_STRIDE:
            return _Run(False, lam, run.state, used, InfeasibleError,
                        f"continuation stalled at fraction {s:.6g} of the targets")
    if run is None:
        return _Run(False, lam, _shifted_state(lam, cs, fn, ref), used, MaxIterationsError, "")
    return run._replace(used=used)


def solve(cs: ConstraintSet, fn: EntropicFunctional,
          opts: Optional[SolverOptions] = None, lambda0=None) -> MaxEntSolution:
    """Maximize ``S_f`` subject to the constraint set by damped dual Newton.

    Newton starts from ``lambda0`` or the uniform-state multipliers.  If that
    fails within its share of ``opts.max_iter``, the remaining budget goes to
    a continuation in the targets starting from the uniform state.
    """
    opts = opts or SolverOptions()
    ref = _reference(fn, cs.dim)
    lam = _initial_lambda(cs, fn, ref) if lambda0 is None else np.array(lambda0, dtype=float)
    if lambda0 is not None:
        lam[0] -= ref.value
    state = _shifted_state(lam, cs, fn, ref)
    value, grad = _dual_from_state(lam, cs, fn, state)
    trace: List[TraceRow] = [TraceRow(0, value, float(np.max(np.abs(grad))), 0.0)]

    direct_budget = min(opts.max_iter, _DIRECT_ITERS)
    run = _newton(cs, fn, ref, lam, opts, direct_budget, trace)
    used = run.used
    if not run.ok and used < opts.max_iter:
        retry = _continuation(cs, fn, ref, opts, opts.max_iter - used, trace)
        used += retry.used
        run = retry
    if run.ok:
        return _package(run.lam, cs, fn, run.state, used, trace)
    partial = _package(run.lam, cs, fn, run.state, used, trace)
    residual = float(np.max(np.abs(partial.residuals)))
    if run.error is MaxIterationsError:
        raise MaxIterationsError(
            f"no convergence in {opts.max_iter} iterations (residual {residual:.3g})", partial)
    raise run.error(f"{run.message}; residual {residual:.3g} after {used} iterations", partial)


def primal_sensitivities(sol: MaxEntSolution, ridge: float = 1e-12) -> np.ndarray:
    """Hessian of the max entropy in the targets, ``-A^{-1}``."""
    A = sol.curvature.A
    n = A.shape[0]
    w = np.linalg.eigvalsh(A)
    if w[0] <= 1e-14 * max(abs(w[-1]), 1.0):
        A = A + ridge * np.eye(n)
        w = np.linalg.eigvalsh(A)
        if w[0] <= 0 or not math.isfinite(w[0]):
            raise np.linalg.LinAlgError("curvature matrix is singular")
    return -np.linalg.inv(A)
