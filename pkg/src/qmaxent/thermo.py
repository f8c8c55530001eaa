"""Finite-difference checks of the dual's thermodynamic identities.

At a solved constraint set this verifies that

* the dual gradient matches central differences of the dual value,
* the curvature ``A`` matches the difference Jacobian of ``-<O>(lambda)``,
* ``A`` is positive semidefinite and ``-A^{-1}`` negative semidefinite,
* each multiplier equals the derivative of the maximum entropy in its target.

Differences use step ``eps`` (1e-5), reduced near a cutoff so that no
central difference spans the kink of ``p(h)`` at ``f'(0)``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, Optional

import numpy as np

from .functionals import EntropicFunctional, FieldRangeError
from .solver import (ConstraintSet, MaxEntSolution, SolverOptions, curvature,
                     dual_objective, primal_sensitivities, solve)

__all__ = ["CheckResult", "ThermoReport", "thermo_checks"]

GRADIENT_TOL = 1e-6
CURVATURE_TOL = 1e-5
SIGN_TOL = 1e-10
SENSITIVITY_TOL = 1e-5
_KINK_FRACTION = 1e-3


@dataclass(frozen=True)
class CheckResult:
    name: str
    deviation: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.deviation <= self.tolerance)


@dataclass(frozen=True)
class ThermoReport:
    solution: MaxEntSolution
    sensitivities: np.ndarray
    checks: List[CheckResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _probe_points(lam: np.ndarray, cs, fn, seed: int, count: int) -> List[np.ndarray]:
    """The solution plus seeded feasible perturbations of it."""
    rng = np.random.default_rng(seed)
    points = [lam]
    scale = 0.05 * (1.0 + np.abs(lam))
    for _ in range(50 * count):
        if len(points) > count:
            break
        trial = lam + scale * rng.standard_normal(lam.shape)
        try:
            dual_objective(trial, cs, fn)
        except FieldRangeError:
            continue
        points.append(trial)
    return points


def _safe_step(lam, cs, fn, eps) -> float:
    """``eps``, shrunk so a central difference never straddles a cutoff kink.

    Eigenvalues of the field move by at most ``step * max ||O_a||`` per
    coordinate step; ``p(h)`` has a kink where an eigenvalue meets ``f'(0)``
    and steep higher derivatives next to it, so the step stays a small
    fraction of the distance to the kink.
    """
    if np.isinf(fn.fprime0):
        return eps
    dist = float(np.min(np.abs(np.linalg.eigvalsh(cs.field(lam)) - fn.fprime0)))
    reach = max(np.linalg.norm(O, 2) for O in cs.observables)
    return min(eps, _KINK_FRACTION * dist / reach)


def _gradient_deviation(points, cs, fn, eps) -> float:
    worst = 0.0
    for lam in points:
        _, grad = dual_objective(lam, cs, fn)
        step = _safe_step(lam, cs, fn, eps)
        for a in range(len(lam)):
            e = np.zeros_like(lam)
            e[a] = step
            fd = (dual_objective(lam + e, cs, fn)[0] - dual_objective(lam - e, cs, fn)[0]) / (2 * step)
            worst = max(worst, abs(fd - grad[a]))
    return worst


def _curvature_deviation(points, cs, fn, eps) -> float:
    """Largest entry of |A - J| relative to max(1, max|A|); J is the FD Jacobian."""
    worst = 0.0
    for lam in points:
        A = curvature(lam, cs, fn).A
        step = _safe_step(lam, cs, fn, eps)
        J = np.empty_like(A)
        for a in range(len(lam)):
            e = np.zeros_like(lam)
            e[a] = step
            J[:, a] = (dual_objective(lam + e, cs, fn)[1] - dual_objective(lam - e, cs, fn)[1]) / (2 * step)
        worst = max(worst, float(np.max(np.abs(A - J))) / max(1.0, float(np.max(np.abs(A)))))
    return worst


def _sensitivity_deviation(sol, cs, fn, opts, eps) -> float:
    """max_a |lambda_a - dS/dt_a| over the non-normalization targets."""
    tight = replace(opts, tol=min(opts.tol, 1e-12))
    worst = 0.0
    for a in range(1, cs.size):
        ends = []
        for sign in (1.0, -1.0):
            targets = cs.targets.copy()
            targets[a] += sign * eps
            shifted = ConstraintSet(cs.observables, targets)
            s = solve(shifted, fn, tight, lambda0=sol.lambda_)
            ends.append((s.entropy, s.rho.expectation(cs.observables[a])))
        # divide by the achieved change, not the requested one
        dS = ends[0][0] - ends[1][0]
        dt = ends[0][1] - ends[1][1]
        worst = max(worst, abs(dS / dt - sol.lambda_[a]))
    return worst


def thermo_checks(cs: ConstraintSet, fn: EntropicFunctional,
                  opts: Optional[SolverOptions] = None, seed: int = 0,
                  eps: float = 1e-5, probes: int = 3) -> ThermoReport:
    """Solve ``cs`` and run every identity check around the solution."""
    opts = opts or SolverOptions()
    sol = solve(cs, fn, opts)
    sens = primal_sensitivities(sol)
    points = _probe_points(sol.lambda_, cs, fn, seed, probes)
    A_min = float(np.linalg.eigvalsh(sol.curvature.A)[0])
    H_max = float(np.linalg.eigvalsh(0.5 * (sens + sens.T))[-1])
    checks = [
        CheckResult("gradient", _gradient_deviation(points, cs, fn, eps), GRADIENT_TOL),
        CheckResult("curvature", _curvature_deviation(points, cs, fn, eps), CURVATURE_TOL),
        CheckResult("curvature_psd", max(0.0, -A_min), SIGN_TOL),
        CheckResult("sensitivity_nsd", max(0.0, H_max), SIGN_TOL),
    ]
    if cs.size > 1:
        checks.append(CheckResult("multiplier_sensitivity",
                                  _sensitivity_deviation(sol, cs, fn, opts, eps), SENSITIVITY_TOL))
    return ThermoReport(sol, sens, checks)
