# rhlab/gronwall.py
"""
Discrete Grönwall comparison for U' ≤ Λ₁U + Λ₂F.

The comparison bound is propagated with the exact integrating factor on
each subinterval, with F frozen at its trapezoid mean.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linprog

from .errors import MonitorError

logger = logging.getLogger(__name__)

COMPARISON_RTOL = 1e-9
MAX_BUMPS = 60


@dataclass(frozen=True, eq=False)
class ComparisonProblem:
    times: np.ndarray
    U: np.ndarray
    lambda1: float
    lambda2: float
    forcing: np.ndarray

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float)
        U = np.asarray(self.U, dtype=float)
        F = np.asarray(self.forcing, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise MonitorError("comparison needs at least 2 time points")
        if U.shape != times.shape or F.shape != times.shape:
            raise MonitorError("U, forcing and times must have the same length")
        if np.any(np.diff(times) <= 0):
            raise MonitorError("comparison time grid must be strictly increasing")
        if np.any(U < 0):
            raise MonitorError("U must be nonnegative")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise MonitorError(f"Lambda pair must be nonnegative, got ({self.lambda1}, {self.lambda2})")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "forcing", F)


@dataclass(frozen=True, eq=False)
class ComparisonResult:
    ok: bool
    bound: np.ndarray
    margins: np.ndarray
    guard_code: Optional[str] = None
    reason: str = ""


def comparison_bound(problem: ComparisonProblem) -> np.ndarray:
    t, F = problem.times, problem.forcing
    lam1, lam2 = problem.lambda1, problem.lambda2
    bound = np.empty_like(t)
    bound[0] = problem.U[0]
    for k in range(t.size - 1):
        dt = t[k + 1] - t[k]
        f_mean = 0.5 * (F[k] + F[k + 1])
        if lam1 > 0:
            growth = float(np.exp(lam1 * dt))
            source = lam2 * f_mean * float(np.expm1(lam1 * dt)) / lam1
        else:
            growth = 1.0
            source = lam2 * f_mean * dt
        bound[k + 1] = growth * bound[k] + source
    return bound


def verify_comparison(problem: ComparisonProblem) -> ComparisonResult:
    with np.errstate(over="ignore", invalid="ignore"):
        bound = comparison_bound(problem)
        bound = np.where(np.isnan(bound), np.inf, bound)
        denom = np.where(bound > 0, bound, 1.0)
        margins = np.where(np.isfinite(bound), (bound - problem.U) / denom, 1.0)
    slack = COMPARISON_RTOL * np.maximum(np.abs(bound), 1e-300)
    bad = np.flatnonzero(problem.U > bound + slack)
    if bad.size:
        k = int(bad[0])
        return ComparisonResult(False, bound, margins, "VERIFY_FAIL",
                                f"U({problem.times[k]:.6g}) = {problem.U[k]:.6g} exceeds "
                                f"comparison bound {bound[k]:.6g}")
    return ComparisonResult(True, bound, margins)


@dataclass(frozen=True)
class LambdaFit:
    lambda1: float
    lambda2: float
    feasible: bool
    guard_code: Optional[str] = None
    reason: str = ""


def fit_lambdas(times: Sequence[float], U: Sequence[float], F: Sequence[float]) -> LambdaFit:
    """
    Smallest Λ₁ + Λ₂ (Λ ≥ 0) with U'(t) ≤ Λ₁U(t) + Λ₂F(t) at interior times,
    U' by centered differences. The pair is then enlarged until the
    integrated comparison holds too.
    """
    t = np.asarray(times, dtype=float)
    U = np.asarray(U, dtype=float)
    F = np.asarray(F, dtype=float)
    if t.size < 3:
        raise MonitorError("fit_lambdas needs at least 3 samples")
    dU = np.gradient(U, t, edge_order=2)[1:-1]
    Ui, Fi = U[1:-1], F[1:-1]
    scale = max(float(np.max(np.abs(dU))), float(np.max(np.abs(U))), 1e-300)
    active = dU > 1e-12 * scale
    stuck = active & (Ui <= 0) & (Fi <= 0)
    if np.any(stuck):
        k = int(np.flatnonzero(stuck)[0]) + 1
        return LambdaFit(math.inf, math.inf, False, "INFEASIBLE",
                         f"U grows at t={t[k]:.6g} where U = F = 0")
    if not np.any(active):
        return LambdaFit(0.0, 0.0, True)

    res = linprog(c=[1.0, 1.0], A_ub=-np.column_stack([Ui[active], Fi[active]]), b_ub=-dU[active],
                  bounds=[(0, None), (0, None)], method="highs")
    if res.status != 0:
        return LambdaFit(math.inf, math.inf, False, "INFEASIBLE", f"linprog: {res.message}")
    lam1, lam2 = (max(float(v), 0.0) for v in res.x)

    # lift the LP solution onto exact feasibility on the sampled grid
    gap = dU - lam1 * Ui - lam2 * Fi
    for k in np.flatnonzero(gap > 0):
        if Fi[k] > 0:
            lam2 = max(lam2, (dU[k] - lam1 * Ui[k]) / Fi[k] * (1.0 + 1e-12))
        else:
            lam1 = max(lam1, (dU[k] - lam2 * Fi[k]) / Ui[k] * (1.0 + 1e-12))

    step = 1e-9
    for _ in range(MAX_BUMPS):
        if verify_comparison(ComparisonProblem(t, np.maximum(U, 0.0), lam1, lam2, F)).ok:
            logger.debug("fitted Lambda pair (%.6g, %.6g)", lam1, lam2)
            return LambdaFit(lam1, lam2, True)
        lam1 = lam1 * (1.0 + step) + step
        lam2 = lam2 * (1.0 + step) + step
        step *= 2.0
    return LambdaFit(lam1, lam2, False, "INFEASIBLE", "integrated comparison fails for every enlarged pair")
