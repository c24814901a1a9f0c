# rhlab/audit.py
"""
The per-run audit chains. Both `run` (from live snapshots) and `verify`
(from persisted artifacts) go through these functions, so a stored report
can be recomputed number for number.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .curvature import PointwiseNorms, contracted_bianchi_residual, curvature_pack, symmetry_residuals
from .flow import (
    MetricEquivalence,
    Trajectory,
    gradient_identity_residual,
    measure_sup_bounds,
    metric_equivalence,
    sup_curvature_series,
    sup_gradient_increase,
    volume_identity_residual,
)
from .gronwall import ComparisonProblem, ComparisonResult, LambdaFit, fit_lambdas, verify_comparison
from .extension import ExtensionReport, run_extension_audit
from .localization import CutoffData, ball_integral, build_cutoff, check_gradient_bound, volume_ratio_constant
from .scenario import Scenario
from .monitor import (
    FITTED_INEQUALITIES,
    BoundCheck,
    GammaConstants,
    InequalityReport,
    MonitorSample,
    NormalizedLp,
    assemble_U,
    check_hessian_ladder,
    check_local_lp_bound,
    column,
    fit_inequality_constant,
    gamma_constants,
    ladder_indices,
    normalized_lp_check,
    sample_invariants,
    sample_quantities,
)

logger = logging.getLogger(__name__)

LADDER_CONSTANTS = (0.1, 1.0, 10.0)
MONOTONE_ATOL = 1e-8
MAX_SERIES_P = 8.0

LpSeries = Mapping[float, Tuple[np.ndarray, np.ndarray]]


def audit_k(K_measured: float, k_floor: float) -> float:
    """K used for cutoffs and constants; flat runs need a positive floor."""
    return max(K_measured, k_floor)


# ---------------------------------------------------------------------------
# flow-level checks

@dataclass(frozen=True)
class FlowAudit:
    K_measured: float
    L: float
    gradient_increase: float
    equivalence: MetricEquivalence
    volume_residual: Optional[float]
    gradient_residual: Optional[float]
    curvature_sup: Tuple[float, ...]
    gradient_ratio: Optional[float]
    symmetry: Dict[str, float]
    bianchi: float
    cutoff_gradient_ratio: float

    @property
    def monotone_ok(self) -> bool:
        return self.gradient_increase <= MONOTONE_ATOL

    def verdicts(self) -> Dict[str, bool]:
        return {"gradient_monotone": self.monotone_ok, "metric_equivalence": self.equivalence.ok}

    def summary(self) -> Dict[str, object]:
        return {
            "K_measured": self.K_measured,
            "L": self.L,
            "gradient_increase": self.gradient_increase,
            "metric_equivalence": {"ok": self.equivalence.ok, "min_ratio": self.equivalence.min_ratio,
                                   "max_ratio": self.equivalence.max_ratio, "reason": self.equivalence.reason,
                                   "ricci_max_ratio": self.equivalence.ricci_max_ratio,
                                   "ricci_upper_ok": self.equivalence.ricci_upper_ok},
            "volume_residual": self.volume_residual,
            "gradient_residual": self.gradient_residual,
            "curvature_sup": list(self.curvature_sup),
            "curvature_sup_decreasing": bool(np.all(np.diff(self.curvature_sup) <= MONOTONE_ATOL)),
            "gradient_ratio": self.gradient_ratio,
            "symmetry": self.symmetry,
            "bianchi": self.bianchi,
            "cutoff_gradient_ratio": self.cutoff_gradient_ratio,
        }


def audit_flow(trajectory: Trajectory, norms: Sequence[PointwiseNorms], data: CutoffData) -> FlowAudit:
    K, L = measure_sup_bounds(trajectory, norms)
    first = trajectory.snapshots[0]
    pack0 = curvature_pack(first.g, first.u)
    enough = len(trajectory) >= 3
    return FlowAudit(
        K_measured=K,
        L=L,
        gradient_increase=sup_gradient_increase(norms),
        equivalence=metric_equivalence(trajectory, K, L),
        volume_residual=volume_identity_residual(trajectory, norms) if enough else None,
        gradient_residual=gradient_identity_residual(trajectory, norms) if enough else None,
        curvature_sup=tuple(float(v) for v in sup_curvature_series(norms)),
        gradient_ratio=(L * L / K) if K > 0 else None,
        symmetry=symmetry_residuals(pack0.rm) if np.any(pack0.rm.components) else {},
        bianchi=contracted_bianchi_residual(pack0, first.g),
        cutoff_gradient_ratio=check_gradient_bound(data, first.g).ratio,
    )


# ---------------------------------------------------------------------------
# monitor chain

def lp_series(trajectory: Trajectory, norms: Sequence[PointwiseNorms], data: CutoffData,
              p_list: Sequence[float]) -> Dict[float, Tuple[np.ndarray, np.ndarray]]:
    """Half-ball integrals of |Rm|^p and half-ball volumes, per p and snapshot."""
    out = {}
    vols = None
    for p in p_list:
        vals = np.array([ball_integral(np.maximum(n.rm, 0.0) ** p, s.g, data.d0, data.half_radius)
                         for s, n in zip(trajectory.snapshots, norms)])
        if vols is None:
            vols = np.array([ball_integral(np.ones(s.g.grid.shape), s.g, data.d0, data.half_radius)
                             for s in trajectory.snapshots])
        out[float(p)] = (vals, vols)
    return out


@dataclass(frozen=True, eq=False)
class MonitorAudit:
    K: float
    L: float
    T: float
    p: float
    rho: float
    C_in: float
    fits: Dict[str, InequalityReport]
    ladder_failures: Tuple[str, ...]
    invariants: Dict[str, bool]
    gamma: GammaConstants
    U: np.ndarray
    comparison: ComparisonResult
    lambdas: LambdaFit
    lambda_comparison: Optional[ComparisonResult]
    local_lp: BoundCheck
    normalized: NormalizedLp
    volume_c: float

    def verdicts(self) -> Dict[str, bool]:
        out = {k: r.ok for k, r in self.fits.items()}
        out["hessian_ladder"] = not self.ladder_failures
        out["sample_invariants"] = all(self.invariants.values())
        out["gronwall"] = self.comparison.ok
        out["local_lp_bound"] = self.local_lp.ok
        out["normalized_lp"] = all(math.isfinite(c) for c in self.normalized.constants.values())
        return out

    def summary(self) -> Dict[str, object]:
        return {
            "K": self.K,
            "L": self.L,
            "T": self.T,
            "p": self.p,
            "rho": self.rho,
            "C_in": self.C_in,
            "fits": {k: r.summary() for k, r in self.fits.items()},
            "hessian_ladder": {"ok": not self.ladder_failures, "failures": list(self.ladder_failures[:5])},
            "invariants": self.invariants,
            "gamma": {"lambda1": self.gamma.lambda1, "lambda2": self.gamma.lambda2,
                      "gamma1": self.gamma.gamma1, "gamma2": self.gamma.gamma2,
                      "overflow": self.gamma.overflow},
            "gronwall": {"ok": self.comparison.ok, "min_margin": _min(self.comparison.margins),
                         "reason": self.comparison.reason},
            "fitted_lambdas": {"lambda1": self.lambdas.lambda1, "lambda2": self.lambdas.lambda2,
                               "feasible": self.lambdas.feasible,
                               "comparison_ok": self.lambda_comparison.ok if self.lambda_comparison else None},
            "local_lp_bound": {"ok": self.local_lp.ok, "rhs": self.local_lp.rhs,
                               "min_margin": _min(self.local_lp.margins), "reason": self.local_lp.reason},
            "normalized_lp": {"constants": {f"{p:g}": c for p, c in self.normalized.constants.items()},
                              "bounds": {f"{p:g}": b for p, b in self.normalized.bounds.items()},
                              "uniform": self.normalized.uniform, "spread": self.normalized.spread},
            "volume_ratio_c": self.volume_c,
        }


def _min(values: np.ndarray) -> float:
    return float(np.min(values)) if np.size(values) else 1.0


def choose_c_in(fits: Mapping[str, InequalityReport], policy: Union[str, float], c_floor: float) -> float:
    if policy != "fitted":
        return float(policy)
    finite = [r.C_fit for r in fits.values() if math.isfinite(r.C_fit)]
    return max([c_floor] + finite)


def audit_samples(samples: Sequence[MonitorSample], K: float, L: float, T: float, rho: float,
                  c_in: Union[str, float], c_floor: float, series: LpSeries) -> MonitorAudit:
    p = samples[0].p
    fits = {i: fit_inequality_constant(i, samples, K, L) for i in FITTED_INEQUALITIES}
    C_in = choose_c_in(fits, c_in, c_floor)

    failures: List[str] = []
    for s in samples:
        for C in LADDER_CONSTANTS:
            for k in ladder_indices(p):
                v = check_hessian_ladder(s, C, k)
                if not v.ok:
                    failures.append(f"t={s.t:.6g} C={C:g} k={k}: {v.lhs:.6g} > {v.rhs:.6g}")

    invariants: Dict[str, bool] = {}
    for s in samples:
        for name, ok in sample_invariants(s, K, L).items():
            invariants[name] = invariants.get(name, True) and ok

    gamma = gamma_constants(K, L, T, p, rho, C_in)
    times = column(samples, "t")
    U = np.array([assemble_U(s, K, p, C_in) for s in samples])
    F = column(samples, "vol_omega")
    comparison = verify_comparison(ComparisonProblem(times, U, gamma.lambda1, gamma.lambda2, F))
    lambdas = fit_lambdas(times, U, F)
    lambda_cmp = (verify_comparison(ComparisonProblem(times, U, lambdas.lambda1, lambdas.lambda2, F))
                  if lambdas.feasible else None)
    audit = MonitorAudit(
        K=K, L=L, T=T, p=p, rho=rho, C_in=C_in, fits=fits,
        ladder_failures=tuple(failures), invariants=invariants, gamma=gamma, U=U,
        comparison=comparison, lambdas=lambdas, lambda_comparison=lambda_cmp,
        local_lp=check_local_lp_bound(samples, gamma),
        normalized=normalized_lp_check(series, K, rho),
        volume_c=volume_ratio_constant(F, T),
    )
    logger.info("monitor audit: C_in=%.4g, verdicts %s", C_in,
                ", ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in audit.verdicts().items()))
    return audit


# ---------------------------------------------------------------------------
# whole run

@dataclass(frozen=True)
class AuditSettings:
    p: float
    p_list: Tuple[float, ...]
    rho: float
    x0: Tuple[int, ...]
    k_floor: float
    c_in: Union[str, float]
    c_floor: float
    cm: Union[str, float]
    exponents: Tuple[float, ...]

    @classmethod
    def from_scenario(cls, s: Scenario) -> "AuditSettings":
        return cls(
            p=s.monitor.p,
            p_list=tuple(sorted(q for q in set(s.monitor.p_list) | {s.monitor.p} if q <= MAX_SERIES_P)),
            rho=s.localization.rho,
            x0=s.x0,
            k_floor=s.localization.k_floor,
            c_in=s.monitor.c_in,
            c_floor=s.monitor.c_floor,
            cm=s.extension.cm,
            exponents=s.extension.exponents,
        )


@dataclass(frozen=True, eq=False)
class RunAudit:
    K_audit: float
    cutoff: CutoffData
    flow: FlowAudit
    samples: Tuple[MonitorSample, ...]
    series: Dict[float, Tuple[np.ndarray, np.ndarray]]
    monitor: MonitorAudit
    extension: ExtensionReport

    def verdicts(self) -> Dict[str, bool]:
        out = dict(self.flow.verdicts())
        out.update(self.monitor.verdicts())
        out.update(extension_verdicts(self.extension))
        return out

    def reasons(self) -> Dict[str, str]:
        out = {k: r.reason for k, r in self.monitor.fits.items() if r.reason}
        if self.monitor.ladder_failures:
            out["hessian_ladder"] = self.monitor.ladder_failures[0]
        failed = [k for k, ok in self.monitor.invariants.items() if not ok]
        if failed:
            out["sample_invariants"] = "violated: " + ", ".join(failed)
        if self.monitor.comparison.reason:
            out["gronwall"] = self.monitor.comparison.reason
        if self.monitor.local_lp.reason:
            out["local_lp_bound"] = self.monitor.local_lp.reason
        if self.flow.equivalence.reason:
            out["metric_equivalence"] = self.flow.equivalence.reason
        if not self.flow.monotone_ok:
            out["gradient_monotone"] = f"sup|du|^2 increased by {self.flow.gradient_increase:.3e}"
        if self.extension.riccati.reason:
            out["riccati_bound"] = self.extension.riccati.reason
        growth = self.extension.energy_growth
        if not growth.ok:
            out["energy_inequality"] = f"C(a) ratio {growth.ratio:.4g} exceeds {growth.bound:.4g}"
        m = self.extension.moser
        if not m.growth_ok:
            out["extension_growth"] = (f"sup Phi exceeds 10 sup Phi(0) e^(ct), c = {m.growth_rate:.4g} "
                                       f"(observed rate {m.observed_rate:.4g})")
        return out

    def sections(self) -> Dict[str, object]:
        return {
            "K_audit": self.K_audit,
            "flow": self.flow.summary(),
            "monitor": self.monitor.summary(),
            "extension": self.extension.summary(),
        }


def extension_verdicts(ext: ExtensionReport) -> Dict[str, bool]:
    return {
        "rm_heat_bound": math.isfinite(ext.C_heat.C),
        "riccati_bound": ext.riccati.ok,
        "energy_inequality": all(e.ok for e in ext.energy) and ext.energy_growth.ok,
        "extension_bounded": ext.moser.bounded,
        "extension_growth": ext.moser.growth_ok,
    }


def localize(trajectory: Trajectory, norms: Sequence[PointwiseNorms],
             settings: AuditSettings) -> Tuple[float, CutoffData, FlowAudit]:
    K, _ = measure_sup_bounds(trajectory, norms)
    K_audit = audit_k(K, settings.k_floor)
    data = build_cutoff(trajectory.snapshots[0].g, settings.x0, settings.rho, K_audit)
    return K_audit, data, audit_flow(trajectory, norms, data)


def monitor_samples(trajectory: Trajectory, norms: Sequence[PointwiseNorms], data: CutoffData,
                    p: float) -> List[MonitorSample]:
    return [sample_quantities(s, n, data, p) for s, n in zip(trajectory.snapshots, norms)]


def finish_audit(trajectory: Trajectory, norms: Sequence[PointwiseNorms], settings: AuditSettings,
                 K_audit: float, data: CutoffData, flow: FlowAudit, samples: Sequence[MonitorSample],
                 series: Dict[float, Tuple[np.ndarray, np.ndarray]]) -> RunAudit:
    T = float(trajectory.times[-1])
    monitor = audit_samples(samples, K_audit, flow.L, T, settings.rho, settings.c_in, settings.c_floor, series)
    extension = run_extension_audit(
        trajectory, norms, data, settings.p, flow.L, monitor.C_in, settings.exponents,
        C_m=None if settings.cm == "fitted" else float(settings.cm),
        Lam=monitor.normalized.bounds.get(settings.p),
    )
    return RunAudit(K_audit, data, flow, tuple(samples), series, monitor, extension)


def audit_run(trajectory: Trajectory, norms: Sequence[PointwiseNorms], settings: AuditSettings) -> RunAudit:
    K_audit, data, flow = localize(trajectory, norms, settings)
    samples = monitor_samples(trajectory, norms, data, settings.p)
    series = lp_series(trajectory, norms, data, settings.p_list)
    return finish_audit(trajectory, norms, settings, K_audit, data, flow, samples, series)
