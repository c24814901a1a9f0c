# rhlab/monitor.py
"""
Cutoff-weighted curvature integrals per snapshot, the constants they must
satisfy, and the final local L^p bound.

Every integral is ∫_M (...) φ^{2p} dV_t with φ the cutoff built from g(0);
its support is the ball Ω = B_{g(0)}(x0, ρ/√K).
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import lambertw

from .curvature import CurvaturePack, PointwiseNorms
from .errors import MonitorError
from .flow import FlowState
from .grid_fields import integrate
from .localization import CutoffData, ball_integral, ball_volume, cutoff_gradient_norm

logger = logging.getLogger(__name__)

MIN_P = 3.0
LADDER_RTOL = 1e-12
INVARIANT_RTOL = 1e-12
FIT_ATOL = 1e-10
# hessian_top is not monotone in its constant; it is located on this log grid, then bisected
JOINT_GRID = np.logspace(-8, 8, 161)
UNIFORM_SPREAD = 1.5
# the Tp term is stated with its own constant in one form and the shared one in another
RICCI_TP_NOTE = "Tp carries the shared fitted constant"

LINEAR_FITS = ("curvature_growth", "ricci_gradient", "riemann_gradient", "hessian_base")
FITTED_INEQUALITIES = LINEAR_FITS[:3] + ("hessian_top",) + LINEAR_FITS[3:]


def _power(x: np.ndarray, e: float) -> np.ndarray:
    """x^e for x ≥ 0 with 0^0 = 1."""
    if e == 0:
        return np.ones_like(x)
    return np.maximum(x, 0.0) ** e


def ladder_size(p: float) -> int:
    return int(math.ceil(p - 1e-12))


@dataclass(frozen=True)
class MonitorSample:
    t: float
    p: float
    A1: float
    A2: float
    A3: float
    A4: float
    B1: float
    B2: float
    T: Tuple[float, ...]        # T_k for k = 1..ceil(p)
    Tp: float                   # real exponent p
    Tpm1: float                 # real exponent p - 1
    S: float
    S_tilde: float
    ric_weighted: float
    vol_omega: float
    vol_half: float
    phi_mass: float             # ∫ φ^{2p} dV_t
    grad_phi_sup: float         # sup |∇φ|_{g(t)}
    rm_p_omega: float           # ∫_Ω |Rm|^p dV_t
    lhs_ball: float             # ∫_{B(ρ/2√K)} |Rm|^p dV_t

    def values(self) -> List[float]:
        out = []
        for k, v in asdict(self).items():
            out.extend(v if k == "T" else [v])
        return out


def sample_quantities(state: FlowState, pack: Union[CurvaturePack, PointwiseNorms],
                      cutoff: CutoffData, p: float) -> MonitorSample:
    if p < MIN_P:
        raise MonitorError(f"p must be >= {MIN_P}, got {p}")
    norms = pack.norms() if isinstance(pack, CurvaturePack) else pack
    g = state.g
    K = cutoff.K
    phi = cutoff.phi.values
    w = phi ** (2.0 * p)
    grad_phi = cutoff_gradient_norm(cutoff.phi, g)
    rm = norms.rm
    hess2 = norms.hess_u ** 2
    du2 = norms.du ** 2

    def I(values: np.ndarray) -> float:
        return integrate(values, g)

    T = tuple(I(_power(rm, k - 1) * hess2 * w) for k in range(1, ladder_size(p) + 1))
    return MonitorSample(
        t=float(state.t),
        p=float(p),
        A1=I(_power(rm, p) * w),
        A2=I(_power(rm, p - 1) * w),
        A3=I(_power(rm, p - 1) * grad_phi ** 2 * _power(phi, 2 * p - 1)),
        A4=I(_power(rm, p - 1) * grad_phi ** 2 * _power(phi, 2 * p - 2)),
        B1=I(norms.nabla_ric ** 2 * _power(rm, p - 1) * w) / K,
        B2=I(norms.nabla_rm ** 2 * _power(rm, p - 3) * w),
        T=T,
        Tp=I(_power(rm, p - 1) * hess2 * w),
        Tpm1=I(_power(rm, p - 2) * hess2 * w),
        S=I(_power(rm, p - 1) * du2 * w),
        S_tilde=I(du2 * w),
        ric_weighted=I(norms.ric ** 2 * _power(rm, p - 1) * w),
        vol_omega=ball_volume(g, cutoff.d0, cutoff.radius),
        vol_half=ball_volume(g, cutoff.d0, cutoff.half_radius),
        phi_mass=I(w),
        grad_phi_sup=float(np.max(grad_phi)),
        rm_p_omega=ball_integral(_power(rm, p), g, cutoff.d0, cutoff.radius),
        lhs_ball=ball_integral(_power(rm, p), g, cutoff.d0, cutoff.half_radius),
    )


def column(samples: Sequence[MonitorSample], name: str) -> np.ndarray:
    return np.array([getattr(s, name) for s in samples], dtype=float)


# ---------------------------------------------------------------------------
# exact interpolation ladder

@dataclass(frozen=True)
class LadderVerdict:
    ok: bool
    k: int
    lhs: float
    rhs: float


def check_hessian_ladder(sample: MonitorSample, C: float, k: int) -> LadderVerdict:
    """T_k ≤ C^{-(p-k)} T_p + (p-k) C^{k-1} T_1."""
    p = sample.p
    if not 1 <= k <= p:
        raise MonitorError(f"ladder index k={k} outside [1, {p}]")
    if not C > 0:
        raise MonitorError(f"ladder constant must be positive, got {C}")
    lhs = sample.T[k - 1]
    rhs = sample.Tp / C ** (p - k) + (p - k) * C ** (k - 1) * sample.T[0]
    return LadderVerdict(ok=lhs <= rhs * (1.0 + LADDER_RTOL) + 1e-300, k=k, lhs=lhs, rhs=rhs)


def ladder_indices(p: float) -> range:
    return range(1, int(math.floor(p + 1e-12)) + 1)


# ---------------------------------------------------------------------------
# per-sample invariants

def sample_invariants(sample: MonitorSample, K: float, L: float) -> Dict[str, bool]:
    p = sample.p
    tol = 1.0 + INVARIANT_RTOL
    values = sample.values()
    return {
        "nonnegative": all(v >= 0.0 for v in values),
        "holder": sample.A2 <= tol * sample.A1 ** ((p - 1) / p) * sample.vol_omega ** (1 / p) + 1e-300,
        "young": sample.A2 <= tol * ((p - 1) / p * sample.A1 + sample.phi_mass / p) + 1e-300,
        "gradient_weight": sample.S <= tol * L * L * sample.A2 + 1e-300,
        "ricci_weight": sample.ric_weighted <= tol * K * K * sample.A2 + 1e-300,
        "cutoff_gradient": sample.A4 <= tol * ((p - 1) / p * sample.A1
                                               + sample.grad_phi_sup ** (2 * p) * sample.vol_omega / p) + 1e-300,
        "gradient_volume": sample.S_tilde <= tol * L * L * sample.vol_omega + 1e-300,
    }


# ---------------------------------------------------------------------------
# fitted constants

@dataclass(frozen=True)
class InequalityReport:
    id: str
    times: np.ndarray
    lhs: np.ndarray
    basis: Dict[str, np.ndarray]
    C_fit: float
    ok: bool
    guard_code: Optional[str] = None
    reason: str = ""
    alternative: Optional[float] = None
    note: str = ""

    def summary(self) -> Dict[str, object]:
        out: Dict[str, object] = {"id": self.id, "C_fit": self.C_fit, "ok": self.ok}
        if self.guard_code:
            out["guard_code"] = self.guard_code
            out["reason"] = self.reason
        if self.alternative is not None:
            out["alternative"] = self.alternative
        if self.note:
            out["note"] = self.note
        return out


def time_derivative(values: np.ndarray, times: np.ndarray) -> np.ndarray:
    return np.gradient(values, times, edge_order=2)


def fit_ratio(lhs: np.ndarray, basis: np.ndarray, scale: float = 1.0) -> Tuple[float, Optional[int]]:
    """
    Smallest C ≥ 0 with lhs ≤ C·basis at every entry.
    Returns (inf, index) when some lhs > tolerance meets a zero basis.
    """
    atol = FIT_ATOL * max(scale, 1e-300)
    C = 0.0
    for i, (l, b) in enumerate(zip(lhs, basis)):
        if l <= atol:
            continue
        if b <= 0.0:
            return math.inf, i
        C = max(C, l / b)
    return C, None


def _scale(*series: np.ndarray) -> float:
    return max((float(np.max(np.abs(s))) for s in series if np.size(s)), default=0.0)


def _linear_report(ineq_id: str, times: np.ndarray, lhs: np.ndarray,
                   basis: Dict[str, np.ndarray], scale: float) -> InequalityReport:
    inner = slice(1, -1)
    total = sum(basis.values())
    C, bad = fit_ratio(lhs[inner], total[inner], scale)
    if bad is not None:
        t_bad = float(times[inner][bad])
        logger.warning("%s infeasible: zero basis with positive lhs at t=%.6g", ineq_id, t_bad)
        return InequalityReport(ineq_id, times[inner], lhs[inner], {k: v[inner] for k, v in basis.items()},
                                C_fit=math.inf, ok=False, guard_code="INFEASIBLE",
                                reason=f"basis vanishes while lhs > 0 at t={t_bad:.6g}")
    logger.debug("%s fitted C=%.6g", ineq_id, C)
    return InequalityReport(ineq_id, times[inner], lhs[inner], {k: v[inner] for k, v in basis.items()},
                            C_fit=C, ok=True)


def _joint_fit(residual, scale: float) -> float:
    """Smallest C on [0, 1e8] with residual(C) ≤ tol everywhere, inf if none."""
    atol = FIT_ATOL * max(scale, 1e-300)

    def feasible(C: float) -> bool:
        return float(np.max(residual(C))) <= atol

    if feasible(0.0):
        return 0.0
    lo = 0.0
    for C in JOINT_GRID:
        if feasible(C):
            hi = float(C)
            break
        lo = float(C)
    else:
        return math.inf
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi


def fit_inequality_constant(ineq_id: str, samples: Sequence[MonitorSample], K: float, L: float) -> InequalityReport:
    if len(samples) < 5:
        raise MonitorError(f"{ineq_id}: need >= 3 interior sample times, got {max(len(samples) - 2, 0)}")
    t = column(samples, "t")
    p = samples[0].p
    A1, A2, A4 = column(samples, "A1"), column(samples, "A2"), column(samples, "A4")
    B1, B2 = column(samples, "B1"), column(samples, "B2")
    Tp, Tpm1 = column(samples, "Tp"), column(samples, "Tpm1")
    T1 = np.array([s.T[0] for s in samples])
    S, St, RicW = column(samples, "S"), column(samples, "S_tilde"), column(samples, "ric_weighted")
    vol = column(samples, "vol_omega")
    L2 = L * L

    if ineq_id == "curvature_growth":
        dA1 = time_derivative(A1, t)
        lhs = dA1 - B1
        basis = {"K*B2": K * B2, "K*A4": K * A4, "(K+L^2)*A1": (K + L2) * A1, "Tp": Tp}
        return _linear_report(ineq_id, t, lhs, basis, _scale(dA1, B1, *basis.values()))
    elif ineq_id == "ricci_gradient":
        dR = time_derivative(RicW, t) / (2.0 * K)
        lhs = B1 + dR
        basis = {"K*B2": K * B2, "(K+L^2)*A1": (K + L2) * A1, "K*L^2*A2": K * L2 * A2,
                 "K*A4": K * A4, "Tp": Tp}
        report = _linear_report(ineq_id, t, lhs, basis, _scale(B1, dR, *basis.values()))
        return replace(report, note=RICCI_TP_NOTE)
    elif ineq_id == "riemann_gradient":
        dA2 = time_derivative(A2, t) / (p - 1.0)
        lhs = B2 + dA2
        basis = {"A1": A1, "A4": A4, "L^2*A2": L2 * A2, "Tpm1": Tpm1}
        return _linear_report(ineq_id, t, lhs, basis, _scale(B2, dA2, *basis.values()))
    elif ineq_id == "hessian_base":
        dSt = time_derivative(St, t)
        lhs = T1 + dSt
        basis = {"L^2*VolOmega": L2 * vol}
        return _linear_report(ineq_id, t, lhs, basis, _scale(T1, dSt, L2 * vol))
    elif ineq_id == "hessian_top":
        return _fit_hessian_top(t, p, K, L2, A1, A2, A4, Tp, T1, S, RicW)
    else:
        raise MonitorError(f"unknown inequality id {ineq_id!r}")


def _fit_hessian_top(t, p, K, L2, A1, A2, A4, Tp, T1, S, RicW) -> InequalityReport:
    inner = slice(1, -1)
    dS = time_derivative(S, t)[inner]
    slope = (time_derivative(A2, t) / (p - 1.0) + time_derivative(RicW, t) / K)[inner]
    X = ((K + L2) * A1 + K * L2 * A2 + (K + L2) * A4)[inner]
    fixed = Tp[inner] + dS
    t1 = T1[inner]
    scale = _scale(fixed, slope, X, t1)

    def statement(C: float) -> np.ndarray:
        return fixed + C * slope - C * X - C ** (p - 1) * t1

    def proof_form(C: float) -> np.ndarray:
        return fixed + C * slope - C * X - 2.0 * (8.0 * C) ** (p / 2.0) * t1

    C = _joint_fit(statement, scale)
    alt = _joint_fit(proof_form, scale)
    basis = {"X": X, "T1": t1, "slope": slope}
    lhs = fixed
    if not math.isfinite(C):
        logger.warning("hessian_top infeasible on [0, %.0e]", JOINT_GRID[-1])
        return InequalityReport("hessian_top", t[inner], lhs, basis, math.inf, False, "INFEASIBLE",
                                f"no constant up to {JOINT_GRID[-1]:.0e} satisfies the bound", alt)
    return InequalityReport("hessian_top", t[inner], lhs, basis, C, True, alternative=alt)


# ---------------------------------------------------------------------------
# the final chain

def assemble_U(sample: MonitorSample, K: float, p: float, C_in: float) -> float:
    C = C_in
    return (sample.A1 + C * K / (p - 1.0) * sample.A2 + C * sample.ric_weighted
            + C * K * sample.S + K * C ** p * sample.S_tilde)


def _exp_checked(log_value: float, label: str) -> float:
    if log_value > 709.0:
        logger.warning("%s overflows double precision (log = %.4g)", label, log_value)
        return math.inf
    return math.exp(log_value)


@dataclass(frozen=True)
class GammaConstants:
    C_in: float
    lambda1: float
    lambda2: float
    gamma1: float
    gamma2: float
    overflow: bool = False


def gamma_constants(K: float, L: float, T: float, p: float, rho: float, C_in: float) -> GammaConstants:
    if p < MIN_P:
        raise MonitorError(f"p must be >= {MIN_P}, got {p}")
    if not (K > 0 and rho > 0 and C_in > 0 and T >= 0 and L >= 0):
        raise MonitorError(f"gamma constants need K, rho, C > 0 and T, L >= 0 (K={K}, rho={rho}, C={C_in})")
    C, L2 = C_in, L * L
    lam1 = C * (p - 1.0) * K * L2 + C * K * (K + L2)
    log_head = math.log(C * K * (K + L2)) + p * math.log(K) + 2.0 * p * K * T - 2.0 * p * math.log(rho)
    head = _exp_checked(log_head, "Lambda2")
    lam2 = head + C * K * _exp_checked(p * math.log(C), "C^p") * L2
    growth = _exp_checked(lam1 * T, "exp(Lambda1*T)")
    gamma1 = growth * (C * K / (p - 1.0) + C * K * K + C * K * L2)
    gamma2 = growth * (C * K / (p - 1.0) + C + C * K * L2 + lam2)
    overflow = not all(math.isfinite(v) for v in (lam2, gamma1, gamma2))
    return GammaConstants(C, lam1, lam2, gamma1, gamma2, overflow)


@dataclass(frozen=True)
class BoundCheck:
    ok: bool
    times: np.ndarray
    lhs: np.ndarray
    rhs: float
    margins: np.ndarray
    guard_code: Optional[str] = None
    reason: str = ""


def check_local_lp_bound(samples: Sequence[MonitorSample], gamma: GammaConstants) -> BoundCheck:
    """∫_{B(ρ/2√K)} |Rm(t)|^p dV_t ≤ Γ₁ ∫_Ω |Rm(0)|^p dV_0 + Γ₂ Vol_{g(0)}(Ω) at every snapshot."""
    first = samples[0]
    times = column(samples, "t")
    lhs = column(samples, "lhs_ball")
    with np.errstate(invalid="ignore"):
        rhs = gamma.gamma1 * first.rm_p_omega + gamma.gamma2 * first.vol_omega
    margins = (rhs - lhs) / rhs if math.isfinite(rhs) else np.ones_like(lhs)
    bad = np.flatnonzero(margins < 0)
    if bad.size:
        k = int(bad[0])
        return BoundCheck(False, times, lhs, rhs, margins, "VERIFY_FAIL",
                          f"local_lp_bound violated at t={times[k]:.6g}: {lhs[k]:.6g} > {rhs:.6g}")
    return BoundCheck(True, times, lhs, rhs, margins)


@dataclass(frozen=True)
class NormalizedLp:
    constants: Dict[float, float]
    uniform: bool
    spread: float
    bounds: Dict[float, float] = field(default_factory=dict)


def normalized_constant(lhs_avg: np.ndarray, initial_avg: float, K: float, rho: float, p: float) -> float:
    """Smallest C with lhs_avg(t) ≤ C e^{C(p-1)} (initial_avg + K^p ρ^{-2p}) for all t."""
    floor = initial_avg + K ** p * rho ** (-2.0 * p)
    q = float(np.max(lhs_avg)) / floor if floor > 0 else math.inf
    if q <= 0:
        return 0.0
    if not math.isfinite(q):
        return math.inf
    return float(lambertw((p - 1.0) * q).real) / (p - 1.0)


def normalized_bound(C: float, initial_avg: float, K: float, rho: float, p: float) -> float:
    """C e^{C(p-1)} (initial_avg + K^p ρ^{-2p}), the normalized half-ball bound."""
    if C <= 0:
        return 0.0
    if not math.isfinite(C):
        return math.inf
    return C * math.exp(C * (p - 1.0)) * (initial_avg + K ** p * rho ** (-2.0 * p))


def normalized_lp_check(series: Mapping[float, Tuple[np.ndarray, np.ndarray]], K: float, rho: float) -> NormalizedLp:
    """series maps p to (ball integral of |Rm|^p over the half ball, half-ball volume) per snapshot."""
    constants: Dict[float, float] = {}
    bounds: Dict[float, float] = {}
    for p, (lhs_ball, vol_half) in sorted(series.items()):
        if not 3.0 <= p <= 8.0:
            raise MonitorError(f"normalized check takes p in [3, 8], got {p}")
        avg = np.asarray(lhs_ball) / np.asarray(vol_half)
        constants[float(p)] = normalized_constant(avg, float(avg[0]), K, rho, p)
        bounds[float(p)] = normalized_bound(constants[float(p)], float(avg[0]), K, rho, p)
    finite = [c for c in constants.values() if math.isfinite(c)]
    positive = [c for c in finite if c > 0]
    spread = max(positive) / min(positive) if positive else 1.0
    uniform = len(finite) == len(constants) and spread <= UNIFORM_SPREAD
    return NormalizedLp(constants, uniform, spread, bounds)
