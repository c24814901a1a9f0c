# rhlab/extension.py
"""
Space-time audits behind the extension criterion: the heat-operator bound
on |Rm|, the Riccati bound on Φ = |Rm| + C_m|∇u|² + 1, the energy
inequality feeding the Moser iteration, and the sup-bound it produces.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .curvature import PointwiseNorms, christoffel, laplacian
from .errors import MonitorError
from .flow import Trajectory
from .grid_fields import ScalarField, integrate
from .localization import CutoffData, ball_integral, ball_volume, cutoff, cutoff_gradient_norm
from .monitor import fit_ratio, time_derivative

logger = logging.getLogger(__name__)

MIN_CM = 2.0
RM_EPS = 1e-8
RICCATI_SLACK = 1e-3
GROWTH_HEADROOM = 10.0
ENERGY_LINEAR_SLACK = 1.5
ENERGY_ATOL = 1e-9


@dataclass(frozen=True, eq=False)
class PhiField:
    C_m: float
    values: List[np.ndarray]
    A: Optional[float] = None


def _phi(norms: PointwiseNorms, C_m: float) -> np.ndarray:
    return norms.rm + C_m * norms.du ** 2 + 1.0


def build_phi(norms: PointwiseNorms, C_m: float) -> np.ndarray:
    """Φ = |Rm| + C_m|∇u|² + 1 for one snapshot."""
    if C_m < MIN_CM:
        raise MonitorError(f"C_m must be >= {MIN_CM}, got {C_m}")
    return _phi(norms, C_m)


def phi_field(norms: Sequence[PointwiseNorms], C_m: float) -> PhiField:
    return PhiField(C_m=C_m, values=[build_phi(n, C_m) for n in norms])


def _need_three(trajectory: Trajectory) -> None:
    if len(trajectory) < 3:
        raise MonitorError(f"space-time audits need >= 3 snapshots, got {len(trajectory)}")


def _heat_operator(trajectory: Trajectory, fields: Sequence[np.ndarray]) -> List[Tuple[int, np.ndarray]]:
    """(∂_t − Δ_{g(t)}) f at interior snapshots, ∂_t by centered snapshot differences."""
    times = trajectory.times
    out = []
    for k in range(1, len(trajectory) - 1):
        s = trajectory.snapshots[k]
        dt_f = (fields[k + 1] - fields[k - 1]) / (times[k + 1] - times[k - 1])
        lap = laplacian(ScalarField(s.g.grid, fields[k]), s.g, christoffel(s.g)).values
        out.append((k, dt_f - lap))
    return out


@dataclass(frozen=True)
class PointwiseFit:
    C: float
    t: Optional[float] = None
    index: Optional[Tuple[int, ...]] = None


def rm_heat_fit(trajectory: Trajectory, norms: Sequence[PointwiseNorms]) -> PointwiseFit:
    """Smallest C with □|Rm| ≤ C(|Rm|² + |∇²u|² + 1) at interior space-time points."""
    _need_three(trajectory)
    rm_eps = [np.sqrt(n.rm ** 2 + RM_EPS ** 2) for n in norms]
    best = PointwiseFit(0.0)
    for k, box in _heat_operator(trajectory, rm_eps):
        ratio = np.maximum(box, 0.0) / (norms[k].rm ** 2 + norms[k].hess_u ** 2 + 1.0)
        i = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
        if ratio[i] > best.C:
            best = PointwiseFit(float(ratio[i]), float(trajectory.snapshots[k].t), tuple(int(j) for j in i))
    logger.debug("rm_heat_bound C=%.6g", best.C)
    return best


def fitted_cm(C_heat: float) -> float:
    return max(MIN_CM, 2.0 * C_heat)


@dataclass(frozen=True)
class RiccatiVerdict:
    ok: bool
    C_m: float
    required_slack: float
    allowed_slack: float
    witness_t: Optional[float] = None
    witness_index: Optional[Tuple[int, ...]] = None
    guard_code: Optional[str] = None
    reason: str = ""


def riccati_check(trajectory: Trajectory, norms: Sequence[PointwiseNorms], C_m: float) -> RiccatiVerdict:
    """(∂_t − Δ)Φ ≤ C_mΦ² at interior space-time points, up to an additive slack."""
    _need_three(trajectory)
    if C_m < MIN_CM:
        logger.warning("riccati check with C_m=%.3g below %.0f", C_m, MIN_CM)
    phis = [_phi(n, C_m) for n in norms]
    required, allowed = 0.0, 0.0
    witness: Tuple[Optional[float], Optional[Tuple[int, ...]]] = (None, None)
    for k, box in _heat_operator(trajectory, phis):
        rhs = C_m * phis[k] ** 2
        excess = box - rhs
        i = np.unravel_index(int(np.argmax(excess)), excess.shape)
        allowed = max(allowed, RICCATI_SLACK * max(1.0, float(np.max(rhs))))
        if excess[i] > required:
            required = float(excess[i])
            witness = (float(trajectory.snapshots[k].t), tuple(int(j) for j in i))
    if required > allowed:
        t, idx = witness
        return RiccatiVerdict(False, C_m, required, allowed, t, idx, "VERIFY_FAIL",
                              f"riccati_bound violated by {required:.4g} at t={t:.6g}, point {idx}")
    return RiccatiVerdict(True, C_m, required, allowed)


@dataclass(frozen=True, eq=False)
class EnergyFit:
    a: float
    C: float
    C_integrated: float
    ok: bool
    times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    lhs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    basis: np.ndarray = field(default_factory=lambda: np.zeros(0))


def energy_inequality_check(trajectory: Trajectory, norms: Sequence[PointwiseNorms], phi_cut: ScalarField,
                            a: float, C_m: float) -> EnergyFit:
    """
    Fits C in
        −∫φ²Φ^{2a−1}ΔΦ + (1/2a)∫φ²∂_tΦ^{2a} ≤ C∫φ²Φ^{2a+1}
    and in the integrated-by-parts form
        ∫|∇(φΦ^a)|² + ½ d/dt∫φ²Φ^{2a} − ∫|∇φ|²Φ^{2a} ≤ C·a∫φ²Φ^{2a+1}.
    """
    if a < 1:
        raise MonitorError(f"energy exponent a must be >= 1, got {a}")
    _need_three(trajectory)
    snaps = trajectory.snapshots
    times = trajectory.times
    phis = [build_phi(n, C_m) for n in norms]
    w = phi_cut.values ** 2
    powers = [f ** (2 * a) for f in phis]
    J2 = np.array([integrate(w * pw, s.g) for s, pw in zip(snaps, powers)])
    dJ2 = time_derivative(J2, times)
    lhs, lhs_ibp, basis = [], [], []
    for k in range(1, len(trajectory) - 1):
        g = snaps[k].g
        lap = laplacian(ScalarField(g.grid, phis[k]), g, christoffel(g)).values
        dt_pow = (powers[k + 1] - powers[k - 1]) / (times[k + 1] - times[k - 1])
        I1 = -integrate(w * phis[k] ** (2 * a - 1) * lap, g)
        I2 = integrate(w * dt_pow, g) / (2 * a)
        I3 = integrate(w * phis[k] ** (2 * a + 1), g)
        grad_phi = cutoff_gradient_norm(phi_cut, g)
        product = ScalarField(g.grid, phi_cut.values * phis[k] ** a)
        J1 = integrate(cutoff_gradient_norm(product, g) ** 2, g)
        J3 = integrate(grad_phi ** 2 * powers[k], g)
        lhs.append(I1 + I2)
        lhs_ibp.append(J1 + 0.5 * dJ2[k] - J3)
        basis.append(I3)
    lhs_a, ibp_a, basis_a = np.array(lhs), np.array(lhs_ibp), np.array(basis)
    scale = max(float(np.max(np.abs(lhs_a))), float(np.max(basis_a)))
    C, _ = fit_ratio(lhs_a, basis_a, scale)
    C_ibp, _ = fit_ratio(ibp_a, a * basis_a, max(scale, float(np.max(np.abs(ibp_a)))))
    logger.debug("energy_inequality a=%g C=%.6g (integrated form %.6g)", a, C, C_ibp)
    return EnergyFit(a=a, C=C, C_integrated=C_ibp, ok=math.isfinite(C) and math.isfinite(C_ibp),
                     times=times[1:-1], lhs=lhs_a, basis=basis_a)


@dataclass(frozen=True)
class EnergyGrowth:
    ratio: float
    bound: float
    ok: bool


def energy_growth(energy: Sequence[EnergyFit]) -> EnergyGrowth:
    """C(a_max)/C(a_min) against 1.5·a_max/a_min: the fitted constant may grow at most linearly in a."""
    lo = min(energy, key=lambda e: e.a)
    hi = max(energy, key=lambda e: e.a)
    bound = ENERGY_LINEAR_SLACK * hi.a / lo.a
    if lo.C > 0:
        ratio = hi.C / lo.C
    else:
        ratio = 0.0 if hi.C <= 0 else math.inf
    finite = math.isfinite(lo.C) and math.isfinite(hi.C)
    return EnergyGrowth(ratio, bound, finite and hi.C <= bound * lo.C + ENERGY_ATOL)


@dataclass(frozen=True)
class MoserReport:
    sup_phi: float
    A: float
    Lam: float
    C_n: float
    implied_constant: float
    sup_phi_series: Tuple[float, ...]
    growth_rate: float
    observed_rate: float
    growth_ok: bool
    bounded: bool
    convention: str = "alpha' = beta' = 1"


def growth_rates(series: Sequence[float], times: Sequence[float], C_m: float) -> Tuple[float, float]:
    """
    (C_m·supΦ(0), smallest c with supΦ(t) ≤ supΦ(0)e^{ct}). The first is
    the rate of the Riccati bound linearized at t = 0.
    """
    s0 = float(series[0])
    observed = 0.0
    for s, t in zip(series[1:], times[1:]):
        if t > 0 and s > s0:
            observed = max(observed, math.log(s / s0) / t)
    return C_m * s0, observed


def growth_within_headroom(series: Sequence[float], times: Sequence[float], rate: float) -> bool:
    """supΦ(t) ≤ 10·supΦ(0)·e^{rate·t} at every snapshot."""
    bound0 = math.log(GROWTH_HEADROOM * float(series[0]))
    return all(math.isfinite(s) and math.log(s) <= bound0 + rate * t for s, t in zip(series, times))


def moser_sup_report(trajectory: Trajectory, norms: Sequence[PointwiseNorms], data: CutoffData,
                     p: float, C_m: float, L: float, C: float, Lam: Optional[float] = None) -> MoserReport:
    """
    sup Φ over B(ρ/4√K) × [T/2, T] against the iteration's input A and the
    chain constant C_n = C(1+Λ) + 3Kρ^{-2} + 3C_mL² + 3. Λ is the normalized
    half-ball bound on |Rm|^p; without one, the initial normalized average.
    """
    times = trajectory.times
    T = float(times[-1])
    late = [k for k, t in enumerate(times) if t >= 0.5 * T]
    if not late or T <= 0:
        raise MonitorError(f"no snapshot in [T/2, T] for T={T}")
    K, rho = data.K, data.rho
    phis = [_phi(n, C_m) for n in norms]
    inner = data.ball_mask(data.quarter_radius)
    if not inner.any():
        inner = data.d0.values == 0.0
    sup_phi = max(float(np.max(phis[k][inner])) for k in late)

    g0 = trajectory.snapshots[0].g
    vol0 = ball_volume(g0, data.d0, data.half_radius)
    A = max(
        (ball_integral(f ** p, g0, data.d0, data.half_radius) / vol0) ** (1.0 / p) for f in phis
    )
    if Lam is None:
        Lam = ball_integral(norms[0].rm ** p, g0, data.d0, data.half_radius) / vol0
    C_n = C * (1.0 + Lam) + 3.0 * K / rho ** 2 + 3.0 * C_m * L * L + 3.0
    scale = math.exp(T + rho / math.sqrt(K)) * (1.0 + C_n + (K / rho ** 2 + 1.0 / T)) * A
    implied = sup_phi / scale if math.isfinite(scale) else 0.0

    series = tuple(float(np.max(f)) for f in phis)
    rate, observed = growth_rates(series, times, C_m)
    growth_ok = growth_within_headroom(series, times, rate)
    bounded = all(math.isfinite(s) for s in series)
    if not growth_ok:
        logger.warning("sup Phi grew past 10x the Riccati envelope (rate %.4g, observed %.4g)", rate, observed)
    return MoserReport(sup_phi, A, float(Lam), C_n, implied, series, rate, observed, growth_ok, bounded)


@dataclass(frozen=True)
class ScalarBounds:
    lower_C: float
    ratio_C: float


def scalar_bounds(norms: Sequence[PointwiseNorms], C_m: float) -> ScalarBounds:
    """R − 2|∇u|² ≥ −C and |R − 2|∇u|²| ≤ CΦ, both fitted."""
    lower, ratio = 0.0, 0.0
    for n in norms:
        q = n.scalar - 2.0 * n.du ** 2
        lower = max(lower, -float(np.min(q)))
        ratio = max(ratio, float(np.max(np.abs(q) / _phi(n, C_m))))
    return ScalarBounds(lower, ratio)


@dataclass(frozen=True)
class ExtensionReport:
    C_heat: PointwiseFit
    C_m: float
    riccati: RiccatiVerdict
    energy: Tuple[EnergyFit, ...]
    moser: MoserReport
    scalar: ScalarBounds

    @property
    def energy_growth(self) -> EnergyGrowth:
        return energy_growth(self.energy)

    @property
    def ok(self) -> bool:
        return (math.isfinite(self.C_heat.C) and self.riccati.ok and all(e.ok for e in self.energy)
                and self.energy_growth.ok and self.moser.bounded and self.moser.growth_ok)

    def summary(self) -> Dict[str, object]:
        growth = self.energy_growth
        m = self.moser
        return {
            "rm_heat_bound": {"C_fit": self.C_heat.C, "t": self.C_heat.t,
                              "index": list(self.C_heat.index) if self.C_heat.index else None},
            "C_m": self.C_m,
            "riccati_bound": {"ok": self.riccati.ok, "required_slack": self.riccati.required_slack,
                              "allowed_slack": self.riccati.allowed_slack},
            "energy_inequality": {f"{e.a:g}": {"C_fit": e.C, "C_integrated": e.C_integrated, "ok": e.ok}
                                  for e in self.energy},
            "energy_growth": {"ratio": growth.ratio, "bound": growth.bound, "ok": growth.ok},
            "moser": {"sup_phi": m.sup_phi, "A": m.A, "Lambda": m.Lam, "C_n": m.C_n,
                      "implied_constant": m.implied_constant, "growth_rate": m.growth_rate,
                      "observed_rate": m.observed_rate, "growth_ok": m.growth_ok,
                      "bounded": m.bounded, "convention": m.convention},
            "scalar_lower_C": self.scalar.lower_C,
            "scalar_ratio_C": self.scalar.ratio_C,
        }


def run_extension_audit(trajectory: Trajectory, norms: Sequence[PointwiseNorms], data: CutoffData,
                        p: float, L: float, C: float, exponents: Sequence[float] = (1.0, 2.0, 4.0),
                        C_m: Optional[float] = None, Lam: Optional[float] = None) -> ExtensionReport:
    heat = rm_heat_fit(trajectory, norms)
    cm = fitted_cm(heat.C) if C_m is None else float(C_m)
    if cm < MIN_CM:
        raise MonitorError(f"C_m must be >= {MIN_CM}, got {cm}")
    phi_half = cutoff(data.d0, 0.5 * data.rho, data.K)
    energy = tuple(energy_inequality_check(trajectory, norms, phi_half, a, cm) for a in exponents)
    return ExtensionReport(
        C_heat=heat,
        C_m=cm,
        riccati=riccati_check(trajectory, norms, cm),
        energy=energy,
        moser=moser_sup_report(trajectory, norms, data, p, cm, L, C, Lam),
        scalar=scalar_bounds(norms, cm),
    )
