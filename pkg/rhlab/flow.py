# rhlab/flow.py
"""
Method-of-lines integrator for the coupled flow
    ∂_t g = −2 Ric(g) + 4 du⊗du,    ∂_t u = Δ_g u
plus the identity audits that run along a finished trajectory.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .curvature import PointwiseNorms, christoffel, curvature_pack, laplacian, ricci, riemann
from .errors import FieldError, FlowSingularityError, MetricNotSPDError, MonitorError, ScenarioError
from .grid_fields import (
    MetricField,
    ScalarField,
    Slot,
    TensorField,
    gradient_stack,
    integrate,
)

logger = logging.getLogger(__name__)

Observer = Callable[["FlowState"], None]


@dataclass(frozen=True, eq=False)
class FlowState:
    t: float
    g: MetricField
    u: ScalarField


@dataclass(frozen=True)
class StepControl:
    """
    dt is the requested step; every step is additionally capped by the
    parabolic CFL bound of the current metric.
    stride is the time between stored snapshots.
    """

    dt: float
    t_max: float
    safety: float = 0.5
    stride: Optional[float] = None

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ScenarioError("flow.dt", "> 0")
        if not self.t_max > 0:
            raise ScenarioError("flow.tmax", "> 0")
        if not 0 < self.safety <= 1:
            raise ScenarioError("flow.safety", "in (0, 1]")
        if self.stride is not None and not self.stride > 0:
            raise ScenarioError("flow.stride", "> 0")

    def snapshot_times(self) -> List[float]:
        stride = self.stride or self.t_max
        count = max(1, int(math.floor(self.t_max / stride + 1e-9)))
        times = [k * stride for k in range(1, count + 1) if k * stride < self.t_max * (1 - 1e-12)]
        return [0.0] + times + [self.t_max]


@dataclass
class Trajectory:
    snapshots: List[FlowState] = field(default_factory=list)
    step_count: int = 0
    dt_max: float = 0.0

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    def __len__(self) -> int:
        return len(self.snapshots)


# ---------------------------------------------------------------------------
# right-hand side and stepping

def flow_rhs(state: FlowState) -> Tuple[TensorField, ScalarField]:
    g, u = state.g, state.u
    gamma = christoffel(g)
    ric = ricci(riemann(g, gamma), g)
    du = gradient_stack(u.values, g.grid)
    dg = -2.0 * ric.components + 4.0 * np.einsum("i...,j...->ij...", du, du)
    dg = 0.5 * (dg + np.swapaxes(dg, 0, 1))
    sym = TensorField(g.grid, dg, (Slot.COVARIANT, Slot.COVARIANT), ((0, 1),))
    return sym, laplacian(u, g, gamma)


def cfl_limit(g: MetricField, safety: float = 1.0) -> float:
    """σ · h_min² / (2n · max λ(g^{-1}))."""
    h_min = min(g.grid.spacing)
    lam_min = float(np.min(g.eigenvalues[..., 0]))
    return safety * h_min * h_min * lam_min / (2.0 * g.grid.dim)


def _stage(state: FlowState, t: float, k_g: np.ndarray, k_u: np.ndarray, c: float) -> FlowState:
    grid = state.g.grid
    try:
        g = MetricField.from_components(grid, state.g.components + c * k_g)
        u = ScalarField(grid, state.u.values + c * k_u)
    except MetricNotSPDError as err:
        raise FlowSingularityError(t, err.index) from err
    except FieldError as err:
        raise FlowSingularityError(t, None, f"non-finite fields at t={t:.6g}: {err}") from err
    return FlowState(t=t, g=g, u=u)


def _rk4(state: FlowState, dt: float) -> FlowState:
    t = state.t
    k1g, k1u = flow_rhs(state)
    s2 = _stage(state, t + 0.5 * dt, k1g.components, k1u.values, 0.5 * dt)
    k2g, k2u = flow_rhs(s2)
    s3 = _stage(state, t + 0.5 * dt, k2g.components, k2u.values, 0.5 * dt)
    k3g, k3u = flow_rhs(s3)
    s4 = _stage(state, t + dt, k3g.components, k3u.values, dt)
    k4g, k4u = flow_rhs(s4)
    inc_g = (k1g.components + 2.0 * k2g.components + 2.0 * k3g.components + k4g.components) / 6.0
    inc_u = (k1u.values + 2.0 * k2u.values + 2.0 * k3u.values + k4u.values) / 6.0
    return _stage(state, t + dt, inc_g, inc_u, dt)


def advance_step(state: FlowState, control: StepControl, dt: Optional[float] = None) -> FlowState:
    """One RK4 step; the effective step is new.t - state.t."""
    requested = control.dt if dt is None else dt
    cap = cfl_limit(state.g, control.safety)
    effective = min(requested, cap)
    if effective < requested:
        logger.debug("dt %.3e shrunk to CFL bound %.3e at t=%.6g", requested, effective, state.t)
    return _rk4(state, effective)


def evolve(state0: FlowState, control: StepControl, observers: Sequence[Observer] = ()) -> Trajectory:
    """
    Integrate to control.t_max, storing a snapshot at every stride time.
    Each interval between snapshots is cut into equal steps no longer than
    min(dt, CFL), re-evaluated before every step.
    On a singularity the partial trajectory rides on the raised error.
    """
    traj = Trajectory()
    state = state0

    def record(s: FlowState) -> None:
        traj.snapshots.append(s)
        for obs in observers:
            obs(s)

    record(state)
    try:
        for target in control.snapshot_times()[1:]:
            while target - state.t > 1e-13 * max(1.0, target):
                cap = min(control.dt, cfl_limit(state.g, control.safety))
                remaining = target - state.t
                n_sub = max(1, math.ceil(remaining / cap - 1e-9))
                h = remaining / n_sub
                state = _rk4(state, h)
                if n_sub == 1:
                    state = replace(state, t=target)
                traj.step_count += 1
                traj.dt_max = max(traj.dt_max, h)
            record(state)
    except FlowSingularityError as err:
        err.trajectory = traj
        logger.warning("flow singular at t=%.6g after %d steps", err.t, traj.step_count)
        raise
    logger.info("evolved to t=%.6g in %d steps (%d snapshots)", state.t, traj.step_count, len(traj))
    return traj


def richardson_order(state: FlowState, span: float, steps: int) -> float:
    """Observed temporal order from runs with steps, 2·steps and 4·steps equal RK4 steps."""
    if span / steps > cfl_limit(state.g):
        raise ScenarioError("richardson.steps", f"span/steps must respect CFL {cfl_limit(state.g):.3e}")
    finals = []
    for n in (steps, 2 * steps, 4 * steps):
        s = state
        for _ in range(n):
            s = _rk4(s, span / n)
        finals.append(np.concatenate([s.g.components.ravel(), s.u.values.ravel()]))
    coarse = float(np.max(np.abs(finals[0] - finals[1])))
    fine = float(np.max(np.abs(finals[1] - finals[2])))
    if fine == 0.0:
        return math.inf
    return math.log2(coarse / fine)


# ---------------------------------------------------------------------------
# run-wide bounds and identity audits

def snapshot_norms(trajectory: Trajectory) -> List[PointwiseNorms]:
    return [curvature_pack(s.g, s.u).norms() for s in trajectory.snapshots]


def measure_sup_bounds(trajectory: Trajectory,
                       norms: Optional[Sequence[PointwiseNorms]] = None) -> Tuple[float, float]:
    """K = sup |Ric|, L = sup |∇u| over every snapshot and lattice point."""
    if not len(trajectory):
        raise MonitorError("cannot measure bounds of an empty trajectory")
    norms = snapshot_norms(trajectory) if norms is None else norms
    K = max(float(np.max(n.ric)) for n in norms)
    L = max(float(np.max(n.du)) for n in norms)
    return K, L


def _need_three(trajectory: Trajectory) -> None:
    if len(trajectory) < 3:
        raise MonitorError(f"identity audits need >= 3 snapshots, got {len(trajectory)}")


def volume_identity_residual(trajectory: Trajectory, norms: Sequence[PointwiseNorms]) -> float:
    """max_t |d/dt Vol − ∫(−R + 2|∇u|²) dV_t| with d/dt from the snapshot series."""
    _need_three(trajectory)
    times = trajectory.times
    vols = np.array([integrate(np.ones(s.g.grid.shape), s.g) for s in trajectory.snapshots])
    rates = np.gradient(vols, times, edge_order=2)
    predicted = np.array([
        integrate(-n.scalar + 2.0 * n.du ** 2, s.g) for s, n in zip(trajectory.snapshots, norms)
    ])
    return float(np.max(np.abs(rates - predicted)))


def gradient_identity_residual(trajectory: Trajectory, norms: Sequence[PointwiseNorms]) -> float:
    """sup over interior snapshots of |□|∇u|² + 2|∇²u|² + 4|∇u|⁴|."""
    _need_three(trajectory)
    times = trajectory.times
    worst = 0.0
    for k in range(1, len(trajectory) - 1):
        s = trajectory.snapshots[k]
        w_prev, w_next = norms[k - 1].du ** 2, norms[k + 1].du ** 2
        dt_w = (w_next - w_prev) / (times[k + 1] - times[k - 1])
        w = ScalarField(s.g.grid, norms[k].du ** 2)
        lap_w = laplacian(w, s.g, christoffel(s.g)).values
        res = dt_w - lap_w + 2.0 * norms[k].hess_u ** 2 + 4.0 * norms[k].du ** 4
        worst = max(worst, float(np.max(np.abs(res))))
    return worst


def sup_gradient_increase(norms: Sequence[PointwiseNorms]) -> float:
    """Largest increase of sup|∇u|² between consecutive snapshots (≤ 0 when monotone)."""
    sups = np.array([float(np.max(n.du ** 2)) for n in norms])
    if len(sups) < 2:
        return 0.0
    return float(np.max(np.diff(sups)))


def sup_curvature_series(norms: Sequence[PointwiseNorms]) -> np.ndarray:
    return np.array([float(np.max(n.rm)) for n in norms])


@dataclass(frozen=True)
class MetricEquivalence:
    ok: bool
    lower_ok: bool
    upper_ok: bool
    min_ratio: float
    max_ratio: float
    reason: str = ""
    ricci_max_ratio: float = 0.0

    @property
    def ricci_upper_ok(self) -> bool:
        """Largest eigenvalue under e^{2Kt}, the bound without the du⊗du growth."""
        return self.ricci_max_ratio <= 1.0 + 1e-6


def metric_equivalence(trajectory: Trajectory, K: float, L: float, rtol: float = 1e-6) -> MetricEquivalence:
    """
    Eigenvalues of g(0)^{-1} g(t) against e^{-2Kt} from below and
    e^{(2K+4L²)t} from above.
    The ratio against e^{2Kt} is kept alongside, unjudged.
    """
    g0 = trajectory.snapshots[0].g.pointwise
    lower_ok = upper_ok = True
    min_ratio, max_ratio, ricci_ratio = math.inf, 0.0, 0.0
    reason = ""
    for s in trajectory.snapshots:
        lam = np.linalg.eigvals(np.linalg.solve(g0, s.g.pointwise)).real
        lo = math.exp(-2.0 * K * s.t)
        hi = math.exp((2.0 * K + 4.0 * L * L) * s.t)
        lam_lo, lam_hi = float(np.min(lam)), float(np.max(lam))
        min_ratio = min(min_ratio, lam_lo / lo)
        max_ratio = max(max_ratio, lam_hi / hi)
        ricci_ratio = max(ricci_ratio, lam_hi / math.exp(2.0 * K * s.t))
        if lower_ok and lam_lo < lo * (1.0 - rtol):
            lower_ok = False
            reason = f"eigenvalue {lam_lo:.6g} below e^(-2Kt)={lo:.6g} at t={s.t:.6g}"
        if upper_ok and lam_hi > hi * (1.0 + rtol):
            upper_ok = False
            reason = reason or f"eigenvalue {lam_hi:.6g} above e^((2K+4L^2)t)={hi:.6g} at t={s.t:.6g}"
    return MetricEquivalence(lower_ok and upper_ok, lower_ok, upper_ok, min_ratio, max_ratio, reason, ricci_ratio)
