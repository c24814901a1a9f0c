#!/usr/bin/env python3
"""
RK4 integrator, snapshot schedule, singularity reporting and the identity
audits that run along a trajectory.
"""

import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from rhlab.errors import FlowSingularityError, MonitorError, ScenarioError
from rhlab.flow import (
    FlowState,
    StepControl,
    Trajectory,
    _stage,
    advance_step,
    cfl_limit,
    evolve,
    flow_rhs,
    gradient_identity_residual,
    measure_sup_bounds,
    metric_equivalence,
    richardson_order,
    snapshot_norms,
    sup_curvature_series,
    sup_gradient_increase,
    volume_identity_residual,
)
from rhlab.curvature import scalar_from_profile, warped_metric
from rhlab.grid_fields import ScalarField, build_grid, flat_metric
from rhlab.scenario import initial_state, load_preset, step_control, with_overrides


def _grid(N: int):
    return build_grid(2, [2 * math.pi, 2 * math.pi], [N, 8])


def _coupled(N: int) -> FlowState:
    grid = _grid(N)
    return FlowState(0.0, flat_metric(grid), scalar_from_profile(grid, "0.3*cos(x)"))


def _static(N: int = 16) -> FlowState:
    grid = _grid(N)
    return FlowState(0.0, flat_metric(grid), ScalarField(grid, np.full(grid.shape, 0.5)))


def test_step_control_validates():
    with pytest.raises(ScenarioError):
        StepControl(dt=0.0, t_max=1.0)
    with pytest.raises(ScenarioError):
        StepControl(dt=0.1, t_max=1.0, safety=1.5)


def test_snapshot_times_include_both_ends():
    assert StepControl(dt=1.0, t_max=1.0, stride=0.25).snapshot_times() == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert StepControl(dt=1.0, t_max=1.0, stride=0.3).snapshot_times() == pytest.approx([0.0, 0.3, 0.6, 0.9, 1.0])
    assert StepControl(dt=1.0, t_max=0.5).snapshot_times() == [0.0, 0.5]


def test_flat_constant_field_is_stationary():
    state = _static()
    dg, du = flow_rhs(state)
    assert np.max(np.abs(dg.components)) == 0.0
    assert np.max(np.abs(du.values)) == 0.0
    nxt = advance_step(state, StepControl(dt=0.01, t_max=1.0))
    assert nxt.t == pytest.approx(0.01)
    assert np.max(np.abs(nxt.g.components - state.g.components)) <= 1e-14
    assert np.max(np.abs(nxt.u.values - 0.5)) <= 1e-14


def test_cfl_limit_on_flat_metric():
    state = _static(16)
    h = 2 * math.pi / 16
    assert cfl_limit(state.g) == pytest.approx(h * h / 4)
    assert cfl_limit(state.g, 0.5) == pytest.approx(h * h / 8)


def test_advance_step_respects_cfl():
    state = _static(16)
    nxt = advance_step(state, StepControl(dt=1.0, t_max=1.0, safety=0.5))
    assert nxt.t == pytest.approx(cfl_limit(state.g, 0.5))


def test_evolve_stores_every_stride():
    seen = []
    traj = evolve(_static(), StepControl(dt=1.0, t_max=1.0, stride=0.25), observers=[lambda s: seen.append(s.t)])
    assert list(traj.times) == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert seen == list(traj.times)
    assert traj.step_count >= 4
    assert traj.dt_max <= cfl_limit(traj.snapshots[0].g, 0.5) * (1 + 1e-12)


def test_rk4_observed_order():
    order = richardson_order(_coupled(16), span=0.1, steps=4)
    assert 3.5 <= order <= 4.5


def test_richardson_refuses_unstable_steps():
    with pytest.raises(ScenarioError):
        richardson_order(_coupled(16), span=1.0, steps=1)


def test_singularity_carries_index():
    state = _static()
    with pytest.raises(FlowSingularityError) as info:
        _stage(state, 0.1, -2.0 * state.g.components, np.zeros(state.g.grid.shape), 1.0)
    assert info.value.t == 0.1
    assert info.value.index is not None


def test_sup_bounds_of_warped_metric():
    grid = _grid(64)
    traj = Trajectory([FlowState(0.0, warped_metric(grid, 1, "2 + cos(x)"), ScalarField(grid, np.zeros(grid.shape)))])
    K, L = measure_sup_bounds(traj)
    # |Ric| = sqrt(2)|K_gauss| and K_gauss = -1 at x = pi
    assert K == pytest.approx(math.sqrt(2), abs=0.05)
    assert L == 0.0
    with pytest.raises(MonitorError):
        measure_sup_bounds(Trajectory())


def test_coupled_flow_audits():
    traj = evolve(_coupled(16), StepControl(dt=1.0, t_max=0.3, stride=0.1))
    norms = snapshot_norms(traj)
    K, L = measure_sup_bounds(traj, norms)
    assert L == pytest.approx(0.3, rel=0.05)
    assert sup_gradient_increase(norms) <= 1e-8
    eq = metric_equivalence(traj, max(K, 1e-3), L)
    assert eq.ok, eq.reason
    assert eq.min_ratio >= 1.0 - 1e-6
    assert eq.ricci_max_ratio >= eq.max_ratio


def test_metric_equivalence_flags_a_shrinking_metric():
    grid = _grid(16)
    u = ScalarField(grid, np.zeros(grid.shape))
    traj = Trajectory([FlowState(0.0, flat_metric(grid), u), FlowState(1.0, flat_metric(grid, 0.1), u)])
    eq = metric_equivalence(traj, K=0.1, L=0.0)
    assert not eq.ok
    assert not eq.lower_ok
    assert "below" in eq.reason


def test_identity_residuals_shrink_under_refinement():
    volume, gradient = [], []
    for N, stride in ((16, 0.02), (32, 0.01)):
        traj = evolve(_coupled(N), StepControl(dt=1.0, t_max=0.1, stride=stride))
        norms = snapshot_norms(traj)
        volume.append(volume_identity_residual(traj, norms))
        gradient.append(gradient_identity_residual(traj, norms))
    assert gradient[1] < gradient[0] / 3.0
    assert volume[1] <= max(volume[0] / 3.0, 1e-10)


def test_identity_audits_need_three_snapshots():
    traj = Trajectory([_static()])
    with pytest.raises(MonitorError):
        volume_identity_residual(traj, snapshot_norms(traj))


def test_ricci_flow_smooths_the_warped_torus():
    scenario = with_overrides(load_preset("warped_ricci"), resolution=16, tmax=0.2)
    traj = evolve(initial_state(scenario), step_control(scenario))
    norms = snapshot_norms(traj)
    sup = sup_curvature_series(norms)
    assert np.all(np.diff(sup) <= 1e-8)
    assert sup[-1] < sup[0]
    K, L = measure_sup_bounds(traj, norms)
    eq = metric_equivalence(traj, K, L)
    # u = 0: both upper envelopes are e^{2Kt}
    assert eq.ok
    assert eq.ricci_upper_ok
    assert eq.ricci_max_ratio == pytest.approx(eq.max_ratio)
