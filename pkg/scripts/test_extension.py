#!/usr/bin/env python3
"""
Heat-operator, Riccati, energy and sup-bound audits on short trajectories.
"""

import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from rhlab.curvature import warped_metric
from rhlab.errors import MonitorError
from rhlab.extension import (
    MIN_CM,
    EnergyFit,
    build_phi,
    energy_inequality_check,
    energy_growth,
    fitted_cm,
    growth_rates,
    growth_within_headroom,
    riccati_check,
    rm_heat_fit,
    run_extension_audit,
)
from rhlab.audit import AuditSettings, audit_run, extension_verdicts
from rhlab.verifier import AuditVerifier
from rhlab.flow import FlowState, StepControl, Trajectory, evolve, snapshot_norms
from rhlab.grid_fields import ScalarField, build_grid
from rhlab.localization import build_cutoff
from rhlab.scenario import initial_state, load_preset, step_control


@pytest.fixture(scope="module")
def flat_static():
    scenario = load_preset("flat_static")
    traj = evolve(initial_state(scenario), step_control(scenario))
    return traj, snapshot_norms(traj)


@pytest.fixture(scope="module")
def warped_short():
    grid = build_grid(2, [2 * math.pi, 2 * math.pi], [32, 8])
    state = FlowState(0.0, warped_metric(grid, 1, "2 + cos(x)"), ScalarField(grid, np.zeros(grid.shape)))
    traj = evolve(state, StepControl(dt=1.0, t_max=0.02, stride=0.01))
    return traj, snapshot_norms(traj)


def test_phi_needs_cm_of_at_least_two(flat_static):
    _, norms = flat_static
    assert np.allclose(build_phi(norms[0], 2.0), 1.0)
    with pytest.raises(MonitorError):
        build_phi(norms[0], 1.0)
    assert fitted_cm(0.3) == MIN_CM
    assert fitted_cm(5.0) == 10.0


def test_static_flow_passes_every_extension_audit(flat_static):
    traj, norms = flat_static
    data = build_cutoff(traj.snapshots[0].g, (0, 0), rho=1.0, K=1.0)
    report = run_extension_audit(traj, norms, data, p=3.0, L=0.0, C=1.0)
    assert report.ok
    assert report.C_heat.C == 0.0
    assert report.C_m == MIN_CM
    assert report.riccati.required_slack == 0.0
    assert all(e.C == 0.0 and e.C_integrated == pytest.approx(0.0, abs=1e-12) for e in report.energy)
    assert report.moser.sup_phi == pytest.approx(1.0)
    assert report.moser.growth_ok and report.moser.bounded
    assert report.moser.A == pytest.approx(1.0)
    assert report.moser.implied_constant <= 1.0
    assert report.moser.growth_rate == pytest.approx(MIN_CM)
    assert report.moser.observed_rate == 0.0
    assert report.energy_growth.ok and report.energy_growth.ratio == 0.0
    assert report.scalar.lower_C == 0.0
    summary = report.summary()
    assert set(summary["energy_inequality"]) == {"1", "2", "4"}


def test_energy_exponent_below_one_is_rejected(flat_static):
    traj, norms = flat_static
    data = build_cutoff(traj.snapshots[0].g, (0, 0), rho=1.0, K=1.0)
    with pytest.raises(MonitorError):
        energy_inequality_check(traj, norms, data.phi, 0.5, 2.0)


def test_rm_heat_fit_on_ricci_flow(warped_short):
    traj, norms = warped_short
    fit = rm_heat_fit(traj, norms)
    # on the positively curved band |Rm| = 2K and its heat operator is 4K^2
    assert fit.C > 0.0
    assert fit.t == pytest.approx(0.01)
    assert fit.index is not None


def test_riccati_bound_detects_a_small_constant(warped_short):
    traj, norms = warped_short
    verdict = riccati_check(traj, norms, 0.01)
    assert not verdict.ok
    assert verdict.guard_code == "VERIFY_FAIL"
    assert verdict.required_slack > verdict.allowed_slack
    assert "riccati_bound" in verdict.reason


def test_riccati_bound_holds_with_fitted_constant(warped_short):
    traj, norms = warped_short
    verdict = riccati_check(traj, norms, fitted_cm(rm_heat_fit(traj, norms).C))
    assert verdict.ok, verdict.reason


def test_extension_audit_needs_three_snapshots(flat_static):
    traj, norms = flat_static
    with pytest.raises(MonitorError):
        rm_heat_fit(Trajectory(traj.snapshots[:2]), norms[:2])


def test_sup_phi_growth_against_the_linearized_riccati_rate():
    times = [0.0, 0.1, 0.2]
    rate, observed = growth_rates([2.0, 2.0 * math.e, 2.0 * math.e ** 2], times, C_m=2.0)
    assert rate == pytest.approx(4.0)
    assert observed == pytest.approx(10.0)
    assert growth_within_headroom([2.0, 3.0, 4.0], times, rate)
    # 25x in t = 0.2 outruns 10 e^{0.8}
    assert not growth_within_headroom([2.0, 10.0, 50.0], times, rate)
    assert not growth_within_headroom([2.0, math.inf, 2.0], times, rate)


def test_energy_constant_grows_at_most_linearly_in_a():
    def fits(*cs):
        return [EnergyFit(a=a, C=c, C_integrated=c, ok=True) for a, c in zip((1.0, 2.0, 4.0), cs)]

    same = energy_growth(fits(0.16, 0.16, 0.16))
    assert same.ok and same.ratio == pytest.approx(1.0) and same.bound == 6.0
    assert energy_growth(fits(0.1, 0.3, 0.59)).ok
    assert not energy_growth(fits(0.1, 0.3, 0.7)).ok
    assert energy_growth(fits(0.0, 0.0, 0.0)).ok
    assert not energy_growth(fits(0.0, 0.0, 0.1)).ok
    assert not energy_growth(fits(0.1, 0.1, math.inf)).ok


def test_moser_chain_takes_lambda_from_the_normalized_bound(flat_static):
    traj, norms = flat_static
    data = build_cutoff(traj.snapshots[0].g, (0, 0), rho=1.0, K=1.0)
    plain = run_extension_audit(traj, norms, data, p=3.0, L=0.0, C=1.0)
    lifted = run_extension_audit(traj, norms, data, p=3.0, L=0.0, C=1.0, Lam=2.0)
    assert plain.moser.Lam == 0.0
    assert lifted.moser.Lam == 2.0
    assert lifted.moser.C_n == pytest.approx(plain.moser.C_n + 2.0)
    assert lifted.moser.implied_constant < plain.moser.implied_constant


def test_broken_sup_growth_fails_the_run():
    scenario = load_preset("flat_static")
    traj = evolve(initial_state(scenario), step_control(scenario))
    run = audit_run(traj, snapshot_norms(traj), AuditSettings.from_scenario(scenario))
    assert run.verdicts()["extension_growth"]
    assert "extension_growth" not in run.reasons()

    moser = replace(run.extension.moser, growth_ok=False)
    broken = replace(run, extension=replace(run.extension, moser=moser))
    assert extension_verdicts(broken.extension)["extension_growth"] is False
    assert not broken.extension.ok
    assert "extension_growth" in broken.reasons()
    result = AuditVerifier().verify(broken.verdicts(), broken.reasons())
    assert not result.ok
    assert result.failed == "extension_growth"
