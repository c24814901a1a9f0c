#!/usr/bin/env python3
"""
Monitored integrals, the exact ladder, per-sample invariants, constant
fitting and the closed-form constants of the final bound.
"""

import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from rhlab.curvature import PointwiseNorms
from rhlab.errors import MonitorError
from rhlab.flow import FlowState
from rhlab.grid_fields import ScalarField, build_grid, flat_metric
from rhlab.localization import CutoffData, cutoff
from rhlab.monitor import (
    FITTED_INEQUALITIES,
    GammaConstants,
    assemble_U,
    check_hessian_ladder,
    check_local_lp_bound,
    fit_inequality_constant,
    fit_ratio,
    gamma_constants,
    ladder_indices,
    ladder_size,
    normalized_constant,
    normalized_lp_check,
    sample_invariants,
    sample_quantities,
)


def _setup(rm, hess, du, ric=None, t=0.0):
    """Unit square, flat metric, cutoff identically 1 (d0 ≡ 0)."""
    grid = build_grid(2, [1.0, 1.0], [8, 8])
    g = flat_metric(grid)
    zeros = np.zeros(grid.shape)
    d0 = ScalarField(grid, zeros)
    data = CutoffData(x0=(0, 0), rho=1.0, K=1.0, d0=d0, phi=cutoff(d0, 1.0, 1.0))

    def full(v):
        return np.broadcast_to(np.asarray(v, dtype=float), grid.shape).copy()

    norms = PointwiseNorms(grid, rm=full(rm), ric=full(1.0 if ric is None else ric), nabla_rm=zeros,
                           nabla_ric=zeros, du=full(du), hess_u=full(hess), scalar=zeros, lap_u=zeros)
    return FlowState(t, g, ScalarField(grid, zeros)), norms, data


def test_constant_sample_by_hand():
    state, norms, data = _setup(rm=2.0, hess=1.0, du=0.5)
    s = sample_quantities(state, norms, data, 3.0)
    assert s.A1 == pytest.approx(8.0)
    assert s.A2 == pytest.approx(4.0)
    assert s.T == pytest.approx((1.0, 2.0, 4.0))
    assert s.Tp == pytest.approx(4.0)
    assert s.Tpm1 == pytest.approx(2.0)
    assert s.S == pytest.approx(1.0)
    assert s.S_tilde == pytest.approx(0.25)
    assert s.ric_weighted == pytest.approx(4.0)
    assert s.A3 == 0.0 and s.A4 == 0.0 and s.B1 == 0.0
    assert s.vol_omega == pytest.approx(1.0)
    assert s.phi_mass == pytest.approx(1.0)
    assert s.lhs_ball == pytest.approx(8.0)
    assert all(sample_invariants(s, K=1.0, L=0.5).values())


def test_p_below_three_is_rejected():
    state, norms, data = _setup(rm=1.0, hess=1.0, du=0.0)
    with pytest.raises(MonitorError):
        sample_quantities(state, norms, data, 2.5)


def test_ladder_sizes():
    assert ladder_size(3.0) == 3
    assert ladder_size(3.5) == 4
    assert list(ladder_indices(3.5)) == [1, 2, 3]
    assert list(ladder_indices(4.0)) == [1, 2, 3, 4]


def test_ladder_on_constant_sample():
    state, norms, data = _setup(rm=2.0, hess=1.0, du=0.5)
    s = sample_quantities(state, norms, data, 3.0)
    verdict = check_hessian_ladder(s, C=1.0, k=2)
    assert verdict.ok
    assert verdict.lhs == pytest.approx(2.0)
    assert verdict.rhs == pytest.approx(5.0)
    with pytest.raises(MonitorError):
        check_hessian_ladder(s, C=1.0, k=4)
    with pytest.raises(MonitorError):
        check_hessian_ladder(s, C=0.0, k=1)


def test_ladder_holds_on_random_fields():
    rng = np.random.default_rng(0)
    for _ in range(100):
        p = float(rng.choice([3.0, 3.5, 4.0]))
        rm = rng.uniform(0.0, 5.0, (8, 8))
        hess = rng.uniform(0.0, 2.0, (8, 8))
        state, norms, data = _setup(rm=rm, hess=hess, du=0.1)
        s = sample_quantities(state, norms, data, p)
        C = float(rng.uniform(0.1, 10.0))
        for k in ladder_indices(p):
            assert check_hessian_ladder(s, C, k).ok


def test_invariants_catch_a_broken_sample():
    state, norms, data = _setup(rm=2.0, hess=1.0, du=0.5, ric=3.0)
    s = sample_quantities(state, norms, data, 3.0)
    checks = sample_invariants(s, K=1.0, L=0.5)
    assert not checks["ricci_weight"]
    assert checks["holder"]


def test_fit_ratio():
    assert fit_ratio(np.array([0.0, 1.0, 2.0]), np.array([1.0, 1.0, 1.0])) == (2.0, None)
    C, bad = fit_ratio(np.array([0.0, 1.0]), np.array([1.0, 0.0]))
    assert math.isinf(C) and bad == 1
    # lhs below the absolute tolerance never forces a constant
    assert fit_ratio(np.array([1e-12]), np.array([0.0]), scale=1.0) == (0.0, None)


def _series(n=7):
    out = []
    for k in range(n):
        state, norms, data = _setup(rm=2.0, hess=1.0, du=0.5, t=0.1 * k)
        out.append(sample_quantities(state, norms, data, 3.0))
    return out


def test_stationary_series_fits():
    samples = _series()
    for ineq in FITTED_INEQUALITIES:
        report = fit_inequality_constant(ineq, samples, K=1.0, L=0.5)
        assert report.ok, ineq
        assert math.isfinite(report.C_fit)
        assert len(report.times) == len(samples) - 2
    # T1 = 1 against L^2 Vol = 0.25
    assert fit_inequality_constant("hessian_base", samples, 1.0, 0.5).C_fit == pytest.approx(4.0)
    # Tp = 4 against (K + L^2) A1 + Tp
    assert fit_inequality_constant("curvature_growth", samples, 1.0, 0.5).C_fit == pytest.approx(0.0)


def test_fit_needs_five_samples():
    with pytest.raises(MonitorError):
        fit_inequality_constant("hessian_base", _series(4), 1.0, 0.5)
    with pytest.raises(MonitorError):
        fit_inequality_constant("no_such_bound", _series(), 1.0, 0.5)


def test_gamma_constants_by_hand():
    gamma = gamma_constants(K=1.0, L=0.0, T=0.0, p=3.0, rho=1.0, C_in=1.0)
    assert gamma.lambda1 == pytest.approx(1.0, abs=1e-12)
    assert gamma.lambda2 == pytest.approx(1.0, abs=1e-12)
    assert gamma.gamma1 == pytest.approx(1.5, abs=1e-12)
    assert gamma.gamma2 == pytest.approx(2.5, abs=1e-12)
    assert not gamma.overflow


def test_gamma_constants_overflow_is_flagged():
    gamma = gamma_constants(K=10.0, L=1.0, T=100.0, p=3.0, rho=0.1, C_in=10.0)
    assert gamma.overflow
    assert math.isinf(gamma.gamma2)
    with pytest.raises(MonitorError):
        gamma_constants(K=0.0, L=0.0, T=1.0, p=3.0, rho=1.0, C_in=1.0)


def test_assemble_U_on_constant_sample():
    s = _series(1)[0]
    # A1 + K/2 A2 + RicW + K S + K S_tilde with C = K = 1
    assert assemble_U(s, K=1.0, p=3.0, C_in=1.0) == pytest.approx(8.0 + 2.0 + 4.0 + 1.0 + 0.25)


def test_local_lp_bound():
    samples = _series(3)
    loose = GammaConstants(1.0, 0.0, 0.0, gamma1=2.0, gamma2=0.0)
    check = check_local_lp_bound(samples, loose)
    assert check.ok
    assert check.rhs == pytest.approx(16.0)
    assert np.allclose(check.margins, 0.5)
    tight = GammaConstants(1.0, 0.0, 0.0, gamma1=0.5, gamma2=0.0)
    check = check_local_lp_bound(samples, tight)
    assert not check.ok
    assert check.guard_code == "VERIFY_FAIL"
    assert "t=0" in check.reason


def test_normalized_constant_solves_its_equation():
    lhs = np.array([1.0, 3.0, 2.0])
    C = normalized_constant(lhs, 1.0, K=1.0, rho=1.0, p=3.0)
    assert C * math.exp(2.0 * C) == pytest.approx(3.0 / 2.0)
    assert normalized_constant(np.zeros(3), 0.0, 1.0, 1.0, 3.0) == 0.0


def test_normalized_check():
    series = {3.0: (np.array([1.0, 2.0]), np.ones(2)), 4.0: (np.array([1.0, 2.0]), np.ones(2))}
    report = normalized_lp_check(series, K=1.0, rho=1.0)
    assert set(report.constants) == {3.0, 4.0}
    # q = 2 / (1 + K^p) = 1 for both p: C = W(p-1)/(p-1), 0.426 and 0.350
    assert report.constants[3.0] == pytest.approx(0.4263, abs=1e-3)
    assert report.constants[4.0] == pytest.approx(0.3500, abs=1e-3)
    assert report.uniform and 1.0 < report.spread < 1.5
    # the bound reproduces the largest normalized average
    assert report.bounds == pytest.approx({3.0: 2.0, 4.0: 2.0})
    with pytest.raises(MonitorError):
        normalized_lp_check({9.0: (np.ones(2), np.ones(2))}, 1.0, 1.0)
