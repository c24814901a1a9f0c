#!/usr/bin/env python3
"""
Discrete comparison bound and the Lambda-pair fit.
"""

import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from rhlab.errors import MonitorError
from rhlab.gronwall import ComparisonProblem, comparison_bound, fit_lambdas, verify_comparison

T = np.linspace(0.0, 1.0, 11)


def test_exponential_is_reproduced_exactly():
    U = np.exp(2.0 * T)
    problem = ComparisonProblem(T, U, 2.0, 0.0, np.zeros_like(T))
    assert np.allclose(comparison_bound(problem), U, rtol=1e-12)
    assert verify_comparison(problem).ok


def test_constant_solution():
    ones = np.ones_like(T)
    result = verify_comparison(ComparisonProblem(T, ones, 0.0, 0.0, ones))
    assert result.ok
    assert np.allclose(result.bound, 1.0)
    assert np.allclose(result.margins, 0.0)


def test_linear_growth_from_forcing():
    ones = np.ones_like(T)
    assert verify_comparison(ComparisonProblem(T, T.copy(), 0.0, 1.0, ones)).ok
    result = verify_comparison(ComparisonProblem(T, T.copy(), 0.0, 0.5, ones))
    assert not result.ok
    assert result.guard_code == "VERIFY_FAIL"
    assert "exceeds" in result.reason


def test_overflowing_bound_is_infinite_not_nan():
    U = np.ones_like(T)
    result = verify_comparison(ComparisonProblem(T, U, 1e6, 0.0, U))
    assert result.ok
    assert np.isinf(result.bound[-1])
    assert not np.any(np.isnan(result.margins))


def test_problem_validation():
    with pytest.raises(MonitorError):
        ComparisonProblem(np.array([0.0, 0.0]), np.ones(2), 0.0, 0.0, np.ones(2))
    with pytest.raises(MonitorError):
        ComparisonProblem(T, -np.ones_like(T), 0.0, 0.0, np.ones_like(T))
    with pytest.raises(MonitorError):
        ComparisonProblem(T, np.ones_like(T), -1.0, 0.0, np.ones_like(T))
    with pytest.raises(MonitorError):
        ComparisonProblem(T, np.ones(3), 0.0, 0.0, np.ones_like(T))


def test_fit_lambdas_on_linear_growth():
    fit = fit_lambdas(T, T, np.ones_like(T))
    assert fit.feasible
    assert fit.lambda1 + fit.lambda2 == pytest.approx(1.0, rel=1e-6)
    assert verify_comparison(ComparisonProblem(T, T.copy(), fit.lambda1, fit.lambda2, np.ones_like(T))).ok


def test_fit_lambdas_on_exponential():
    U = np.exp(2.0 * T)
    fit = fit_lambdas(T, U, np.zeros_like(T))
    assert fit.feasible
    assert fit.lambda2 == 0.0 or fit.lambda2 < 1e-6
    assert verify_comparison(ComparisonProblem(T, U, fit.lambda1, fit.lambda2, np.zeros_like(T))).ok


def test_fit_lambdas_without_growth():
    fit = fit_lambdas(T, np.ones_like(T), np.ones_like(T))
    assert (fit.lambda1, fit.lambda2, fit.feasible) == (0.0, 0.0, True)


def test_growth_from_nothing_is_infeasible():
    times = np.array([0.0, 1.0, 2.0, 3.0])
    fit = fit_lambdas(times, np.array([0.0, 0.0, 0.0, 1.0]), np.zeros(4))
    assert not fit.feasible
    assert fit.guard_code == "INFEASIBLE"
    assert "t=2" in fit.reason
    assert math.isinf(fit.lambda1)
    with pytest.raises(MonitorError):
        fit_lambdas(times[:2], np.ones(2), np.ones(2))
