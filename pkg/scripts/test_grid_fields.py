#!/usr/bin/env python3
"""
Lattice, field containers and periodic stencils.
"""

import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from rhlab.errors import FieldError, GridError, MetricNotSPDError
from rhlab.grid_fields import (
    MetricField,
    ScalarField,
    Slot,
    TensorField,
    build_grid,
    diff,
    flat_metric,
    hessian_stack,
    integrate,
    partial_derivative,
)


def _torus(N: int, dim: int = 2):
    return build_grid(dim, [2 * math.pi] * dim, [N] * dim)


def test_grid_geometry():
    grid = build_grid(2, [2 * math.pi, math.pi], [16, 8])
    assert grid.shape == (16, 8)
    assert grid.size == 128
    assert grid.spacing == pytest.approx((2 * math.pi / 16, math.pi / 8))
    assert grid.wrap((-1, 9)) == (15, 1)


def test_grid_rejects_bad_input():
    with pytest.raises(GridError):
        build_grid(4, [1.0] * 4, [8] * 4)
    with pytest.raises(GridError):
        build_grid(2, [1.0, 1.0], [4, 8])
    with pytest.raises(GridError):
        build_grid(2, [1.0, -1.0], [8, 8])


def test_scalar_field_rejects_nan_and_wrong_shape():
    grid = _torus(8)
    with pytest.raises(FieldError):
        ScalarField(grid, np.full(grid.shape, np.nan))
    with pytest.raises(FieldError):
        ScalarField(grid, np.zeros((8, 9)))


def test_metric_must_be_spd():
    grid = _torus(8)
    comps = flat_metric(grid).components.copy()
    comps[0, 0, 3, 5] = -1.0
    with pytest.raises(MetricNotSPDError) as info:
        MetricField.from_components(grid, comps)
    assert info.value.index == (3, 5)


def test_tensor_symmetry_is_enforced():
    grid = _torus(8)
    comps = np.zeros((2, 2) + grid.shape)
    comps[0, 1] = 1.0
    with pytest.raises(FieldError):
        TensorField(grid, comps, (Slot.COVARIANT, Slot.COVARIANT), ((0, 1),))


def test_centered_difference_is_second_order():
    errors = []
    for N in (32, 64):
        grid = _torus(N)
        x = grid.coordinates()[0]
        errors.append(float(np.max(np.abs(diff(np.sin(x), 0, grid) - np.cos(x)))))
    assert 3.5 < errors[0] / errors[1] < 4.5


def test_hessian_stack_is_symmetric_and_exact_on_constants():
    grid = _torus(16)
    x, y = grid.coordinates()
    H = hessian_stack(np.sin(x) * np.cos(y), grid)
    assert np.array_equal(H[0, 1], H[1, 0])
    assert np.max(np.abs(hessian_stack(np.full(grid.shape, 3.0), grid))) == 0.0


def test_partial_derivative_keeps_tensor_layout():
    grid = _torus(16)
    g = flat_metric(grid)
    dg = partial_derivative(g, 1)
    assert isinstance(dg, TensorField)
    assert dg.components.shape == g.components.shape
    assert np.max(np.abs(dg.components)) == 0.0


def test_integrate_volume_of_scaled_torus():
    grid = _torus(16)
    assert integrate(np.ones(grid.shape), flat_metric(grid)) == pytest.approx(4 * math.pi ** 2, rel=1e-12)
    # scale 4 doubles both lengths
    assert integrate(np.ones(grid.shape), flat_metric(grid, 4.0)) == pytest.approx(16 * math.pi ** 2, rel=1e-12)


def test_integrate_rejects_mismatched_grids():
    g = flat_metric(_torus(16))
    with pytest.raises(GridError):
        integrate(ScalarField(_torus(8), np.ones((8, 8))), g)


def test_derivatives_integrate_to_zero_on_the_torus():
    rng = np.random.default_rng(3)
    for dim, N in ((2, 24), (3, 10)):
        grid = _torus(N, dim)
        g0 = flat_metric(grid)
        f = ScalarField(grid, rng.standard_normal(grid.shape))
        for axis in range(dim):
            assert abs(integrate(partial_derivative(f, axis), g0)) < 1e-10
