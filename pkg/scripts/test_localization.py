#!/usr/bin/env python3
"""
Lattice geodesic distance, the cutoff and ball integrals.
"""

import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from rhlab.errors import EmptyBallError, FieldError
from rhlab.grid_fields import build_grid, flat_metric
from rhlab.localization import (
    ball_integral,
    ball_volume,
    build_cutoff,
    check_gradient_bound,
    cutoff,
    geodesic_distance,
    injectivity_radius,
    lattice_offsets,
    self_overlaps,
    volume_ratio_constant,
)


def _flat(N: int, dim: int = 2):
    return flat_metric(build_grid(dim, [2 * math.pi] * dim, [N] * dim))


def test_lattice_offsets_are_primitive():
    assert len(lattice_offsets(2)) == 32
    assert len(lattice_offsets(3)) == 98
    assert (2, 0) not in lattice_offsets(2)
    assert (2, 3) in lattice_offsets(2)


def test_flat_distances():
    g = _flat(16)
    h = 2 * math.pi / 16
    d = geodesic_distance(g, (0, 0)).values
    assert d[0, 0] == 0.0
    assert d[4, 0] == pytest.approx(4 * h)
    assert d[15, 0] == pytest.approx(h)  # periodic wrap
    assert d[3, 4] == pytest.approx(5 * h, rel=0.01)
    assert d[3, 4] >= 5 * h * (1 - 1e-12)


def test_distance_scales_with_metric():
    d1 = geodesic_distance(_flat(16), (2, 3)).values
    grid = build_grid(2, [2 * math.pi] * 2, [16, 16])
    d4 = geodesic_distance(flat_metric(grid, 4.0), (2, 3)).values
    assert np.allclose(d4, 2.0 * d1)


def test_cutoff_shape():
    g = _flat(32)
    data = build_cutoff(g, (5, 7), rho=1.5, K=1.0)
    phi = data.phi.values
    assert phi[5, 7] == 1.0
    assert np.all((phi >= 0.0) & (phi <= 1.0))
    assert np.all(phi[data.d0.values >= data.radius] == 0.0)
    assert data.half_radius == pytest.approx(0.75)
    assert data.quarter_radius == pytest.approx(0.375)
    assert not self_overlaps(g, data.radius)


def test_cutoff_rejects_non_positive_constants():
    d0 = geodesic_distance(_flat(8), (0, 0))
    with pytest.raises(FieldError):
        cutoff(d0, 0.0, 1.0)
    with pytest.raises(FieldError):
        cutoff(d0, 1.0, 0.0)


def test_cutoff_gradient_bound_on_flat_torus():
    g = _flat(32)
    bound = check_gradient_bound(build_cutoff(g, (0, 0), rho=1.5, K=1.0), g)
    assert bound.ok
    assert bound.ratio >= 0.9
    assert bound.tolerance == 0.10


def test_ball_integrals():
    g = _flat(32)
    d0 = geodesic_distance(g, (0, 0))
    total = ball_volume(g, d0, 100.0)
    assert total == pytest.approx(4 * math.pi ** 2)
    disc = ball_volume(g, d0, 1.0)
    assert disc == pytest.approx(math.pi, rel=0.15)
    assert ball_integral(np.full(g.grid.shape, 2.0), g, d0, 1.0) == pytest.approx(2 * disc)


def test_tiny_ball_is_empty():
    g = _flat(16)
    d0 = geodesic_distance(g, (0, 0))
    with pytest.raises(EmptyBallError):
        ball_volume(g, d0, 1e-6)
    with pytest.raises(EmptyBallError):
        ball_volume(g, d0, 0.0)


def test_injectivity_and_volume_ratio():
    assert injectivity_radius(_flat(16)) == pytest.approx(math.pi)
    assert self_overlaps(_flat(16), 2.0)
    assert volume_ratio_constant([1.0, math.e, 2.0], 1.0) == pytest.approx(1.0)
    assert volume_ratio_constant([], 1.0) == 0.0
