# rhlab/localization.py
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import product
from typing import Sequence, Tuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from .errors import EmptyBallError, FieldError
from .grid_fields import MetricField, PeriodicGrid, ScalarField, gradient_stack

logger = logging.getLogger(__name__)

# lattice offsets used as graph edges: primitive vectors with |δ|_∞ ≤ radius
STENCIL_RADIUS = {2: 3, 3: 2}
GRADIENT_TOLERANCE = {2: 0.10, 3: 0.15}
MIN_BALL_POINTS = 2


@lru_cache(maxsize=None)
def lattice_offsets(dim: int) -> Tuple[Tuple[int, ...], ...]:
    radius = STENCIL_RADIUS[dim]
    offsets = []
    for delta in product(range(-radius, radius + 1), repeat=dim):
        if any(delta) and math.gcd(*(abs(d) for d in delta)) == 1:
            offsets.append(delta)
    return tuple(offsets)


def geodesic_distance(g0: MetricField, x0: Sequence[int]) -> ScalarField:
    """
    Shortest-path distance from x0 on the periodic lattice graph.
    Edges join each point to its primitive offsets; an edge's length is the
    straight-segment length under the mean of its two endpoint metrics.
    """
    grid = g0.grid
    x0 = grid.wrap(x0)
    shape = grid.shape
    idx = np.indices(shape).reshape(grid.dim, -1)
    src = np.ravel_multi_index(tuple(idx), shape)
    h = np.array(grid.spacing)
    flat_g = g0.components.reshape(grid.dim, grid.dim, -1)
    rows, cols, weights = [], [], []
    for delta in lattice_offsets(grid.dim):
        tgt_idx = tuple((idx[a] + delta[a]) % shape[a] for a in range(grid.dim))
        tgt = np.ravel_multi_index(tgt_idx, shape)
        step = np.asarray(delta, dtype=float) * h
        g_mean = 0.5 * (flat_g + flat_g[:, :, tgt])
        length = np.sqrt(np.einsum("i,ij...,j->...", step, g_mean, step))
        rows.append(src)
        cols.append(tgt)
        weights.append(length)
    graph = coo_matrix(
        (np.concatenate(weights), (np.concatenate(rows), np.concatenate(cols))),
        shape=(grid.size, grid.size),
    ).tocsr()
    source = int(np.ravel_multi_index(x0, shape))
    dist = dijkstra(graph, directed=True, indices=source)
    logger.debug("dijkstra from %s over %d edges", x0, graph.nnz)
    return ScalarField(grid, dist.reshape(shape))


def cutoff(d0: ScalarField, rho: float, K: float) -> ScalarField:
    """φ = ((ρ/√K − d₀)/(ρ/√K))₊"""
    if not (rho > 0 and K > 0):
        raise FieldError(f"cutoff needs rho > 0 and K > 0, got rho={rho}, K={K}")
    r = rho / math.sqrt(K)
    return ScalarField(d0.grid, np.maximum((r - d0.values) / r, 0.0))


@dataclass(frozen=True, eq=False)
class CutoffData:
    x0: Tuple[int, ...]
    rho: float
    K: float
    d0: ScalarField
    phi: ScalarField

    @property
    def radius(self) -> float:
        return self.rho / math.sqrt(self.K)

    @property
    def half_radius(self) -> float:
        return 0.5 * self.radius

    @property
    def quarter_radius(self) -> float:
        return 0.25 * self.radius

    def ball_mask(self, r: float) -> np.ndarray:
        return self.d0.values < r


def build_cutoff(g0: MetricField, x0: Sequence[int], rho: float, K: float) -> CutoffData:
    d0 = geodesic_distance(g0, x0)
    data = CutoffData(x0=g0.grid.wrap(x0), rho=float(rho), K=float(K), d0=d0, phi=cutoff(d0, rho, K))
    if self_overlaps(g0, data.radius):
        logger.warning("ball radius %.4g exceeds half the injectivity radius; the ball wraps the torus",
                       data.radius)
    return data


def _ball_mask(d0: ScalarField, r: float) -> np.ndarray:
    if not r > 0:
        raise EmptyBallError(f"ball radius must be positive, got {r}")
    mask = d0.values < r
    if int(mask.sum()) < MIN_BALL_POINTS:
        raise EmptyBallError(f"ball of radius {r:.4g} contains {int(mask.sum())} lattice point(s)")
    return mask


def ball_integral(f: np.ndarray, g: MetricField, d0: ScalarField, r: float) -> float:
    mask = _ball_mask(d0, r)
    values = np.asarray(f.values if isinstance(f, ScalarField) else f, dtype=float)
    return float(np.sum(np.where(mask, values * g.sqrt_det, 0.0)) * g.grid.cell_volume)


def ball_volume(g: MetricField, d0: ScalarField, r: float) -> float:
    return ball_integral(np.ones(g.grid.shape), g, d0, r)


def cutoff_gradient_norm(phi: ScalarField, g: MetricField) -> np.ndarray:
    """|∇φ|_g with the centered a.e. gradient of the Lipschitz cutoff."""
    dphi = gradient_stack(phi.values, g.grid)
    q = np.einsum("ij...,i...,j...->...", g.inverse, dphi, dphi)
    return np.sqrt(np.maximum(q, 0.0))


@dataclass(frozen=True)
class GradientBound:
    ok: bool
    ratio: float
    tolerance: float


def check_gradient_bound(data: CutoffData, g0: MetricField) -> GradientBound:
    """sup |∇φ|_{g0} against √K/ρ, allowing the lattice anisotropy tolerance."""
    bound = math.sqrt(data.K) / data.rho
    ratio = float(np.max(cutoff_gradient_norm(data.phi, g0))) / bound
    tol = GRADIENT_TOLERANCE[g0.grid.dim]
    return GradientBound(ok=ratio <= 1.0 + tol, ratio=ratio, tolerance=tol)


def volume_ratio_constant(volumes: Sequence[float], horizon: float) -> float:
    """Smallest c ≥ 0 with Vol(t) ≤ e^{cT} Vol(τ) for all sampled t, τ."""
    vols = np.asarray(volumes, dtype=float)
    if vols.size == 0 or not horizon > 0 or np.min(vols) <= 0:
        return 0.0
    return float(math.log(np.max(vols) / np.min(vols)) / horizon)


def injectivity_radius(g0: MetricField) -> float:
    """Half the shortest closed coordinate loop; exact for flat metrics."""
    grid: PeriodicGrid = g0.grid
    loops = []
    for a in range(grid.dim):
        line = np.sqrt(g0.components[a, a]) * grid.spacing[a]
        loops.append(float(np.min(np.sum(line, axis=a))))
    return 0.5 * min(loops)


def self_overlaps(g0: MetricField, radius: float) -> bool:
    return radius > 0.5 * injectivity_radius(g0)
