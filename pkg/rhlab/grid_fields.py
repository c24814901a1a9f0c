# rhlab/grid_fields.py
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Sequence, Tuple, Union

import numpy as np

from .errors import FieldError, GridError, MetricNotSPDError

logger = logging.getLogger(__name__)

MIN_RESOLUTION = 8
SYMMETRY_RTOL = 1e-12


class Slot(str, Enum):
    COVARIANT = "co"
    CONTRAVARIANT = "contra"


@dataclass(frozen=True)
class PeriodicGrid:
    """
    Coordinate lattice on the flat n-torus.
    Point i along axis a sits at x_a = i * h_a; indices wrap modulo N_a.
    """

    dim: int
    extents: Tuple[float, ...]
    resolutions: Tuple[int, ...]

    def __post_init__(self) -> None:
        if self.dim not in (2, 3):
            raise GridError(f"dim must be 2 or 3, got {self.dim}")
        if len(self.extents) != self.dim or len(self.resolutions) != self.dim:
            raise GridError("extents and resolutions need one entry per axis")
        if any(not np.isfinite(L) or L <= 0 for L in self.extents):
            raise GridError(f"extents must be positive, got {self.extents}")
        if any(int(N) != N or N < MIN_RESOLUTION for N in self.resolutions):
            raise GridError(f"resolution below minimum {MIN_RESOLUTION}: {self.resolutions}")

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(int(N) for N in self.resolutions)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def spacing(self) -> Tuple[float, ...]:
        return tuple(L / N for L, N in zip(self.extents, self.resolutions))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axis_coordinates(self, axis: int) -> np.ndarray:
        return np.arange(self.resolutions[axis]) * self.spacing[axis]

    def coordinates(self) -> Tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*(self.axis_coordinates(a) for a in range(self.dim)), indexing="ij"))

    def wrap(self, index: Sequence[int]) -> Tuple[int, ...]:
        return tuple(int(i) % N for i, N in zip(index, self.shape))


def build_grid(dim: int, extents: Sequence[float], resolutions: Sequence[int]) -> PeriodicGrid:
    grid = PeriodicGrid(dim=int(dim), extents=tuple(float(L) for L in extents),
                        resolutions=tuple(int(N) for N in resolutions))
    logger.debug("grid dim=%d shape=%s spacing=%s", grid.dim, grid.shape, grid.spacing)
    return grid


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: PeriodicGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise FieldError(f"scalar shape {values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise FieldError("scalar field has non-finite values")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True, eq=False)
class TensorField:
    """
    Components are stored component-axes first: shape (n,)*rank + grid.shape.
    symmetric_pairs lists slot pairs that must be stored symmetric.
    """

    grid: PeriodicGrid
    components: np.ndarray
    variance: Tuple[Slot, ...]
    symmetric_pairs: Tuple[Tuple[int, int], ...] = field(default=())

    def __post_init__(self) -> None:
        comps = np.asarray(self.components, dtype=float)
        n = self.grid.dim
        expected = (n,) * len(self.variance) + self.grid.shape
        if comps.shape != expected:
            raise FieldError(f"tensor shape {comps.shape}, expected {expected}")
        if not np.all(np.isfinite(comps)):
            raise FieldError("tensor field has non-finite components")
        scale = max(float(np.max(np.abs(comps))) if comps.size else 0.0, 1e-300)
        for a, b in self.symmetric_pairs:
            asym = float(np.max(np.abs(comps - np.swapaxes(comps, a, b))))
            if asym > SYMMETRY_RTOL * scale:
                raise FieldError(f"slots ({a},{b}) not symmetric: residual {asym:.3e}")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "variance", tuple(Slot(v) for v in self.variance))

    @property
    def rank(self) -> int:
        return len(self.variance)


@dataclass(frozen=True, eq=False)
class MetricField(TensorField):
    """Symmetric positive-definite covariant 2-tensor; checked on every construction."""

    variance: Tuple[Slot, ...] = (Slot.COVARIANT, Slot.COVARIANT)
    symmetric_pairs: Tuple[Tuple[int, int], ...] = ((0, 1),)

    def __post_init__(self) -> None:
        super().__post_init__()
        eig = self.eigenvalues
        worst = np.unravel_index(int(np.argmin(eig[..., 0])), self.grid.shape)
        if not eig[worst + (0,)] > 0.0:
            raise MetricNotSPDError(
                f"metric not positive-definite at {tuple(int(i) for i in worst)}: "
                f"smallest eigenvalue {eig[worst + (0,)]:.3e}",
                index=tuple(int(i) for i in worst),
            )

    @classmethod
    def from_components(cls, grid: PeriodicGrid, components: np.ndarray) -> "MetricField":
        comps = np.asarray(components, dtype=float)
        # drop round-off asymmetry before the strict check
        comps = 0.5 * (comps + np.swapaxes(comps, 0, 1))
        return cls(grid=grid, components=comps)

    @cached_property
    def pointwise(self) -> np.ndarray:
        """Components as grid.shape + (n, n), for numpy.linalg."""
        return np.moveaxis(self.components, (0, 1), (-2, -1))

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.pointwise)

    @cached_property
    def inverse(self) -> np.ndarray:
        inv = np.linalg.inv(self.pointwise)
        inv = 0.5 * (inv + np.swapaxes(inv, -1, -2))
        return np.moveaxis(inv, (-2, -1), (0, 1))

    @cached_property
    def det(self) -> np.ndarray:
        return np.linalg.det(self.pointwise)

    @cached_property
    def sqrt_det(self) -> np.ndarray:
        return np.sqrt(self.det)


def flat_metric(grid: PeriodicGrid, scale: float = 1.0) -> MetricField:
    comps = np.zeros((grid.dim, grid.dim) + grid.shape)
    for a in range(grid.dim):
        comps[a, a] = scale
    return MetricField.from_components(grid, comps)


# ---------------------------------------------------------------------------
# stencils (component axes first, `lead` of them, then the lattice axes)

def diff(values: np.ndarray, axis: int, grid: PeriodicGrid, lead: int = 0) -> np.ndarray:
    """Second-order centered first derivative with periodic wrap."""
    if not 0 <= axis < grid.dim:
        raise GridError(f"axis {axis} out of range for dim {grid.dim}")
    ax = lead + axis
    h = grid.spacing[axis]
    return (np.roll(values, -1, axis=ax) - np.roll(values, 1, axis=ax)) / (2.0 * h)


def second_diff(values: np.ndarray, i: int, j: int, grid: PeriodicGrid, lead: int = 0) -> np.ndarray:
    """d_i d_j: compact 3-point stencil on the diagonal, composed centered stencils off it."""
    if i == j:
        ax = lead + i
        h = grid.spacing[i]
        return (np.roll(values, -1, axis=ax) - 2.0 * values + np.roll(values, 1, axis=ax)) / (h * h)
    return diff(diff(values, j, grid, lead), i, grid, lead)


def gradient_stack(values: np.ndarray, grid: PeriodicGrid, lead: int = 0) -> np.ndarray:
    """All first derivatives, new derivative axis in front."""
    return np.stack([diff(values, a, grid, lead) for a in range(grid.dim)])


def hessian_stack(values: np.ndarray, grid: PeriodicGrid, lead: int = 0) -> np.ndarray:
    n = grid.dim
    out = np.empty((n, n) + values.shape)
    for i in range(n):
        for j in range(i, n):
            out[i, j] = second_diff(values, i, j, grid, lead)
            if j != i:
                out[j, i] = out[i, j]
    return out


FieldLike = Union[ScalarField, TensorField]


def partial_derivative(f: FieldLike, axis: int) -> FieldLike:
    if isinstance(f, ScalarField):
        return ScalarField(f.grid, diff(f.values, axis, f.grid))
    if isinstance(f, TensorField):
        comps = diff(f.components, axis, f.grid, lead=f.rank)
        return TensorField(f.grid, comps, f.variance, f.symmetric_pairs)
    raise FieldError(f"cannot differentiate {type(f).__name__}")


def integrate(f: Union[ScalarField, np.ndarray], g: MetricField) -> float:
    """Periodic midpoint rule against dV_g = sqrt(det g) dx."""
    if isinstance(f, ScalarField):
        if f.grid != g.grid:
            raise GridError("integrand and metric live on different grids")
        values = f.values
    else:
        values = np.asarray(f, dtype=float)
        if values.shape != g.grid.shape:
            raise GridError(f"integrand shape {values.shape} does not match grid {g.grid.shape}")
    return float(np.sum(values * g.sqrt_det) * g.grid.cell_volume)
