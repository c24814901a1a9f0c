# rhlab/curvature.py
"""
Discrete Riemannian tensor calculus on the periodic lattice.

Conventions (the only place they are stated):
  Gamma[k, i, j]  = Γ^k_{ij} = ½ g^{kl}(∂_i g_{jl} + ∂_j g_{il} − ∂_l g_{ij})
  Rm[i, j, k, l]  = R_{ijkl} = g_{lm}(∂_iΓ^m_{jk} − ∂_jΓ^m_{ik} + Γ^m_{ip}Γ^p_{jk} − Γ^m_{jp}Γ^p_{ik})
  Ric[j, k]       = g^{il} R_{ijkl}       (positive on the round sphere)
  R               = g^{jk} Ric_{jk}
With these, a surface of Gauss curvature K has R_{xyyx} = K det g.

Rm is evaluated in its second-derivative form
  R_{ijkl} = ½(∂_i∂_k g_jl + ∂_j∂_l g_ik − ∂_i∂_l g_jk − ∂_j∂_k g_il)
             + Γ_{m,jl}Γ^m_{ik} − Γ_{m,il}Γ^m_{jk}
which equals the expression above in the continuum; the discrete difference
operators commute, so every algebraic symmetry of Rm holds to round-off.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple, Union

import numpy as np
import sympy as sp

from .errors import FieldError
from .grid_fields import (
    MetricField,
    PeriodicGrid,
    ScalarField,
    Slot,
    TensorField,
    diff,
    gradient_stack,
    hessian_stack,
)

logger = logging.getLogger(__name__)

_LETTERS = "abcdefghijklmnopqrstuvw"
X = sp.Symbol("x", real=True)

Profile = Union[str, float, int, sp.Expr]


# ---------------------------------------------------------------------------
# core operators

def _lower_christoffel(g: MetricField) -> np.ndarray:
    """Γ_{l,ij} = ½(∂_i g_jl + ∂_j g_il − ∂_l g_ij), indexed [l, i, j]."""
    dg = gradient_stack(g.components, g.grid, lead=2)  # dg[a, b, c] = ∂_a g_bc
    first = np.einsum("ijl...->lij...", dg)
    second = np.einsum("jil...->lij...", dg)
    return 0.5 * (first + second - dg)


def christoffel(g: MetricField) -> TensorField:
    lower = _lower_christoffel(g)
    gamma = np.einsum("kl...,lij...->kij...", g.inverse, lower)
    gamma = 0.5 * (gamma + np.swapaxes(gamma, 1, 2))
    return TensorField(g.grid, gamma, (Slot.CONTRAVARIANT, Slot.COVARIANT, Slot.COVARIANT), ((1, 2),))


def riemann(g: MetricField, gamma: TensorField) -> TensorField:
    H = hessian_stack(g.components, g.grid, lead=2)  # H[a, b, c, d] = ∂_a∂_b g_cd
    second = 0.5 * (
        np.einsum("ikjl...->ijkl...", H)
        + np.einsum("jlik...->ijkl...", H)
        - np.einsum("iljk...->ijkl...", H)
        - np.einsum("jkil...->ijkl...", H)
    )
    lower = np.einsum("lm...,mij...->lij...", g.components, gamma.components)
    quad = (
        np.einsum("mjl...,mik...->ijkl...", lower, gamma.components)
        - np.einsum("mil...,mjk...->ijkl...", lower, gamma.components)
    )
    co = (Slot.COVARIANT,) * 4
    return TensorField(g.grid, second + quad, co)


def ricci(rm: TensorField, g: MetricField) -> TensorField:
    ric = np.einsum("il...,ijkl...->jk...", g.inverse, rm.components)
    ric = 0.5 * (ric + np.swapaxes(ric, 0, 1))
    return TensorField(g.grid, ric, (Slot.COVARIANT, Slot.COVARIANT), ((0, 1),))


def scalar_curvature(ric: TensorField, g: MetricField) -> ScalarField:
    return ScalarField(g.grid, np.einsum("jk...,jk...->...", g.inverse, ric.components))


def covariant_derivative(T: TensorField, gamma: TensorField) -> TensorField:
    """(∇T)[a, i1..ir]: derivative slot first."""
    r = T.rank
    grid = T.grid
    out = gradient_stack(T.components, grid, lead=r)
    idx = _LETTERS[1:1 + r]
    target = "a" + idx
    for s, kind in enumerate(T.variance):
        swapped = idx[:s] + "z" + idx[s + 1:]
        if kind is Slot.COVARIANT:
            out = out - np.einsum(f"za{idx[s]}...,{swapped}...->{target}...", gamma.components, T.components)
        else:
            out = out + np.einsum(f"{idx[s]}az...,{swapped}...->{target}...", gamma.components, T.components)
    pairs = tuple((a + 1, b + 1) for a, b in T.symmetric_pairs)
    return TensorField(grid, out, (Slot.COVARIANT,) + T.variance, pairs)


def hessian(u: ScalarField, gamma: TensorField) -> TensorField:
    grid = u.grid
    du = gradient_stack(u.values, grid)
    hess = hessian_stack(u.values, grid) - np.einsum("kij...,k...->ij...", gamma.components, du)
    hess = 0.5 * (hess + np.swapaxes(hess, 0, 1))
    return TensorField(grid, hess, (Slot.COVARIANT, Slot.COVARIANT), ((0, 1),))


def laplacian(u: ScalarField, g: MetricField, gamma: TensorField) -> ScalarField:
    hess = hessian(u, gamma)
    return ScalarField(g.grid, np.einsum("ij...,ij...->...", g.inverse, hess.components))


def gradient(u: ScalarField) -> TensorField:
    return TensorField(u.grid, gradient_stack(u.values, u.grid), (Slot.COVARIANT,))


def _contract_slot(M: np.ndarray, comps: np.ndarray, slot: int, rank: int) -> np.ndarray:
    idx = _LETTERS[:rank]
    out = idx[:slot] + "z" + idx[slot + 1:]
    return np.einsum(f"z{idx[slot]}...,{idx}...->{out}...", M, comps)


def norm_squared(T: TensorField, g: MetricField) -> np.ndarray:
    dual = T.components
    for s, kind in enumerate(T.variance):
        M = g.inverse if kind is Slot.COVARIANT else g.components
        dual = _contract_slot(M, dual, s, T.rank)
    axes = tuple(range(T.rank))
    return np.sum(T.components * dual, axis=axes)


def tensor_norm(T: TensorField, g: MetricField) -> ScalarField:
    return ScalarField(g.grid, np.sqrt(np.maximum(norm_squared(T, g), 0.0)))


# ---------------------------------------------------------------------------
# packs

@dataclass(frozen=True, eq=False)
class PointwiseNorms:
    """The scalar fields every monitor integral is built from."""

    grid: PeriodicGrid
    rm: np.ndarray
    ric: np.ndarray
    nabla_rm: np.ndarray
    nabla_ric: np.ndarray
    du: np.ndarray
    hess_u: np.ndarray
    scalar: np.ndarray
    lap_u: np.ndarray


@dataclass(frozen=True, eq=False)
class CurvaturePack:
    gamma: TensorField
    rm: TensorField
    ric: TensorField
    scalar: ScalarField
    nabla_ric: TensorField
    nabla_rm: TensorField
    du: TensorField
    hess_u: TensorField
    lap_u: ScalarField
    rm_norm: ScalarField
    ric_norm: ScalarField
    nabla_rm_norm: ScalarField
    nabla_ric_norm: ScalarField
    du_norm: ScalarField
    hess_u_norm: ScalarField

    def norms(self) -> PointwiseNorms:
        return PointwiseNorms(
            grid=self.scalar.grid,
            rm=self.rm_norm.values,
            ric=self.ric_norm.values,
            nabla_rm=self.nabla_rm_norm.values,
            nabla_ric=self.nabla_ric_norm.values,
            du=self.du_norm.values,
            hess_u=self.hess_u_norm.values,
            scalar=self.scalar.values,
            lap_u=self.lap_u.values,
        )


def curvature_pack(g: MetricField, u: ScalarField) -> CurvaturePack:
    gamma = christoffel(g)
    rm = riemann(g, gamma)
    ric = ricci(rm, g)
    R = scalar_curvature(ric, g)
    nabla_ric = covariant_derivative(ric, gamma)
    nabla_rm = covariant_derivative(rm, gamma)
    du = gradient(u)
    hess = hessian(u, gamma)
    lap = ScalarField(g.grid, np.einsum("ij...,ij...->...", g.inverse, hess.components))
    return CurvaturePack(
        gamma=gamma, rm=rm, ric=ric, scalar=R, nabla_ric=nabla_ric, nabla_rm=nabla_rm,
        du=du, hess_u=hess, lap_u=lap,
        rm_norm=tensor_norm(rm, g),
        ric_norm=tensor_norm(ric, g),
        nabla_rm_norm=tensor_norm(nabla_rm, g),
        nabla_ric_norm=tensor_norm(nabla_ric, g),
        du_norm=tensor_norm(du, g),
        hess_u_norm=tensor_norm(hess, g),
    )


def symmetry_residuals(rm: TensorField) -> Dict[str, float]:
    """Relative residuals of the algebraic Riemann symmetries."""
    R = rm.components
    scale = max(float(np.max(np.abs(R))), 1e-300)
    bianchi = R + np.einsum("jkil...->ijkl...", R) + np.einsum("kijl...->ijkl...", R)
    return {
        "first_pair": float(np.max(np.abs(R + np.swapaxes(R, 0, 1)))) / scale,
        "last_pair": float(np.max(np.abs(R + np.swapaxes(R, 2, 3)))) / scale,
        "pair_exchange": float(np.max(np.abs(R - np.einsum("klij...->ijkl...", R)))) / scale,
        "first_bianchi": float(np.max(np.abs(bianchi))) / scale,
    }


def contracted_bianchi_residual(pack: CurvaturePack, g: MetricField) -> float:
    """sup |div Ric − ½∇R|_g."""
    div = np.einsum("aj...,ajk...->k...", g.inverse, pack.nabla_ric.components)
    res = div - 0.5 * gradient_stack(pack.scalar.values, g.grid)
    q = np.einsum("kl...,k...,l...->...", g.inverse, res, res)
    return float(np.sqrt(np.max(np.maximum(q, 0.0))))


# ---------------------------------------------------------------------------
# closed-form oracles and symmetric initial metrics

def profile_expression(profile: Profile) -> sp.Expr:
    expr = sp.sympify(profile, locals={"x": X})
    extra = expr.free_symbols - {X}
    if extra:
        raise FieldError(f"profile {profile!r} depends on {sorted(map(str, extra))}; only x is allowed")
    return expr


def _numeric(expr: sp.Expr) -> Callable[[np.ndarray], np.ndarray]:
    fn = sp.lambdify(X, expr, modules="numpy")

    def evaluate(x: np.ndarray) -> np.ndarray:
        return np.broadcast_to(np.asarray(fn(x), dtype=float), x.shape).copy()

    return evaluate


def evaluate_profile(profile: Profile, grid: PeriodicGrid, derivative: int = 0) -> np.ndarray:
    expr = profile_expression(profile)
    if derivative:
        expr = sp.diff(expr, X, derivative)
    return _numeric(expr)(grid.coordinates()[0])


def _positive_profile(profile: Profile, grid: PeriodicGrid, name: str) -> np.ndarray:
    values = evaluate_profile(profile, grid)
    if not np.all(values > 0):
        raise FieldError(f"profile {name} = {profile!r} is not positive on the grid")
    return values


@dataclass(frozen=True, eq=False)
class WarpedOracle:
    sectional: Dict[str, np.ndarray]
    ricci: np.ndarray
    scalar: np.ndarray

    @property
    def gauss(self) -> np.ndarray:
        return self.sectional["xy"]


def reduced_warped_curvature(grid: PeriodicGrid, a: Profile, b: Profile,
                             c: Optional[Profile] = None) -> WarpedOracle:
    """
    Closed-form curvature of a²dx² + b²dy² (+ c²dz²), all profiles in x,
    evaluated symbolically and then sampled on the lattice.
    """
    for name, prof in (("a", a), ("b", b)) + ((("c", c),) if c is not None else ()):
        _positive_profile(prof, grid, name)
    ea, eb = profile_expression(a), profile_expression(b)
    b_s = sp.diff(eb, X) / ea
    b_ss = sp.diff(b_s, X) / ea
    xs = grid.coordinates()[0]
    n = grid.dim
    ric = np.zeros((n, n) + grid.shape)
    if n == 2:
        K = _numeric(-b_ss / eb)(xs)
        ric[0, 0] = _numeric(ea ** 2)(xs) * K
        ric[1, 1] = _numeric(eb ** 2)(xs) * K
        return WarpedOracle(sectional={"xy": K}, ricci=ric, scalar=2.0 * K)
    if c is None:
        raise FieldError("three-dimensional warped oracle needs a c profile")
    ec = profile_expression(c)
    c_s = sp.diff(ec, X) / ea
    c_ss = sp.diff(c_s, X) / ea
    k_xy = _numeric(-b_ss / eb)(xs)
    k_xz = _numeric(-c_ss / ec)(xs)
    k_yz = _numeric(-b_s * c_s / (eb * ec))(xs)
    ric[0, 0] = _numeric(ea ** 2)(xs) * (k_xy + k_xz)
    ric[1, 1] = _numeric(eb ** 2)(xs) * (k_xy + k_yz)
    ric[2, 2] = _numeric(ec ** 2)(xs) * (k_xz + k_yz)
    return WarpedOracle(sectional={"xy": k_xy, "xz": k_xz, "yz": k_yz}, ricci=ric,
                        scalar=2.0 * (k_xy + k_xz + k_yz))


def conformal_gauss_curvature(grid: PeriodicGrid, v: Profile) -> np.ndarray:
    """K = −e^{−2v} v'' for e^{2v}(dx² + dy²) with v = v(x)."""
    ev = profile_expression(v)
    return _numeric(-sp.exp(-2 * ev) * sp.diff(ev, X, 2))(grid.coordinates()[0])


def warped_metric(grid: PeriodicGrid, a: Profile, b: Profile, c: Optional[Profile] = None) -> MetricField:
    comps = np.zeros((grid.dim, grid.dim) + grid.shape)
    comps[0, 0] = _positive_profile(a, grid, "a") ** 2
    comps[1, 1] = _positive_profile(b, grid, "b") ** 2
    if grid.dim == 3:
        comps[2, 2] = _positive_profile(c if c is not None else 1, grid, "c") ** 2
    return MetricField.from_components(grid, comps)


def conformal_metric(grid: PeriodicGrid, v: Profile) -> MetricField:
    factor = np.exp(2.0 * evaluate_profile(v, grid))
    comps = np.zeros((grid.dim, grid.dim) + grid.shape)
    for k in range(grid.dim):
        comps[k, k] = factor
    return MetricField.from_components(grid, comps)


def scalar_from_profile(grid: PeriodicGrid, profile: Profile) -> ScalarField:
    return ScalarField(grid, evaluate_profile(profile, grid))
