"""Energy, multiplier, residual functional and related measures.

The constrained problem minimizes
    E(u) = 0.5 * int_G |u'|^2 - (1/p) * int_K |u|^p
over the manifold of squared-L2 mass mu. For u on the manifold the
multiplier lam(u) = (int_K |u|^p - int_G |u'|^2) / mu turns the manifold
gradient into the free functional
    J(u) v = int u'v' - int_K |u|^(p-2) u v + lam(u) int u v,
whose dual norm is the solver's convergence measure. All integrals are
the discrete ones of the mesh module, so J(u)u = 0 holds to rounding and
finite differences of the discrete energy match j_apply exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np
from scipy.sparse.linalg import factorized

from .mesh import (
    GraphFunction,
    Mesh,
    lp_integral,
    nonlinear_load,
    stationarity_residual,
)


class FunctionalDomainError(ValueError):
    """p outside (2, 6), mass constraint violated, or mesh mismatch."""


class DegenerateFunctionError(ValueError):
    """GN ratio requested for a nonzero function with vanishing derivative."""


def _check_p(p: float):
    if not 2.0 < p < 6.0:
        raise FunctionalDomainError(f"p must lie in (2, 6), got {p}")


def _check_same_mesh(u: GraphFunction, v: GraphFunction):
    if u.mesh is not v.mesh:
        raise FunctionalDomainError("functions live on different meshes")


def _check_mass(u: GraphFunction, mu: float, rel_tol: float = 1e-8) -> float:
    m = u.mass()
    if abs(m - mu) > rel_tol * abs(mu):
        raise FunctionalDomainError(
            f"mass constraint violated: mass(u)={m!r} vs mu={mu!r}"
        )
    return m


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float    # 0.5 * int |u'|^2
    potential: float  # (1/p) * int_K |u|^p
    total: float      # kinetic - potential
    mass: float       # int u^2
    lp_core: float    # int_K |u|^p

    def as_dict(self) -> dict:
        return asdict(self)


def energy(u: GraphFunction, p: float) -> EnergyBreakdown:
    """Energy breakdown of a graph function; the |u|^p term is restricted
    to the nonlinear edges."""
    _check_p(p)
    K, M = u.mesh.matrices()
    v = u.values
    kinetic = 0.5 * float(v @ (K @ v))
    lp_core = lp_integral(u.mesh, u.full_values(), p, region="nonlinear")
    potential = lp_core / p
    return EnergyBreakdown(
        kinetic=kinetic,
        potential=potential,
        total=kinetic - potential,
        mass=float(v @ (M @ v)),
        lp_core=lp_core,
    )


def lambda_of(u: GraphFunction, mu: float, p: float) -> float:
    """Multiplier lam(u) = (int_K |u|^p - int |u'|^2) / mu.
    Requires mass(u) = mu to 1e-8 relative."""
    _check_p(p)
    _check_mass(u, mu)
    K, _ = u.mesh.matrices()
    grad_sq = float(u.values @ (K @ u.values))
    return (lp_integral(u.mesh, u.full_values(), p, region="nonlinear") - grad_sq) / mu


def _lambda_intrinsic(u: GraphFunction, p: float) -> float:
    # Divides by the function's own mass instead of the manifold constant,
    # which makes J(u)u = 0 an exact identity for every u, not only on M.
    K, _ = u.mesh.matrices()
    grad_sq = float(u.values @ (K @ u.values))
    m = u.mass()
    if m <= 0:
        raise FunctionalDomainError("multiplier of the zero function")
    return (lp_integral(u.mesh, u.full_values(), p, region="nonlinear") - grad_sq) / m


def j_apply(u: GraphFunction, v: GraphFunction, mu: float, p: float) -> float:
    """J(u)v = int u'v' - int_K |u|^(p-2) u v + lam(u) int u v."""
    _check_p(p)
    _check_same_mesh(u, v)
    K, M = u.mesh.matrices()
    lam = _lambda_intrinsic(u, p)
    cross_kin = float(u.values @ (K @ v.values))
    nl = float(nonlinear_load(u.mesh, u.full_values(), p)[u.mesh.free_nodes] @ v.values)
    return cross_kin - nl + lam * float(u.values @ (M @ v.values))


def j_residual(u: GraphFunction, p: float, lam: float | None = None,
               dtype=np.longdouble) -> np.ndarray:
    """Free-dof vector of J(u), i.e. K u + lam M u - N(u), in `dtype`.
    Defaults lam to the intrinsic multiplier of u."""
    if lam is None:
        lam = _lambda_intrinsic(u, p)
    return stationarity_residual(u.mesh, u, lam, p, dtype=dtype)


def _km_solver(mesh: Mesh):
    solver = getattr(mesh, "_km_factorization", None)
    if solver is None:
        K, M = mesh.matrices()
        solver = factorized((K + M).tocsc())
        mesh._km_factorization = solver
    return solver


def j_dual_norm(u: GraphFunction, mu: float, p: float) -> float:
    """Dual H1 norm of J(u) through its Riesz representative:
    solve (K + M) w = r and return sqrt(r . w)."""
    _check_p(p)
    r = np.asarray(j_residual(u, p), dtype=float)
    w = _km_solver(u.mesh)(r)
    return math.sqrt(max(float(r @ w), 0.0))


def em_dual_norm(u: GraphFunction, mu: float, p: float) -> float:
    """Dual norm of the manifold gradient: J(u) restricted to the
    tangent space {v : int u v = 0}, via the projected Riesz problem
    (two solves with K + M)."""
    _check_p(p)
    _, M = u.mesh.matrices()
    r = np.asarray(j_residual(u, p), dtype=float)
    g = M @ u.values
    solve = _km_solver(u.mesh)
    sr = solve(r)
    sg = solve(g)
    gg = float(g @ sg)
    if gg <= 0:
        raise FunctionalDomainError("projection direction degenerate")
    val = float(r @ sr) - float(g @ sr) ** 2 / gg
    return math.sqrt(max(val, 0.0))


def tangent_project(u: GraphFunction, v: GraphFunction, mu: float) -> GraphFunction:
    """L2-orthogonal projection of v onto the tangent space at u.
    Exactly orthogonal (the projection uses mass(u) itself; the mass is
    still required to match mu to 1e-8)."""
    _check_same_mesh(u, v)
    m = _check_mass(u, mu)
    coeff = u.l2_inner(v) / m
    return GraphFunction(u.mesh, v.values - coeff * u.values)


def gn_check(u: GraphFunction, p: float) -> tuple[float, float]:
    """Gagliardo-Nirenberg data of u: returns
    (||u||_p^p over the whole graph, that value divided by
    ||u||_2^(p/2+1) ||u'||_2^(p/2-1))."""
    if not p >= 2.0:
        raise FunctionalDomainError(f"GN check needs p >= 2, got {p}")
    K, _ = u.mesh.matrices()
    lhs = lp_integral(u.mesh, u.full_values(), p, region="all")
    m = u.mass()
    grad_sq = float(u.values @ (K @ u.values))
    if m <= 0:
        raise DegenerateFunctionError("GN ratio of the zero function")
    if grad_sq <= 0:
        raise DegenerateFunctionError(
            "nonzero function with vanishing derivative: GN ratio undefined "
            "(not square-integrable on a noncompact graph)"
        )
    ratio = lhs / (m ** ((p + 2.0) / 4.0) * grad_sq ** ((p - 2.0) / 4.0))
    return lhs, ratio


def fd_manifold_derivative(u: GraphFunction, v: GraphFunction, mu: float,
                           p: float, eps: float = 1e-5) -> float:
    """Central finite difference of the constrained energy along the
    tangent direction v, moving on the manifold by exact renormalization."""
    _check_same_mesh(u, v)
    up = GraphFunction(u.mesh, u.values + eps * v.values).renormalized(mu)
    um = GraphFunction(u.mesh, u.values - eps * v.values).renormalized(mu)
    return (energy(up, p).total - energy(um, p).total) / (2.0 * eps)


def sublevel_coefficients(p: float, mu: float, gn_constant: float) -> tuple[float, float]:
    """Coefficients (C1, C0) with ||u||_H1^2 <= C1 * E_M(u) + C0 on the
    mass-mu manifold, given a constant gn_constant bounding the GN ratio.

    From the GN bound, E >= 0.5 t^2 - A t^q with t = ||u'||,
    A = gn_constant * mu^((p+2)/4) / p and q = (p-2)/2 < 2. Young's
    inequality gives A t^q <= t^2/4 + B, so t^2 <= 4 E + 4 B and
    ||u||_H1^2 = t^2 + mu <= 4 E + (4 B + mu).
    """
    _check_p(p)
    A = gn_constant * mu ** ((p + 2.0) / 4.0) / p
    q = (p - 2.0) / 2.0
    if A <= 0:
        return 4.0, mu
    t_star = (2.0 * q * A) ** (1.0 / (2.0 - q))
    B = A * t_star ** q - 0.25 * t_star ** 2
    return 4.0, 4.0 * max(B, 0.0) + mu
