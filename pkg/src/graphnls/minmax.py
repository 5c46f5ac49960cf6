"""Genus-k seed families of cut-off solitons and min-max level bounds.

The k-th seed family places k mass-(mu/k) cut-off solitons in disjoint
slots of the compact core (by default k equal slices of the longest
nonlinear edge) and maps the unit sphere of R^k into the mass-mu
manifold by
    h(theta) = sqrt(k) * sum_j theta_j psi_j.
Slot disic jointness makes the map isometric in mass, keeps the kinetic
term theta-independent and bounds the energy by
    E(h(theta)) <= k * (soliton level at mu/k + certified gap),
which yields the per-level upper bounds reported here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from .graphs import MetricGraph
from .mesh import GAUSS_W, GAUSS_X, GraphFunction, Mesh
from . import soliton as sol


class MinmaxError(ValueError):
    pass


def sphere_min_pnorm(k: int, p: float) -> float:
    """min over the unit sphere of sum |theta_j|^p, equal to k^(1-p/2)."""
    if k < 1:
        raise MinmaxError(f"k must be >= 1, got {k}")
    if p < 2:
        raise MinmaxError(f"p must be >= 2, got {p}")
    return float(k) ** (1.0 - 0.5 * p)


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def sphere_samples(k: int, n: int, seed: int = 0) -> np.ndarray:
    """`n` well-spread points on the unit sphere of R^k.

    Deterministic low-discrepancy constructions up to k = 4 (golden-angle
    circle, Fibonacci sphere, Halton points pushed through the Gaussian
    map); seeded random directions beyond.
    """
    if k < 1:
        raise MinmaxError(f"k must be >= 1, got {k}")
    if k == 1:
        return np.array([[1.0], [-1.0]])[: max(1, min(n, 2))]
    if k == 2:
        ang = 2.0 * math.pi * ((np.arange(n) * _GOLDEN) % 1.0)
        return np.column_stack([np.cos(ang), np.sin(ang)])
    if k == 3:
        i = np.arange(n)
        z = 1.0 - (2.0 * i + 1.0) / n
        r = np.sqrt(np.maximum(1.0 - z * z, 0.0))
        ang = 2.0 * math.pi * ((i * _GOLDEN) % 1.0)
        pts = np.column_stack([r * np.cos(ang), r * np.sin(ang), z])
    elif k == 4:
        sampler = qmc.Halton(d=k, scramble=False)
        sampler.fast_forward(1)  # skip the all-zero first point
        pts = ndtri(sampler.random(n))
    else:
        pts = np.random.default_rng(seed).standard_normal((n, k))
    norms = np.linalg.norm(pts, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return pts / norms


def _nonlinear_edges_by_length(g: MetricGraph):
    edges = [e for e in g.bounded_edges if e.nonlinear]
    if not edges:
        raise MinmaxError("no nonlinear bounded edge to host the seed family")
    return sorted(edges, key=lambda e: (-e.length, e.id))


def _resolve_placement(g: MetricGraph, k: int, placement):
    """Slots (edge_id, offset, length), pairwise disjoint in the graph."""
    if placement == "longest-edge":
        e = _nonlinear_edges_by_length(g)[0]
        ell = e.length / k
        return tuple((e.id, j * ell, ell) for j in range(k))
    if placement == "multi-edge":
        edges = _nonlinear_edges_by_length(g)
        if len(edges) < k:
            raise MinmaxError(
                f"multi-edge placement needs {k} nonlinear edges, found {len(edges)}"
            )
        return tuple((e.id, 0.0, e.length) for e in edges[:k])
    if isinstance(placement, (list, tuple)):
        if len(placement) != k:
            raise MinmaxError(f"placement lists {len(placement)} edges for k={k}")
        if len(set(placement)) != k:
            raise MinmaxError("placement edges must be distinct")
        slots = []
        for eid in placement:
            e = g.edge(eid)
            if not (e.is_bounded and e.nonlinear):
                raise MinmaxError(f"edge {eid} is not a nonlinear bounded edge")
            slots.append((eid, 0.0, e.length))
        return tuple(slots)
    raise MinmaxError(f"unknown placement {placement!r}")


def mass_threshold_k(g: MetricGraph, k: int, p: float,
                     placement="longest-edge") -> tuple[float, tuple[str, ...]]:
    """Mass threshold mu_k for a k-member family: k times the cut-off
    threshold of the slot length (the binding slot, for uneven slots).
    Returns (mu_k, edges hosting the slots)."""
    slots = _resolve_placement(g, k, placement)
    mu_k = k * max(sol.mass_threshold(p, ell) for _, _, ell in slots)
    edges = tuple(dict.fromkeys(eid for eid, _, _ in slots))
    return mu_k, edges


@dataclass(frozen=True)
class SeedFamily:
    """k disjoint cut-off solitons of mass mu/k with their placements."""

    k: int
    p: float
    mu: float
    slots: tuple           # (edge_id, offset, length) per member
    profiles: tuple        # CutoffSoliton per member

    @property
    def slot_mass(self) -> float:
        return self.mu / self.k

    def edge_profiles(self, theta) -> dict:
        """Per-edge callables of sqrt(k) * sum_j theta_j psi_j."""
        theta = np.asarray(theta, dtype=float)
        rt_k = math.sqrt(self.k)
        per_edge: dict[str, list] = {}
        for (eid, off, _), psi, t in zip(self.slots, self.profiles, theta):
            per_edge.setdefault(eid, []).append((off, psi, rt_k * t))

        def make(entries):
            def profile(x):
                x = np.asarray(x, dtype=float)
                out = np.zeros_like(x)
                for off, psi, coeff in entries:
                    out += coeff * psi(x - off)
                return out
            return profile

        return {eid: make(entries) for eid, entries in per_edge.items()}

    def build_function(self, mesh: Mesh, theta) -> GraphFunction:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.k,):
            raise MinmaxError(f"theta must have {self.k} components")
        if abs(np.linalg.norm(theta) - 1.0) > 1e-10:
            raise MinmaxError("theta must be a unit vector")
        return mesh.interpolate(self.edge_profiles(theta))


def seed_family(g: MetricGraph, k: int, mu: float, p: float,
                placement="longest-edge") -> SeedFamily:
    """Build the k-member family of mass mu (mu/k per slot).
    Raises MassBelowThresholdError through the cut-off construction when
    the per-slot mass is inadmissible for its slot length."""
    if k < 1:
        raise MinmaxError(f"k must be >= 1, got {k}")
    slots = _resolve_placement(g, k, placement)
    profiles = tuple(sol.cutoff_soliton(p, mu / k, ell) for _, _, ell in slots)
    return SeedFamily(k=k, p=p, mu=mu, slots=slots, profiles=profiles)


def build_seed(g: MetricGraph, mesh: Mesh, k: int, mu: float, p: float, theta,
               placement="longest-edge") -> GraphFunction:
    """h(theta) = sqrt(k) sum theta_j psi_j sampled onto the mesh."""
    return seed_family(g, k, mu, p, placement=placement).build_function(mesh, theta)


@dataclass(frozen=True)
class LevelReport:
    """Upper bound for the j-th min-max level and, once a solver ran,
    the energy it achieved against that bound."""

    j: int
    k: int
    mu: float
    p: float
    edges: tuple
    soliton_term: float        # soliton level at mass mu, divided by j^(2 beta)
    gap_term: float            # sigma_k = k * certified gap at (mu/k, L/k)
    bound_cj: float            # soliton_term + gap_term, negative
    monotone_gap_ok: bool
    achieved_energy: float | None = None
    satisfied: bool | None = None

    def as_dict(self) -> dict:
        d = asdict(self)
        d["edges"] = list(self.edges)
        return d

    def with_achieved(self, energy_value: float, tolerance: float) -> "LevelReport":
        return LevelReport(
            j=self.j, k=self.k, mu=self.mu, p=self.p, edges=self.edges,
            soliton_term=self.soliton_term, gap_term=self.gap_term,
            bound_cj=self.bound_cj, monotone_gap_ok=self.monotone_gap_ok,
            achieved_energy=energy_value,
            satisfied=bool(energy_value <= self.bound_cj + tolerance),
        )


def level_bound(g: MetricGraph, k: int, j: int, mu: float, p: float,
                placement="longest-edge") -> LevelReport:
    """Upper bound for the j-th min-max level (1 <= j <= k):
    soliton level scaled by j^(-2 beta) plus the family gap sigma_k."""
    if not 1 <= j <= k:
        raise MinmaxError(f"need 1 <= j <= k, got j={j}, k={k}")
    slots = _resolve_placement(g, k, placement)
    ell_k = min(ell for _, _, ell in slots)
    # Admissibility of the k-member family (raises below threshold).
    sol.cutoff_soliton(p, mu / k, ell_k)
    beta = sol.beta_exponent(p)
    level_mu = sol.soliton_energy(sol.soliton_params(p, mu))
    sigma_k = k * sol.certified_gap(p, mu / k, ell_k)
    # Remark-level monotonicity of the certified gap, checked rather than
    # assumed: j' * gap(mu/j', L/j') must not exceed sigma_k.
    if placement == "longest-edge":
        L = slots[0][2] * k
        gaps = [jj * sol.certified_gap(p, mu / jj, L / jj) for jj in range(1, k + 1)]
        monotone_ok = all(gap <= sigma_k * (1.0 + 1e-12) for gap in gaps)
    else:
        monotone_ok = True  # per-slot lengths fixed; no slicing chain to compare
    soliton_term = level_mu / float(j) ** (2.0 * beta)
    bound = soliton_term + sigma_k
    if not bound < 0.0:
        raise MinmaxError(
            f"level bound failed to be negative (bound={bound}); "
            "mass admissibility should prevent this"
        )
    edges = tuple(dict.fromkeys(eid for eid, _, _ in slots))
    return LevelReport(
        j=j, k=k, mu=mu, p=p, edges=edges,
        soliton_term=soliton_term, gap_term=sigma_k, bound_cj=bound,
        monotone_gap_ok=monotone_ok,
    )


def family_basis(mesh: Mesh, family: SeedFamily) -> np.ndarray:
    """Matrix (n_dofs x k) whose columns are the sampled slot profiles."""
    cols = []
    for (eid, off, _), psi in zip(family.slots, family.profiles):
        func = mesh.interpolate({eid: (lambda x, o=off, f=psi: f(x - o))})
        cols.append(func.values)
    return np.column_stack(cols)


def theta_sweep(mesh: Mesh, family: SeedFamily, thetas, chunk: int = 512):
    """Discrete constrained energy of h(theta) for a batch of thetas.

    Algebraically identical to building each seed and calling the energy
    evaluator (same stiffness form, same per-element Gauss rule), but
    factored through the k slot profiles so large sweeps stay cheap.
    Returns (energies, masses) arrays.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    if thetas.shape[1] != family.k:
        raise MinmaxError(f"thetas must have {family.k} columns")
    K, M = mesh.matrices()
    basis = family_basis(mesh, family)
    gram_k = basis.T @ (K @ basis)
    gram_m = basis.T @ (M @ basis)

    # Gauss values of each slot profile on every element of the edges that
    # host slots (other nonlinear edges carry zero and contribute nothing).
    rows = []
    weights = []
    full_cols = np.zeros((mesh.n_nodes, family.k))
    full_cols[mesh.free_nodes] = basis
    for eid in sorted({eid for eid, _, _ in family.slots}):
        em = mesh.edge_meshes[eid]
        if not em.nonlinear:
            raise MinmaxError(f"seed edge {eid} is not flagged nonlinear")
        vals = full_cols[em.node_ids]            # (n_nodes_e, k)
        left = vals[:-1, None, :]
        right = vals[1:, None, :]
        gauss = left * (1 - GAUSS_X)[None, :, None] + right * GAUSS_X[None, :, None]
        rows.append(gauss.reshape(-1, family.k))
        weights.append(np.repeat(em.h, em.n_intervals * 3) * np.tile(GAUSS_W, em.n_intervals))
    Q = np.vstack(rows)
    w = np.concatenate(weights)

    rt_k = math.sqrt(family.k)
    p = family.p
    energies = np.empty(thetas.shape[0])
    masses = np.empty(thetas.shape[0])
    for start in range(0, thetas.shape[0], chunk):
        T = thetas[start:start + chunk].T          # (k, batch)
        kin = 0.5 * family.k * np.einsum("jb,jl,lb->b", T, gram_k, T)
        mss = family.k * np.einsum("jb,jl,lb->b", T, gram_m, T)
        uq = Q @ (rt_k * T)                        # (n_q, batch)
        pot = (w @ np.abs(uq) ** p) / p
        energies[start:start + T.shape[1]] = kin - pot
        masses[start:start + T.shape[1]] = mss
    return energies, masses
