"""Mass-constrained bound-state solver and Palais-Smale diagnostics.

States are found by a semi-implicit normalized gradient flow
    (M + dt K) u~ = M u + dt N(u),   u <- sqrt(mu) u~ / ||u~||,
with energy backtracking on dt, followed by Newton refinement of the
bordered stationarity system in (u, lam). Newton residuals are evaluated
in extended precision so the reported dual norms are limited by the
iterate, not by cancellation in assembling K u on fine meshes.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .mesh import (
    GraphFunction,
    Mesh,
    MeshError,
    nonlinear_jacobian,
    nonlinear_load,
    prolong,
    stationarity_residual,
)
from .functionals import EnergyBreakdown, energy, j_dual_norm, lambda_of
from .minmax import (
    LevelReport,
    MinmaxError,
    level_bound,
    mass_threshold_k,
    seed_family,
    sphere_samples,
)
from . import soliton as sol
from .mesh import kirchhoff_residual


class FlowStallError(RuntimeError):
    """dt underflowed during energy backtracking."""


class TruncationError(MeshError):
    """A constructed profile does not fit inside the truncated half-line."""


@dataclass
class SolverConfig:
    """Knobs of a bound-state solve at mass mu, exponent p."""

    mu: float
    p: float
    dt: float | None = None            # base flow step; default 1/(1 + lam_est)
    max_iterations: int = 4000         # flow steps per round
    tol: float = 1e-8                  # dual-residual convergence target
    delta_energy: float | None = None  # distinctness: energy gap
    delta_l2: float | None = None      # distinctness: sign-quotient L2 distance
    seed_strategy: str = "minmax"      # "minmax" | "user"
    perturbation_scale: float = 0.0    # relative L2 size of seed perturbations
    refine: bool = True                # Newton refinement after the flow
    max_newton: int = 60
    rng_seed: int = 0

    def __post_init__(self):
        if not 2.0 < self.p < 6.0:
            raise ValueError(f"p must lie in (2, 6), got {self.p}")
        if self.mu <= 0:
            raise ValueError(f"mass must be positive, got {self.mu}")
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.tol <= 0:
            raise ValueError("tolerance must be positive")

    @property
    def lam_estimate(self) -> float:
        return sol.soliton_params(self.p, self.mu).multiplier

    def resolved_dt(self) -> float:
        return self.dt if self.dt is not None else 1.0 / (1.0 + self.lam_estimate)

    def soliton_level(self) -> float:
        return sol.soliton_energy(sol.soliton_params(self.p, self.mu))

    def resolved_delta_energy(self) -> float:
        if self.delta_energy is not None:
            return self.delta_energy
        return 1e-6 * abs(self.soliton_level())

    def resolved_delta_l2(self) -> float:
        return self.delta_l2 if self.delta_l2 is not None else 1e-3 * math.sqrt(self.mu)


@dataclass
class BoundState:
    """A (candidate) stationary state with its certificates."""

    u: GraphFunction
    lam: float
    energy: EnergyBreakdown
    j_residual: float
    kirchhoff: dict
    provenance: str
    flow_iterations: int
    newton_iterations: int
    converged: bool
    note: str = ""

    def summary(self) -> dict:
        return {
            "provenance": self.provenance,
            "energy": self.energy.as_dict(),
            "lambda": self.lam,
            "j_residual": self.j_residual,
            "kirchhoff_max": max(abs(v) for v in self.kirchhoff.values()),
            "flow_iterations": self.flow_iterations,
            "newton_iterations": self.newton_iterations,
            "converged": self.converged,
            "note": self.note,
        }


class _Flow:
    """Semi-implicit flow with a small per-dt factorization cache."""

    def __init__(self, mesh: Mesh, cfg: SolverConfig):
        self.mesh = mesh
        self.cfg = cfg
        self._factors = {}

    def _solver(self, dt: float):
        f = self._factors.get(dt)
        if f is None:
            K, M = self.mesh.matrices()
            f = spla.factorized((M + dt * K).tocsc())
            if len(self._factors) >= 8:  # backtracking varies dt; bound memory
                self._factors.pop(next(iter(self._factors)))
            self._factors[dt] = f
        return f

    def step(self, u: GraphFunction, e_total: float, dt: float):
        """One accepted flow step: returns (u_new, e_new, dt_used).
        Halves dt until the constrained energy does not increase."""
        cfg = self.cfg
        K, M = self.mesh.matrices()
        mu = cfg.mu
        load = nonlinear_load(self.mesh, u.full_values(), cfg.p)[self.mesh.free_nodes]
        mu_u = M @ u.values
        slack = 1e-13 * (1.0 + abs(e_total))
        for _ in range(30):
            cand = self._solver(dt)(mu_u + dt * load)
            cand_fn = GraphFunction(self.mesh, cand).renormalized(mu)
            e_new = energy(cand_fn, cfg.p).total
            if e_new <= e_total + slack:
                return cand_fn, e_new, dt
            dt *= 0.5
        raise FlowStallError("flow step size underflowed after 30 halvings")


def flow_step(u: GraphFunction, cfg: SolverConfig, dt: float | None = None) -> GraphFunction:
    """One step of the normalized gradient flow (module-level convenience;
    `solve` drives the cached version with dt adaptation)."""
    e_total = energy(u, cfg.p).total
    new, _, _ = _Flow(u.mesh, cfg).step(u, e_total, dt or cfg.resolved_dt())
    return new


def _residual_scale(mesh, vals, lam, p):
    K, M = mesh.matrices()
    scale = float(np.linalg.norm(K @ vals))
    scale = max(scale, abs(lam) * float(np.linalg.norm(M @ vals)))
    load = nonlinear_load(mesh, GraphFunction(mesh, vals).full_values(), p)
    return max(scale, float(np.linalg.norm(load[mesh.free_nodes])), 1e-30)


def _frozen_residual(mesh, vals, lam, p):
    r = stationarity_residual(mesh, GraphFunction(mesh, vals), lam, p,
                              dtype=np.longdouble)
    return r, math.sqrt(float(r @ r))


def _frozen_jacobian(mesh, vals, lam, p):
    K, M = mesh.matrices()
    W = nonlinear_jacobian(mesh, GraphFunction(mesh, vals).full_values(), p)
    return (K + lam * M - W[mesh.free_nodes][:, mesh.free_nodes]).tocsc()


def _soft_basis(mesh, A, lam):
    """M-orthonormal basis of the near-kernel of A (relative cutoff).
    Multi-bump states carry one near-zero translation mode per bump, and
    amplitude modes drift close to zero while the multiplier is off; all
    of them wreck plain Newton steps and are treated separately."""
    M = mesh.M
    k = min(4, mesh.n_dofs - 2)
    if k < 1:
        return None
    try:
        theta, vecs = spla.eigsh(A, k=k, M=M.tocsc(), sigma=0.0, which="LM")
    except Exception:
        return None
    soft = np.abs(theta) < 0.1 * (1.0 + abs(lam))
    if not np.any(soft):
        return None
    basis = vecs[:, soft]
    for j in range(basis.shape[1]):
        for i in range(j):
            basis[:, j] -= float(basis[:, i] @ (M @ basis[:, j])) * basis[:, i]
        nrm = math.sqrt(max(float(basis[:, j] @ (M @ basis[:, j])), 0.0))
        if nrm == 0:
            return None
        basis[:, j] /= nrm
    return basis


def _deflated_correct(mesh, vals, lam, p, basis, max_iter=6):
    """Newton correction with the soft coordinates frozen.

    Solves with the ridge-shifted operator A + nu M (safely invertible,
    banded) and projects every update M-orthogonal to the soft subspace,
    so only the stiff modes move; the ridge costs a little contraction
    rate but keeps factorizations sparse (an explicit bordered matrix
    with dense eigenvector columns fills catastrophically in sparse LU).
    """
    M = mesh.M
    border = M @ basis  # columns pair with functions: soft residual = border^T-free
    nu = 0.05 * (1.0 + abs(lam))
    perp_prev = None
    for _ in range(max_iter):
        A = _frozen_jacobian(mesh, vals, lam, p)
        r, _ = _frozen_residual(mesh, vals, lam, p)
        rf = np.asarray(r, dtype=float)
        r_perp = rf - border @ (basis.T @ rf)
        perp = np.linalg.norm(r_perp)
        if perp_prev is not None and perp >= 0.5 * perp_prev:
            break
        perp_prev = perp
        try:
            dv = -spla.splu((A + nu * M).tocsc()).solve(rf)
        except RuntimeError:
            break
        if not np.all(np.isfinite(dv)):
            break
        dv = dv - basis @ (border.T @ dv)
        vals = vals + dv
        if np.linalg.norm(dv) <= 1e-12 * (1.0 + np.linalg.norm(vals)):
            break
    return vals


def _soft_system_newton(mesh, vals, lam, p, basis, max_iter=12):
    """Damped Newton (finite-difference Jacobian) on the reduced soft
    system g(s) = Phi^T r(correct(v + Phi s)): the Lyapunov-Schmidt
    reduction that walks exponentially flat bump-position valleys which
    full-space Newton cannot traverse."""
    ns = basis.shape[1]
    v0 = vals

    def g_of(s):
        v = _deflated_correct(mesh, v0 + basis @ s, lam, p, basis)
        r, _ = _frozen_residual(mesh, v, lam, p)
        return basis.T @ np.asarray(r, dtype=float), v

    s = np.zeros(ns)
    gs, vbase = g_of(s)
    gnorm = np.linalg.norm(gs)
    for _ in range(max_iter):
        if gnorm <= 1e-12 * (1.0 + abs(lam)):
            break
        J = np.zeros((ns, ns))
        fd = 1e-3
        for j in range(ns):
            sj = s.copy()
            sj[j] += fd
            gj, _ = g_of(sj)
            J[:, j] = (gj - gs) / fd
        try:
            ds = np.linalg.solve(J, -gs)
        except np.linalg.LinAlgError:
            break
        step = 1.0
        moved = False
        while step >= 2.0 ** -8:
            g_try, v_try = g_of(s + step * ds)
            if np.linalg.norm(g_try) < gnorm:
                s = s + step * ds
                gs, vbase, gnorm = g_try, v_try, np.linalg.norm(g_try)
                moved = True
                break
            step *= 0.5
        if not moved:
            break
    return vbase


def _plain_newton(mesh, vals, lam, p, max_iter=30):
    """Damped Newton at frozen lam (no soft modes detected)."""
    r, norm = _frozen_residual(mesh, vals, lam, p)
    floor = 5e-14 * _residual_scale(mesh, vals, lam, p)
    best = (norm, vals.copy())
    for it in range(max_iter):
        if norm <= floor:
            return vals, True
        A = _frozen_jacobian(mesh, vals, lam, p)
        try:
            du = -spla.splu(A).solve(np.asarray(r, dtype=float))
        except RuntimeError:
            break
        if not np.all(np.isfinite(du)):
            break
        step = 1.0
        moved = False
        while step >= 2.0 ** -8:
            v_try = vals + step * du
            r_try, n_try = _frozen_residual(mesh, v_try, lam, p)
            if n_try < norm * (1.0 - 1e-4 * step) or n_try <= floor:
                vals, r, norm = v_try, r_try, n_try
                moved = True
                break
            step *= 0.5
        if not moved:
            break
        if norm < best[0]:
            best = (norm, vals.copy())
    vals = best[1] if best[0] < norm else vals
    ok = min(best[0], norm) <= max(floor, 1e-9 * _residual_scale(mesh, vals, lam, p))
    return vals, ok


def _solve_fixed_lambda(mesh: Mesh, vals, lam: float, p: float,
                        max_rounds: int = 6):
    """Solve K u + lam M u = N(u) at frozen lam, best effort.

    Freezing lam keeps the spectrum of the linearization from sweeping
    through zero as a coupled (u, lam) iteration would. Each round detects
    the current near-kernel; with soft modes present the stiff complement
    is corrected by deflated Newton and the soft coordinates by the
    reduced Lyapunov-Schmidt system, otherwise plain damped Newton runs.
    Returns (vals, rounds_used, relative_residual); the iteration stops at
    the linear-solver noise floor of the mesh, wherever that lies.
    """
    vals = np.array(vals, dtype=float)
    _, norm = _frozen_residual(mesh, vals, lam, p)
    best = (norm, vals.copy())
    rounds = 0
    for rnd in range(max_rounds):
        rounds = rnd
        floor = 5e-14 * _residual_scale(mesh, vals, lam, p)
        if norm <= floor:
            break
        A = _frozen_jacobian(mesh, vals, lam, p)
        basis = _soft_basis(mesh, A, lam)
        if basis is None:
            vals, _ok = _plain_newton(mesh, vals, lam, p)
            _, norm = _frozen_residual(mesh, vals, lam, p)
            if norm < best[0]:
                best = (norm, vals.copy())
            break
        vals = _soft_system_newton(mesh, vals, lam, p, basis)
        _, norm = _frozen_residual(mesh, vals, lam, p)
        if norm < 0.99 * best[0]:
            best = (norm, vals.copy())
        else:
            break  # refreshing the soft basis stopped paying off
    norm, vals = best
    return vals, rounds + 1, norm / _residual_scale(mesh, vals, lam, p)


def _newton_refine(mesh: Mesh, u: GraphFunction, lam: float, cfg: SolverConfig):
    """Refine a flow iterate to a stationary point of mass mu.

    Outer secant iteration on lam matching the mass of the frozen-lam
    solution branch (the soliton scaling mass ~ lam^(1/(2 beta)) seeds the
    first update), finished by a short coupled polish for the exact
    constraint. Returns (function, lam, outer_iterations, converged).
    """
    mu, p = cfg.mu, cfg.p
    beta = sol.beta_exponent(p)
    _, M = mesh.matrices()
    vals = u.values.copy()
    lam_cur = float(lam)
    total = 0
    pairs = []
    for _outer in range(18):
        vals, its, ok = _solve_fixed_lambda(mesh, vals, lam_cur, p)
        total += its + 1
        if not ok:
            break
        m = float(vals @ (M @ vals))
        if m <= 1e-12 * mu:
            break  # collapsed to zero; nothing to match
        pairs.append((lam_cur, m))
        if abs(m - mu) <= 1e-11 * mu:
            # The residual bump from exact renormalization is ~(m/mu - 1),
            # far below the dual-norm tolerance once the secant is this
            # tight; a coupled polish is not worth its near-singular
            # solves at converged multi-bump states.
            return GraphFunction(mesh, vals), lam_cur, total, True
        lam_next = None
        if len(pairs) >= 2:
            (l0, m0), (l1, m1) = pairs[-2], pairs[-1]
            if m1 != m0 and l1 != l0:
                slope = (m1 - m0) / (l1 - l0)
                if slope > 0:
                    lam_next = l1 + (mu - m1) / slope
        if lam_next is None:
            if lam_cur > 0:
                lam_next = lam_cur * (mu / m) ** (2.0 * beta)
            else:
                lam_next = lam_cur + 0.05 * (1.0 + abs(lam_cur)) * math.copysign(
                    1.0, mu - m)
        cap = 0.5 * (1.0 + abs(lam_cur))
        lam_next = min(max(lam_next, lam_cur - cap), lam_cur + cap)
        lam_cur = lam_next
        if total > cfg.max_newton:
            break
    return GraphFunction(mesh, vals), lam_cur, total, False


def _finalize(mesh, u, lam, cfg, provenance, flow_iters, newton_iters, note=""):
    u = u.renormalized(cfg.mu)
    lam_final = lambda_of(u, cfg.mu, cfg.p)
    bk = energy(u, cfg.p)
    res = j_dual_norm(u, cfg.mu, cfg.p)
    converged = res <= cfg.tol
    if bk.total < 0 and lam_final <= 0:
        note = (note + "; " if note else "") + "negative energy with nonpositive multiplier"
    if u.sup_norm() <= 1e-8 * math.sqrt(cfg.mu):
        note = (note + "; " if note else "") + "collapsed to the zero function"
        converged = False
    return BoundState(
        u=u, lam=lam_final, energy=bk, j_residual=res,
        kirchhoff=kirchhoff_residual(u, lam_final, cfg.p),
        provenance=provenance, flow_iterations=flow_iters,
        newton_iterations=newton_iters, converged=converged, note=note,
    )


def solve(g, mesh: Mesh, cfg: SolverConfig, seed: GraphFunction,
          provenance: str = "user", lam_hint: float | None = None) -> BoundState:
    """Flow from `seed` (renormalized to mass mu), then Newton-refine.

    `lam_hint` primes the multiplier of the refinement (the per-slot
    soliton multiplier for family seeds); otherwise the iterate's own
    lambda is used. Unconverged runs return the best iterate flagged
    converged=False rather than raising; the caller decides.
    """
    if seed.mesh is not mesh:
        raise MeshError("seed lives on a different mesh")
    u = seed.renormalized(cfg.mu)
    flow = _Flow(mesh, cfg)
    dt0 = cfg.resolved_dt()
    dt = dt0
    e_total = energy(u, cfg.p).total
    flow_iters = 0
    newton_total = 0
    note = ""
    res_history = []
    res0 = j_dual_norm(u, cfg.mu, cfg.p)
    # Near-stationary seeds (mesh continuation, restarts) skip straight to
    # the refinement; the flow would only burn factorizations.
    budget = cfg.max_iterations if res0 > 1e4 * cfg.tol else min(
        cfg.max_iterations, 10)
    min_flow = 5
    stalled = False
    for n_round in range(3):
        # Flow until the residual plateaus (or the budget runs out) ...
        plateau = False
        round_start = flow_iters
        while flow_iters < budget and not plateau:
            try:
                u, e_total, dt_used = flow.step(u, e_total, dt)
            except FlowStallError:
                # No dt decreases the energy: the iterate sits at the
                # flow's floor, which is where refinement takes over.
                stalled = True
                break
            dt = min(dt_used * 1.25, dt0)
            flow_iters += 1
            res = j_dual_norm(u, cfg.mu, cfg.p)
            res_history.append(res)
            if flow_iters - round_start < min_flow:
                continue
            if res <= max(cfg.tol, 1e-4 * res0):
                plateau = True
            elif len(res_history) > 15 and res > 0.98 * res_history[-15]:
                plateau = True
        if not cfg.refine:
            return _finalize(mesh, u, lambda_of(u, cfg.mu, cfg.p), cfg,
                             provenance, flow_iters, newton_total, note)
        # ... then polish with Newton.
        lam0 = lam_hint if (n_round == 0 and lam_hint is not None) \
            else lambda_of(u, cfg.mu, cfg.p)
        u_ref, lam_ref, its, ok = _newton_refine(mesh, u, lam0, cfg)
        newton_total += its
        if ok:
            return _finalize(mesh, u_ref.renormalized(cfg.mu), lam_ref, cfg,
                             provenance, flow_iters, newton_total, note)
        if energy(u_ref.renormalized(cfg.mu), cfg.p).total <= e_total:
            u = u_ref.renormalized(cfg.mu)
            e_total = energy(u, cfg.p).total
        if flow_iters >= budget or stalled:
            break
    if stalled:
        note = (note + "; " if note else "") + "flow stalled"
    return _finalize(mesh, u, lambda_of(u, cfg.mu, cfg.p), cfg, provenance,
                     flow_iters, newton_total, note or "unconverged")


def _canonical_sign(theta: np.ndarray) -> np.ndarray:
    for t in theta:
        if abs(t) > 1e-14:
            return theta if t > 0 else -theta
    return theta


def _level_thetas(j: int, n_samples: int, rng_seed: int) -> list:
    """Deterministic seed directions on S^(j-1): the symmetric point, the
    alternating-sign point, the first axis, then low-discrepancy fill."""
    if j == 1:
        return [np.array([1.0])]
    thetas = [
        np.ones(j) / math.sqrt(j),
        np.array([(-1.0) ** i for i in range(j)]) / math.sqrt(j),
        np.eye(j)[0],
    ]
    for t in sphere_samples(j, n_samples, seed=rng_seed):
        thetas.append(np.asarray(t))
    seen = set()
    out = []
    for t in thetas:
        t = _canonical_sign(t)
        key = tuple(np.round(t, 9))
        if key not in seen:
            seen.add(key)
            out.append(t)
    return out


def _fallback_seed(g, mesh: Mesh, mu: float, p: float) -> GraphFunction:
    """Soliton bump centered on the longest nonlinear edge (used when the
    cut-off family is inadmissible, e.g. below the mass threshold)."""
    edges = sorted((e for e in g.bounded_edges if e.nonlinear),
                   key=lambda e: (-e.length, e.id))
    if not edges:
        raise MinmaxError("no nonlinear edge to seed from")
    e = edges[0]
    params = sol.soliton_params(p, mu)
    center = 0.5 * e.length
    fn = mesh.interpolate({e.id: lambda x: params(x - center)})
    return fn.renormalized(mu)


@dataclass
class MultiSolveResult:
    states: list            # distinct converged states, ascending energy
    attempts: list          # every solve, in seed order
    reports: list           # one LevelReport per j = 1..k (when admissible)
    mu_k: float
    below_threshold: bool
    distinct_count: int = field(init=False)

    def __post_init__(self):
        self.distinct_count = len(self.states)


def _distinct(states, delta_e, delta_l2):
    kept = []
    for s in states:
        dup = False
        for t in kept:
            if abs(s.energy.total - t.energy.total) < delta_e:
                d = min(s.u.l2_distance(t.u), (s.u + t.u).mass() ** 0.5)
                if d < delta_l2:
                    dup = True
                    break
        if not dup:
            kept.append(s)
    return kept


def multi_solve(g, mesh: Mesh, cfg: SolverConfig, k: int,
                placement="longest-edge", n_samples_per_level: int = 2,
                allow_below_threshold: bool = False, jobs: int = 1,
                fine_mesh: Mesh | None = None) -> MultiSolveResult:
    """Search for (at least) k distinct states from min-max seed sweeps.

    For each j = 1..k a genus-j family is built and flowed from several
    directions on S^(j-1) (antipodes identified: seeds theta and -theta
    produce the same state up to sign). States are deduplicated by energy
    gap and sign-quotient L2 distance, and each level's best energy is
    reported against its min-max upper bound. Finding fewer than k
    distinct states is reported, not papered over.

    With `fine_mesh` given, each distinct state is re-solved there by mesh
    continuation (prolongation seed, multiplier hint from the coarse
    state) and the refined states are reported instead.
    """
    if k < 1:
        raise MinmaxError(f"k must be >= 1, got {k}")
    mu_k, _ = mass_threshold_k(g, k, cfg.p, placement)
    below = cfg.mu < mu_k
    if below and not allow_below_threshold:
        raise MinmaxError(
            f"mass {cfg.mu} is below the k={k} threshold {mu_k:.6g}; "
            "pass allow_below_threshold=True to search anyway"
        )

    tasks = []
    rng = np.random.default_rng(cfg.rng_seed)
    for j in range(1, k + 1):
        try:
            family = seed_family(g, j, cfg.mu, cfg.p, placement)
        except sol.MassBelowThresholdError:
            if j == 1:
                tasks.append(("fallback-soliton j=1",
                              _fallback_seed(g, mesh, cfg.mu, cfg.p),
                              sol.soliton_params(cfg.p, cfg.mu).multiplier))
            continue
        lam_hint = sol.soliton_params(cfg.p, cfg.mu / j).multiplier
        for theta in _level_thetas(j, n_samples_per_level, cfg.rng_seed):
            label = f"j={j} theta=[" + ",".join(f"{t:.6g}" for t in theta) + "]"
            fn = family.build_function(mesh, theta)
            tasks.append((label, fn, lam_hint))
            if cfg.perturbation_scale > 0:
                noise = rng.standard_normal(mesh.n_dofs)
                noise_fn = GraphFunction(mesh, noise).renormalized(cfg.mu)
                pert = GraphFunction(
                    mesh, fn.values + cfg.perturbation_scale * noise_fn.values
                )
                tasks.append((label + " perturbed", pert, lam_hint))

    def run(task):
        label, fn, hint = task
        return solve(g, mesh, cfg, fn, provenance=label, lam_hint=hint)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            attempts = list(pool.map(run, tasks))
    else:
        attempts = [run(t) for t in tasks]

    converged = sorted(
        (s for s in attempts if s.converged),
        key=lambda s: (s.energy.total, s.provenance),
    )
    states = _distinct(converged, cfg.resolved_delta_energy(), cfg.resolved_delta_l2())

    if fine_mesh is not None:
        refined = []
        for s in states:
            rs = solve(g, fine_mesh, cfg, prolong(s.u, fine_mesh),
                       provenance=s.provenance + " [refined]", lam_hint=s.lam)
            refined.append(rs if rs.converged else s)
        states = sorted(refined, key=lambda s: (s.energy.total, s.provenance))

    reports = []
    if not below:
        tol_level = 1e-6 * abs(cfg.soliton_level())
        for j in range(1, k + 1):
            rep = level_bound(g, k, j, cfg.mu, cfg.p, placement)
            if len(states) >= j:
                rep = rep.with_achieved(states[j - 1].energy.total, tol_level)
            reports.append(rep)
    return MultiSolveResult(states=states, attempts=attempts, reports=reports,
                            mu_k=mu_k, below_threshold=below)


# -- Palais-Smale diagnostic sequences ------------------------------------

@dataclass(frozen=True)
class PsSample:
    """One member of a Palais-Smale diagnostic sequence: analytic energy
    and sup-norm of the exact profile, discrete energy of its mesh
    representative, and the numerically computed dual residual."""

    n: int
    energy: float
    energy_quadrature: float
    dual_norm: float
    sup_norm: float
    lam: float

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "energy": self.energy,
            "energy_quadrature": self.energy_quadrature,
            "dual_norm": self.dual_norm,
            "sup_norm": self.sup_norm,
            "lambda": self.lam,
        }


def _pick_half_line(g, mesh: Mesh, needed: float, half_line: str | None):
    if half_line is not None:
        T = mesh.truncations.get(half_line)
        if T is None:
            raise TruncationError(f"{half_line} is not a half-line of the mesh")
        if T < needed:
            raise TruncationError(
                f"half-line {half_line} is truncated at {T}, need {needed:.6g}"
            )
        return half_line
    for eid in sorted(mesh.truncations):
        if mesh.truncations[eid] >= needed:
            return eid
    raise TruncationError(
        f"no half-line is truncated beyond {needed:.6g}; rebuild the mesh "
        "with a larger truncation"
    )


def ps_sine_sequence(g, mesh: Mesh, c: float, mu: float, p: float, n: int,
                     half_line: str | None = None) -> PsSample:
    """n-th member of the explicit non-compact Palais-Smale sequence at
    level c > 0: u_n = c_n sin(a x) on [0, 2 n pi / a] of a half-line,
    zero elsewhere, with a^2 = 2c/mu and c_n^2 = sqrt(2 c mu) / (n pi).

    The exact profile has mass mu and constrained energy c for every n
    (all integrals are elementary); the mesh representative is
    renormalized to mass mu exactly and its dual residual is computed
    numerically. It decays like the boundary derivative jump, O(c_n).
    """
    if c <= 0:
        raise ValueError("the sine sequence requires a positive level c")
    a = math.sqrt(2.0 * c / mu)
    c_n = math.sqrt(math.sqrt(2.0 * c * mu) / (n * math.pi))
    length = 2.0 * n * math.pi / a
    eid = _pick_half_line(g, mesh, length, half_line)

    def profile(x):
        x = np.asarray(x, dtype=float)
        return np.where(x <= length, c_n * np.sin(a * x), 0.0)

    u = mesh.interpolate({eid: profile}).renormalized(mu)
    return PsSample(
        n=n,
        energy=0.5 * a * a * mu,
        energy_quadrature=energy(u, p).total,
        dual_norm=j_dual_norm(u, mu, p),
        sup_norm=c_n,
        lam=-a * a,
    )


@dataclass(frozen=True)
class BumpProfile:
    """Compactly supported C^1 bump xi(x) = c sin^2(pi x / radius) on
    [0, radius] with squared L2 norm mu; closed-form gradient norm."""

    mu: float
    radius: float

    @property
    def height(self) -> float:
        return math.sqrt(8.0 * self.mu / (3.0 * self.radius))

    @property
    def grad_sq(self) -> float:
        return self.height ** 2 * math.pi ** 2 / (2.0 * self.radius)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= 0.0) & (x <= self.radius)
        return np.where(inside, self.height * np.sin(math.pi * x / self.radius) ** 2, 0.0)


def ps_scaling_sequence(g, mesh: Mesh, profile: BumpProfile, mu: float, p: float,
                        n: int, half_line: str | None = None) -> PsSample:
    """n-th member of the level-0 Palais-Smale sequence: the mass-mu bump
    spread over [0, n * radius] by u_n(x) = n^(-1/2) xi(x/n). The exact
    energy is grad_sq / (2 n^2); mass is mu for every n."""
    if abs(profile.mu - mu) > 1e-12 * mu:
        raise ValueError("profile mass does not match mu")
    needed = n * profile.radius
    eid = _pick_half_line(g, mesh, needed, half_line)
    rt = 1.0 / math.sqrt(n)

    def scaled(x):
        return rt * profile(np.asarray(x, dtype=float) / n)

    u = mesh.interpolate({eid: scaled}).renormalized(mu)
    return PsSample(
        n=n,
        energy=0.5 * profile.grad_sq / (n * n),
        energy_quadrature=energy(u, p).total,
        dual_norm=j_dual_norm(u, mu, p),
        sup_norm=profile.height * rt,
        lam=-profile.grad_sq / (n * n * mu),
    )
