"""Piecewise-linear finite elements on a metric graph.

Each edge carries a uniform grid; every vertex owns a single shared
degree of freedom, so vertex continuity is built into the space and the
Kirchhoff conditions arise as natural conditions of discrete
stationarity. Half-lines are truncated at x = T with a homogeneous
Dirichlet node at the far end.

Element matrices per interval of length h:
    stiffness [[1, -1], [-1, 1]] / h,
    mass      h * [[2, 1], [1, 2]] / 6.
Nonlinear integrals use 3-point Gauss per interval applied to the
piecewise-linear interpolant, which keeps |u|^p accurate for p up to 6
and makes the discrete identity J(u)u = 0 hold to rounding.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .graphs import MetricGraph

# 3-point Gauss-Legendre rule on the reference interval [0, 1].
GAUSS_X = np.array([0.5 * (1.0 - math.sqrt(0.6)), 0.5, 0.5 * (1.0 + math.sqrt(0.6))])
GAUSS_W = np.array([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0])


class MeshError(ValueError):
    pass


class EdgeMesh:
    """Grid of one edge: global node ids and coordinates, uniform spacing."""

    __slots__ = ("edge_id", "h", "n_intervals", "node_ids", "coords",
                 "nonlinear", "is_half_line", "extent")

    def __init__(self, edge_id, h, n_intervals, node_ids, nonlinear, is_half_line):
        self.edge_id = edge_id
        self.h = h
        self.n_intervals = n_intervals
        self.node_ids = node_ids
        self.coords = np.linspace(0.0, h * n_intervals, n_intervals + 1)
        self.nonlinear = nonlinear
        self.is_half_line = is_half_line
        self.extent = h * n_intervals


class Mesh:
    """Discretization of a whole metric graph. Immutable after build."""

    def __init__(self, graph: MetricGraph, edge_meshes, n_nodes, dirichlet_nodes,
                 vertex_node, truncations):
        self.graph = graph
        self.edge_meshes = edge_meshes          # dict edge_id -> EdgeMesh
        self.n_nodes = n_nodes
        self.dirichlet_nodes = dirichlet_nodes  # far ends of half-lines
        self.vertex_node = vertex_node          # dict vertex id -> node id
        self.truncations = truncations          # dict half-line id -> T
        mask = np.ones(n_nodes, dtype=bool)
        mask[dirichlet_nodes] = False
        self.free_nodes = np.nonzero(mask)[0]
        self.node_to_dof = -np.ones(n_nodes, dtype=np.int64)
        self.node_to_dof[self.free_nodes] = np.arange(self.free_nodes.size)
        self._K = None
        self._M = None
        self._kappa = None

    # -- counts ---------------------------------------------------------

    @property
    def n_dofs(self) -> int:
        return self.free_nodes.size

    @property
    def kappa_mask(self) -> np.ndarray:
        """Node mask: 1 on nodes of nonlinear edges (vertices included)."""
        if self._kappa is None:
            kappa = np.zeros(self.n_nodes)
            for em in self.edge_meshes.values():
                if em.nonlinear:
                    kappa[em.node_ids] = 1.0
            self._kappa = kappa
        return self._kappa

    # -- assembly -------------------------------------------------------

    def _assemble_full(self):
        rows, cols, kvals, mvals = [], [], [], []
        for eid in sorted(self.edge_meshes):  # fixed edge order: bit-stable sums
            em = self.edge_meshes[eid]
            h = em.h
            left = em.node_ids[:-1]
            right = em.node_ids[1:]
            for (r, c, kv, mv) in (
                (left, left, 1.0 / h, h / 3.0),
                (left, right, -1.0 / h, h / 6.0),
                (right, left, -1.0 / h, h / 6.0),
                (right, right, 1.0 / h, h / 3.0),
            ):
                rows.append(r)
                cols.append(c)
                kvals.append(np.full(r.size, kv))
                mvals.append(np.full(r.size, mv))
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        K = sp.coo_matrix((np.concatenate(kvals), (rows, cols)),
                          shape=(self.n_nodes, self.n_nodes)).tocsr()
        M = sp.coo_matrix((np.concatenate(mvals), (rows, cols)),
                          shape=(self.n_nodes, self.n_nodes)).tocsr()
        return K, M

    def matrices(self):
        """Stiffness and mass matrices restricted to the free dofs."""
        if self._K is None:
            K, M = self._assemble_full()
            f = self.free_nodes
            self._K = K[f][:, f].tocsr()
            self._M = M[f][:, f].tocsr()
        return self._K, self._M

    @property
    def K(self):
        return self.matrices()[0]

    @property
    def M(self):
        return self.matrices()[1]

    # -- functions ------------------------------------------------------

    def zero_function(self) -> "GraphFunction":
        return GraphFunction(self, np.zeros(self.n_dofs))

    def interpolate(self, profiles, consistency_tol=1e-9) -> "GraphFunction":
        """Sample per-edge profiles (callables of the edge coordinate) at
        the nodes. Edges missing from `profiles` contribute zero. Profiles
        sharing a vertex must agree there within `consistency_tol`
        relative to the sampled magnitude."""
        full = np.zeros(self.n_nodes)
        claimed = np.zeros(self.n_nodes, dtype=bool)
        scale = 0.0
        for eid in sorted(profiles):
            em = self.edge_meshes[eid]
            vals = np.asarray(profiles[eid](em.coords), dtype=float)
            if vals.shape != em.coords.shape:
                raise MeshError(f"profile for edge {eid} returned a bad shape")
            scale = max(scale, float(np.max(np.abs(vals))) if vals.size else 0.0)
            ids = em.node_ids
            clash = claimed[ids]
            if np.any(np.abs(full[ids[clash]] - vals[clash])
                      > consistency_tol * max(scale, 1e-300)):
                raise MeshError(f"inconsistent vertex values while sampling edge {eid}")
            full[ids] = vals
            claimed[ids] = True
        full[self.dirichlet_nodes] = 0.0
        return GraphFunction(self, full[self.free_nodes])

    def to_metadata(self) -> dict:
        return {
            "spacing": {eid: em.h for eid, em in sorted(self.edge_meshes.items())},
            "intervals": {eid: em.n_intervals for eid, em in sorted(self.edge_meshes.items())},
            "truncation": dict(sorted(self.truncations.items())),
            "dofs": int(self.n_dofs),
        }

    def save_metadata(self, path):
        Path(path).write_text(json.dumps(self.to_metadata(), indent=2, sort_keys=True))


def build_mesh(g: MetricGraph, target_h, truncation_T) -> Mesh:
    """Discretize `g`.

    `target_h` is an upper bound for the grid spacing (scalar, or dict by
    edge id); each bounded edge of length L gets ceil(L/h) intervals.
    `truncation_T` (scalar or dict by half-line id) is where half-lines
    are cut off with a Dirichlet-0 end.
    """
    def h_for(eid):
        h = target_h.get(eid) if isinstance(target_h, dict) else target_h
        if h is None or not h > 0:
            raise MeshError(f"target_h must be positive (edge {eid})")
        return float(h)

    def t_for(eid):
        t = truncation_T.get(eid) if isinstance(truncation_T, dict) else truncation_T
        if t is None or not t > 0:
            raise MeshError(f"truncation_T must be positive (edge {eid})")
        return float(t)

    for e in g.bounded_edges:
        if h_for(e.id) >= e.length:
            raise MeshError(
                f"target_h {h_for(e.id)} is not below the length {e.length} of edge {e.id}"
            )

    vertex_node = {v: i for i, v in enumerate(g.vertices)}
    next_node = len(g.vertices)
    edge_meshes = {}
    dirichlet = []
    truncations = {}
    for e in g.edges:  # declaration order fixes node numbering
        if e.is_bounded:
            n = max(1, math.ceil(e.length / h_for(e.id) - 1e-12))
            h = e.length / n
            interior = np.arange(next_node, next_node + n - 1)
            next_node += n - 1
            ids = np.concatenate((
                [vertex_node[e.src]], interior, [vertex_node[e.dst]],
            )).astype(np.int64)
        else:
            T = t_for(e.id)
            n = max(1, math.ceil(T / h_for(e.id) - 1e-12))
            h = T / n
            tail = np.arange(next_node, next_node + n)
            next_node += n
            ids = np.concatenate(([vertex_node[e.src]], tail)).astype(np.int64)
            dirichlet.append(ids[-1])
            truncations[e.id] = T
        edge_meshes[e.id] = EdgeMesh(e.id, h, n, ids, e.nonlinear, e.is_half_line)
    return Mesh(g, edge_meshes, next_node, np.array(dirichlet, dtype=np.int64),
                vertex_node, truncations)


def default_spacing(g: MetricGraph, p: float, mu: float, nodes_per_width: int = 20):
    """Spacing that resolves the soliton width mu^-beta by >= `nodes_per_width`
    nodes and every core edge by >= 8 intervals."""
    beta = (p - 2.0) / (6.0 - p)
    lmin = min(e.length for e in g.bounded_edges)
    return min(lmin / 8.0, mu ** (-beta) / nodes_per_width)


def default_truncation(lambda_est: float, tol: float = 1e-10) -> float:
    """Truncation T with exp(-sqrt(lambda)*T) < tol, for decay rate
    sqrt(lambda) on the half-lines."""
    if lambda_est <= 0:
        raise MeshError("decay estimate requires a positive multiplier")
    return -math.log(tol) / math.sqrt(lambda_est)


class GraphFunction:
    """Piecewise-linear function on a mesh, stored by free-dof values."""

    __slots__ = ("mesh", "values")

    def __init__(self, mesh: Mesh, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (mesh.n_dofs,):
            raise MeshError("dof vector has the wrong length")
        if not np.all(np.isfinite(values)):
            raise MeshError("non-finite dof values")
        self.mesh = mesh
        self.values = values

    @classmethod
    def from_node_values(cls, mesh: Mesh, full_values):
        full_values = np.asarray(full_values, dtype=float)
        return cls(mesh, full_values[mesh.free_nodes])

    def full_values(self) -> np.ndarray:
        full = np.zeros(self.mesh.n_nodes)
        full[self.mesh.free_nodes] = self.values
        return full

    # -- measures ---------------------------------------------------------

    def mass(self) -> float:
        """Exact squared L2 norm of the piecewise-linear function."""
        return float(self.values @ (self.mesh.M @ self.values))

    def l2_inner(self, other: "GraphFunction") -> float:
        self._check_mesh(other)
        return float(self.values @ (self.mesh.M @ other.values))

    def l2_distance(self, other: "GraphFunction") -> float:
        d = self - other
        return math.sqrt(max(d.mass(), 0.0))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def h1_norm(self) -> float:
        K, M = self.mesh.matrices()
        v = self.values
        return math.sqrt(max(float(v @ (K @ v) + v @ (M @ v)), 0.0))

    # -- algebra ----------------------------------------------------------

    def _check_mesh(self, other):
        if other.mesh is not self.mesh:
            raise MeshError("functions live on different meshes")

    def __add__(self, other):
        self._check_mesh(other)
        return GraphFunction(self.mesh, self.values + other.values)

    def __sub__(self, other):
        self._check_mesh(other)
        return GraphFunction(self.mesh, self.values - other.values)

    def __mul__(self, c):
        return GraphFunction(self.mesh, self.values * float(c))

    __rmul__ = __mul__

    def __neg__(self):
        return GraphFunction(self.mesh, -self.values)

    def renormalized(self, mu: float) -> "GraphFunction":
        m = self.mass()
        if m <= 0:
            raise MeshError("cannot renormalize the zero function")
        return self * math.sqrt(mu / m)

    # -- evaluation and export ---------------------------------------------

    def edge_values(self, edge_id):
        em = self.mesh.edge_meshes[edge_id]
        return em.coords, self.full_values()[em.node_ids]

    def eval_edge(self, edge_id, x):
        """Piecewise-linear evaluation along one edge (clamped to [0, extent])."""
        em = self.mesh.edge_meshes[edge_id]
        xs = np.clip(np.asarray(x, dtype=float), 0.0, em.extent)
        vals = self.full_values()[em.node_ids]
        return np.interp(xs, em.coords, vals)

    def to_csv(self, path):
        """CSV dump with columns (edge_id, x, value)."""
        full = self.full_values()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["edge_id", "x", "value"])
            for eid in sorted(self.mesh.edge_meshes):
                em = self.mesh.edge_meshes[eid]
                for x, v in zip(em.coords, full[em.node_ids]):
                    w.writerow([eid, f"{x:.12g}", f"{v:.12g}"])


# -- elementwise operators ----------------------------------------------
#
# These run on full node vectors so they can be evaluated in an arbitrary
# dtype (np.longdouble for the high-accuracy residuals used to certify
# solver output; float64 rows of K lose ~1e-10 to cancellation on fine
# meshes, which is too coarse next to a 1e-7 dual-residual target).

def stiffness_apply(mesh: Mesh, u_full, dtype=None):
    u = np.asarray(u_full, dtype=dtype) if dtype else np.asarray(u_full)
    out = np.zeros(mesh.n_nodes, dtype=u.dtype)
    for eid in sorted(mesh.edge_meshes):
        em = mesh.edge_meshes[eid]
        ul = u[em.node_ids[:-1]]
        ur = u[em.node_ids[1:]]
        d = (ul - ur) / u.dtype.type(em.h)
        np.add.at(out, em.node_ids[:-1], d)
        np.add.at(out, em.node_ids[1:], -d)
    return out

def mass_apply(mesh: Mesh, u_full, dtype=None):
    u = np.asarray(u_full, dtype=dtype) if dtype else np.asarray(u_full)
    out = np.zeros(mesh.n_nodes, dtype=u.dtype)
    for eid in sorted(mesh.edge_meshes):
        em = mesh.edge_meshes[eid]
        ul = u[em.node_ids[:-1]]
        ur = u[em.node_ids[1:]]
        h6 = u.dtype.type(em.h) / u.dtype.type(6)
        np.add.at(out, em.node_ids[:-1], h6 * (2 * ul + ur))
        np.add.at(out, em.node_ids[1:], h6 * (ul + 2 * ur))
    return out


def _gauss_values(em: EdgeMesh, u_full):
    ul = u_full[em.node_ids[:-1]][:, None]
    ur = u_full[em.node_ids[1:]][:, None]
    gx = GAUSS_X.astype(u_full.dtype)
    return ul * (1 - gx) + ur * gx  # shape (n_intervals, 3)


def lp_integral(mesh: Mesh, u_full, p: float, region: str = "nonlinear"):
    """integral of |u|^p over the chosen region ('nonlinear' edges, the
    'core', or 'all' edges), by 3-point Gauss on each interval."""
    u = np.asarray(u_full)
    total = u.dtype.type(0)
    gw = GAUSS_W.astype(u.dtype)
    for eid in sorted(mesh.edge_meshes):
        em = mesh.edge_meshes[eid]
        if region == "nonlinear" and not em.nonlinear:
            continue
        if region == "core" and em.is_half_line:
            continue
        uq = _gauss_values(em, u)
        total += u.dtype.type(em.h) * np.sum(np.abs(uq) ** u.dtype.type(p) @ gw)
    return float(total) if u.dtype == np.float64 else total


def nonlinear_load(mesh: Mesh, u_full, p: float, dtype=None):
    """Load vector of the core-localized nonlinearity:
    n_i = integral over nonlinear edges of |u|^(p-2) u phi_i."""
    u = np.asarray(u_full, dtype=dtype) if dtype else np.asarray(u_full)
    out = np.zeros(mesh.n_nodes, dtype=u.dtype)
    gx = GAUSS_X.astype(u.dtype)
    gw = GAUSS_W.astype(u.dtype)
    pm2 = u.dtype.type(p - 2)
    for eid in sorted(mesh.edge_meshes):
        em = mesh.edge_meshes[eid]
        if not em.nonlinear:
            continue
        uq = _gauss_values(em, u)
        fq = np.abs(uq) ** pm2 * uq
        np.add.at(out, em.node_ids[:-1], u.dtype.type(em.h) * (fq * (1 - gx)) @ gw)
        np.add.at(out, em.node_ids[1:], u.dtype.type(em.h) * (fq * gx) @ gw)
    return out


def nonlinear_jacobian(mesh: Mesh, u_full, p: float):
    """Weighted mass matrix of the linearized nonlinearity,
    W_ij = integral (p-1) |u|^(p-2) phi_i phi_j over nonlinear edges
    (same Gauss rule as the load, so W is its exact derivative)."""
    u = np.asarray(u_full, dtype=float)
    rows, cols, vals = [], [], []
    for eid in sorted(mesh.edge_meshes):
        em = mesh.edge_meshes[eid]
        if not em.nonlinear:
            continue
        uq = _gauss_values(em, u)
        wq = (p - 1.0) * np.abs(uq) ** (p - 2.0) * (em.h * GAUSS_W)
        left = em.node_ids[:-1]
        right = em.node_ids[1:]
        bl = 1 - GAUSS_X
        br = GAUSS_X
        for r, c, basis in (
            (left, left, bl * bl),
            (left, right, bl * br),
            (right, left, br * bl),
            (right, right, br * br),
        ):
            rows.append(r)
            cols.append(c)
            vals.append(wq @ basis)
    if not rows:
        return sp.csr_matrix((mesh.n_nodes, mesh.n_nodes))
    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(mesh.n_nodes, mesh.n_nodes),
    ).tocsr()


def stationarity_residual(mesh: Mesh, u: GraphFunction, lam: float, p: float,
                          dtype=np.longdouble):
    """Free-dof residual of K u + lam M u - N(u), evaluated elementwise in
    the given dtype and returned in that dtype."""
    full = u.full_values()
    r = (stiffness_apply(mesh, full, dtype=dtype)
         + dtype(lam) * mass_apply(mesh, full, dtype=dtype)
         - nonlinear_load(mesh, full, p, dtype=dtype))
    return r[mesh.free_nodes]


def prolong(u: GraphFunction, target: Mesh) -> GraphFunction:
    """Resample a function onto another mesh of the same graph (piecewise
    linear evaluation edge by edge). Used for mesh-continuation solves."""
    if set(u.mesh.edge_meshes) != set(target.edge_meshes):
        raise MeshError("meshes discretize different graphs")
    profiles = {}
    full = u.full_values()
    for eid, em in u.mesh.edge_meshes.items():
        coords = em.coords
        vals = full[em.node_ids]
        profiles[eid] = (lambda x, c=coords, v=vals:
                         np.interp(np.clip(x, c[0], c[-1]), c, v))
    return target.interpolate(profiles)


def kirchhoff_residual(u: GraphFunction, lam: float, p: float) -> dict:
    """Per-vertex defect of the Kirchhoff condition.

    The vertex row of K u + lam M u - N(u) approximates minus the sum of
    the outgoing edge derivatives at the vertex (hat functions have unit
    vertex value, so the row is already in derivative units): it vanishes
    for discrete stationary points and converges to the analytic
    derivative sum as h -> 0 for smooth data.
    """
    mesh = u.mesh
    r = stationarity_residual(mesh, u, lam, p)
    out = {}
    for v, node in mesh.vertex_node.items():
        out[v] = float(r[mesh.node_to_dof[node]])
    return out
