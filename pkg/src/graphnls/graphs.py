"""Metric graphs with bounded edges and half-lines.

A graph is a multigraph whose edges are real intervals: bounded edges
[0, length] run from their `from` vertex (x=0) to their `to` vertex
(x=length); half-lines [0, inf) are attached at a single vertex (x=0).
The compact core is the subgraph of all bounded edges; the cubic-type
nonlinearity of the solver acts only on edges flagged `nonlinear`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path


class GraphSpecError(ValueError):
    """Raised for structurally invalid graph specifications."""


@dataclass(frozen=True)
class Edge:
    """One edge of a metric graph.

    Bounded edges carry a finite positive length and two endpoints
    (`src`, `dst`); self-loops (src == dst) and parallel edges are fine.
    Half-lines have `dst=None`, `length=None` and start at `src`.
    """

    id: str
    src: str
    dst: str | None
    length: float | None
    nonlinear: bool = False

    @property
    def is_half_line(self) -> bool:
        return self.dst is None

    @property
    def is_bounded(self) -> bool:
        return self.dst is not None

    def __post_init__(self):
        if self.is_half_line:
            if self.length is not None:
                raise GraphSpecError(f"edge {self.id}: half-line with a length")
            if self.nonlinear:
                raise GraphSpecError(
                    f"edge {self.id}: nonlinear flag on a half-line "
                    "(the nonlinearity lives on bounded edges only)"
                )
        else:
            if self.length is None or not self.length > 0:
                raise GraphSpecError(f"edge {self.id}: nonpositive length")


@dataclass(frozen=True)
class MetricGraph:
    """Connected metric graph, immutable after construction.

    Construction checks structural validity (endpoints exist, lengths
    positive, connectivity through bounded edges). Problem-level
    requirements -- at least one half-line and a nonempty compact core --
    are enforced by :func:`parse_graph`, which is the entry point for
    solver input; compact test fixtures may build instances directly.
    """

    vertices: tuple[str, ...]
    edges: tuple[Edge, ...]
    adjacency: dict[str, tuple[str, ...]] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(set(self.vertices)) != len(self.vertices):
            raise GraphSpecError("duplicate vertex ids")
        if len({e.id for e in self.edges}) != len(self.edges):
            raise GraphSpecError("duplicate edge ids")
        vset = set(self.vertices)
        adj: dict[str, list[str]] = {v: [] for v in self.vertices}
        for e in self.edges:
            if e.src not in vset:
                raise GraphSpecError(f"edge {e.id}: unknown vertex {e.src!r}")
            if e.is_bounded:
                if e.dst not in vset:
                    raise GraphSpecError(f"edge {e.id}: unknown vertex {e.dst!r}")
                adj[e.src].append(e.id)
                if e.dst != e.src:
                    adj[e.dst].append(e.id)
            else:
                adj[e.src].append(e.id)
        object.__setattr__(
            self, "adjacency", {v: tuple(ids) for v, ids in adj.items()}
        )
        if not self._core_connected():
            raise GraphSpecError(
                "disconnected graph: vertices are not all joined by bounded edges "
                "(half-lines are dead ends and cannot connect two vertices)"
            )

    def _core_connected(self) -> bool:
        # Half-lines never join two vertices, so graph connectivity is
        # exactly connectivity of the vertex multigraph of bounded edges.
        if len(self.vertices) <= 1:
            return True
        neigh: dict[str, set[str]] = {v: set() for v in self.vertices}
        for e in self.edges:
            if e.is_bounded:
                neigh[e.src].add(e.dst)
                neigh[e.dst].add(e.src)
        seen = {self.vertices[0]}
        stack = [self.vertices[0]]
        while stack:
            for w in neigh[stack.pop()]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == len(self.vertices)

    def edge(self, edge_id: str) -> Edge:
        for e in self.edges:
            if e.id == edge_id:
                return e
        raise KeyError(edge_id)

    @property
    def half_lines(self) -> tuple[Edge, ...]:
        return tuple(e for e in self.edges if e.is_half_line)

    @property
    def bounded_edges(self) -> tuple[Edge, ...]:
        return tuple(e for e in self.edges if e.is_bounded)

    def require_noncompact_with_core(self):
        """Enforce the standing assumptions: >=1 half-line, nonempty core."""
        if not self.half_lines:
            raise GraphSpecError("graph has no half-line (compact graph)")
        if not self.bounded_edges:
            raise GraphSpecError("empty compact core: no bounded edges")


def parse_graph(spec) -> MetricGraph:
    """Parse and validate a graph specification.

    `spec` may be a dict, a JSON string, or a path to a JSON file with
    fields `vertices` (list of ids) and `edges`
    (list of {id, from, to|null, length|null, kind, nonlinear}).
    `kind` is "bounded" or "half_line".
    """
    if isinstance(spec, (str, Path)):
        p = Path(spec)
        if p.exists():
            text = p.read_text(encoding="utf-8")
        elif isinstance(spec, Path):
            raise GraphSpecError(f"no such graph file: {spec}")
        else:
            text = spec
        try:
            spec = json.loads(text)
        except json.JSONDecodeError as exc:
            raise GraphSpecError(f"graph spec is not valid JSON: {exc}") from exc
    if not isinstance(spec, dict):
        raise GraphSpecError("graph spec must be a JSON object")
    try:
        vertices = tuple(str(v) for v in spec["vertices"])
        raw_edges = spec["edges"]
    except KeyError as exc:
        raise GraphSpecError(f"graph spec missing field {exc}") from exc

    edges = []
    for item in raw_edges:
        kind = item.get("kind")
        if kind not in ("bounded", "half_line"):
            raise GraphSpecError(f"edge {item.get('id')!r}: bad kind {kind!r}")
        to = item.get("to")
        length = item.get("length")
        if kind == "half_line":
            if to is not None:
                raise GraphSpecError(
                    f"edge {item.get('id')!r}: half-line must have to=null"
                )
            length = None
        else:
            if to is None:
                raise GraphSpecError(f"edge {item.get('id')!r}: bounded edge needs 'to'")
            if length is None:
                raise GraphSpecError(f"edge {item.get('id')!r}: bounded edge needs 'length'")
            length = float(length)
        edges.append(
            Edge(
                id=str(item["id"]),
                src=str(item["from"]),
                dst=None if to is None else str(to),
                length=length,
                nonlinear=bool(item.get("nonlinear", False)),
            )
        )
    g = MetricGraph(vertices=vertices, edges=tuple(edges))
    g.require_noncompact_with_core()
    return g


def compact_core(g: MetricGraph) -> set[str]:
    """Edge ids of the compact core (all bounded edges).

    Re-checks that the core is connected as a subgraph, which must hold
    whenever the full graph is connected.
    """
    core = {e.id for e in g.edges if e.is_bounded}
    if core:
        core_vertices = set()
        for e in g.bounded_edges:
            core_vertices.add(e.src)
            core_vertices.add(e.dst)
        sub = MetricGraph(
            vertices=tuple(v for v in g.vertices if v in core_vertices),
            edges=g.bounded_edges,
        )  # construction re-runs the connectivity check
        assert sub is not None
    return core


def longest_core_edge(g: MetricGraph) -> tuple[str, float]:
    """The longest bounded edge; ties broken by smallest edge id."""
    core = [e for e in g.edges if e.is_bounded]
    if not core:
        raise GraphSpecError("empty compact core")
    best = max(core, key=lambda e: (e.length, ), default=None)
    # Deterministic tie-break: among maximal lengths, smallest id.
    max_len = best.length
    winner = min(e.id for e in core if e.length == max_len)
    return winner, max_len


def interval_with_half_lines(length: float = 4.0, nonlinear: bool = True) -> MetricGraph:
    """A single nonlinear edge of the given length with one half-line
    attached at each endpoint. The smallest graph satisfying all
    standing assumptions; used widely in tests and demos."""
    return MetricGraph(
        vertices=("v1", "v2"),
        edges=(
            Edge("e1", "v1", "v2", float(length), nonlinear=nonlinear),
            Edge("h1", "v1", None, None),
            Edge("h2", "v2", None, None),
        ),
    )
