"""Weighted directed graph encoding of a path decomposition.

Vertices are the two boundary super-vertices (split by flux sign, the ball
boundary being connected) plus one vertex per charged cell carrying its
signed multiplicity.  Edges point along path orientation, from source-like
anchors (inflow boundary, positive charges) to sink-like anchors (outflow
boundary, negative charges), weighted by the total path mass between the two
anchor classes.  Cycles carry no boundary and are excluded.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from .decompose import PathDecomposition, recompose
from .errors import AnchorMismatch, FactorOutOfRange, UnknownEdge
from .lattice import BoundaryData, Cell, ChargeSet, FluxField

BOUNDARY_IN = "boundary_in"
BOUNDARY_OUT = "boundary_out"

Vertex = object  # BOUNDARY_IN / BOUNDARY_OUT or a cell tuple
Edge = Tuple[Vertex, Vertex]

#: path-weight sums are compared against integer charges within this slack
BALANCE_TOL = 1e-6


def vertex_key(v: Vertex):
    """Deterministic sort key over the mixed vertex namespace."""
    return (0, v, ()) if isinstance(v, str) else (1, "", tuple(v))


@dataclass
class GraphOp:
    """Elementary operation on one edge: scale by alpha in [-1, 1]."""

    edge: Edge
    factor: float

    def __post_init__(self):
        if not -1.0 <= self.factor <= 1.0:
            raise FactorOutOfRange(f"factor {self.factor} outside [-1, 1]")


@dataclass
class ChargeGraph:
    charges: Dict[Cell, int]                      # signed multiplicity per cell vertex
    edges: Dict[Edge, float]                      # weight > 0
    provenance: Dict[Edge, List[int]] = field(default_factory=dict)

    def vertices(self) -> list:
        verts = {BOUNDARY_IN, BOUNDARY_OUT}
        verts.update(self.charges)
        for u, v in self.edges:
            verts.add(u)
            verts.add(v)
        return sorted(verts, key=vertex_key)

    def out_weight(self, v: Vertex) -> float:
        return sum(w for (a, b), w in self.edges.items() if a == v)

    def in_weight(self, v: Vertex) -> float:
        return sum(w for (a, b), w in self.edges.items() if b == v)

    def boundary_mass(self) -> float:
        """Total path mass anchored on the boundary (both sign classes)."""
        return self.out_weight(BOUNDARY_IN) + self.in_weight(BOUNDARY_OUT)

    def charge_vertices(self) -> list:
        return sorted((v for v in self.vertices() if not isinstance(v, str)),
                      key=vertex_key)


def _anchor_vertex(anchor, role: str) -> Vertex:
    kind, idx = anchor
    if kind == "face":
        return BOUNDARY_IN if role == "start" else BOUNDARY_OUT
    return tuple(idx)


def build_graph(D: PathDecomposition, B: BoundaryData) -> ChargeGraph:
    """Group path masses by (start class, end class).

    Raises :class:`AnchorMismatch` when anchors are inconsistent with the
    boundary data / the charge balance implied by the decomposition.
    """
    dom = D.domain
    charges: Dict[Cell, int] = {}
    edges: Dict[Edge, float] = {}
    provenance: Dict[Edge, List[int]] = {}
    out_w: Dict[Cell, float] = {}
    in_w: Dict[Cell, float] = {}

    for n, p in enumerate(D.paths):
        for anchor, role in ((p.start_anchor, "start"), (p.end_anchor, "end")):
            kind, idx = anchor
            if kind == "face":
                ax = idx[0]
                if dom.cls[ax][tuple(idx[1:])] != 2:
                    raise AnchorMismatch(f"anchor face {idx} is not a boundary face")
                trace = B[tuple(idx)]
                if role == "start" and trace > 0:
                    raise AnchorMismatch(f"path {n} starts at an outflow face {idx}")
                if role == "end" and trace < 0:
                    raise AnchorMismatch(f"path {n} ends at an inflow face {idx}")
        u = _anchor_vertex(p.start_anchor, "start")
        v = _anchor_vertex(p.end_anchor, "end")
        if isinstance(u, tuple):
            out_w[u] = out_w.get(u, 0.0) + p.weight
        if isinstance(v, tuple):
            in_w[v] = in_w.get(v, 0.0) + p.weight
        key = (u, v)
        edges[key] = edges.get(key, 0.0) + p.weight
        provenance.setdefault(key, []).append(n)

    for cell, w in out_w.items():
        q = round(w)
        if abs(w - q) > BALANCE_TOL or q <= 0:
            raise AnchorMismatch(
                f"emitting mass {w} at {cell} is not a positive integer charge")
        charges[cell] = q
    for cell, w in in_w.items():
        if cell in charges:
            raise AnchorMismatch(f"cell {cell} anchors both path starts and ends")
        q = round(w)
        if abs(w - q) > BALANCE_TOL or q <= 0:
            raise AnchorMismatch(
                f"absorbing mass {w} at {cell} is not a positive integer charge")
        charges[cell] = -q

    edges = {e: w for e, w in edges.items() if w > 0}
    g = ChargeGraph(charges=charges, edges=edges, provenance=provenance)

    # boundary totals must reproduce the sign-class masses of B
    in_total = sum(-t for t in _boundary_traces(B) if t < 0)
    out_total = sum(t for t in _boundary_traces(B) if t > 0)
    if abs(g.out_weight(BOUNDARY_IN) - in_total) > BALANCE_TOL or \
       abs(g.in_weight(BOUNDARY_OUT) - out_total) > BALANCE_TOL:
        raise AnchorMismatch("boundary path mass does not match the boundary data")
    return g


def _boundary_traces(B: BoundaryData):
    for ax in range(3):
        vals = B.values[ax][B.domain.cls[ax] == 2]
        yield from vals.tolist()


def path_edge(p) -> Edge:
    return (_anchor_vertex(p.start_anchor, "start"),
            _anchor_vertex(p.end_anchor, "end"))


def realize(X: FluxField, D: PathDecomposition, ops: List[GraphOp]) -> FluxField:
    """Recompose with per-path factors given by the product of ops on its edge.

    Negative products flip path orientation; cycles and residual pass through
    unchanged.  Per-face magnitudes never exceed the originals, so neither
    the L^p energy nor the boundary trace mass can increase.
    """
    known_edges = {path_edge(p) for p in D.paths}
    factors: Dict[Edge, float] = {}
    for op in ops:
        if op.edge not in known_edges:
            raise UnknownEdge(f"edge {op.edge} not present in the decomposition")
        factors[op.edge] = factors.get(op.edge, 1.0) * op.factor

    arrays = D.residual.copy_arrays()
    for p in D.paths:
        f = factors.get(path_edge(p), 1.0)
        w = p.weight * f
        if w == 0.0:
            continue
        for (ax, i, j, k), sign in p.steps:
            arrays[ax][i, j, k] += sign * w
    for w, steps in D.cycles:
        for (ax, i, j, k), sign in steps:
            arrays[ax][i, j, k] += sign * w
    return FluxField(D.domain, tuple(arrays))


def kirchhoff_defect(G: ChargeGraph) -> float:
    """Total imbalance |out - in| over charge vertices.

    The imbalance at a cell vertex equals the residual charge the realized
    field carries there, so a zero defect means zero interior divergence.
    """
    return float(sum(abs(G.out_weight(v) - G.in_weight(v))
                     for v in G.charge_vertices()))


def apply_ops_to_graph(G: ChargeGraph, ops: List[GraphOp]) -> ChargeGraph:
    """Graph-level effect of elementary operations.

    Edge weights scale by |product of factors|, negative products flip the
    edge; charges are re-derived from the new imbalances and isolated
    zero-charge vertices are dropped.
    """
    factors: Dict[Edge, float] = {}
    for op in ops:
        if op.edge not in G.edges:
            raise UnknownEdge(f"edge {op.edge} not present in the graph")
        factors[op.edge] = factors.get(op.edge, 1.0) * op.factor

    edges: Dict[Edge, float] = {}
    for e, w in G.edges.items():
        f = factors.get(e, 1.0)
        nw = abs(f) * w
        if nw <= 0.0:
            continue
        key = e if f > 0 else (e[1], e[0])
        edges[key] = edges.get(key, 0.0) + nw

    g = ChargeGraph(charges={}, edges=edges)
    charges = {}
    for v in g.vertices():
        if isinstance(v, str):
            continue
        imbalance = g.out_weight(v) - g.in_weight(v)
        q = int(round(imbalance))
        if q != 0 or g.out_weight(v) > 0 or g.in_weight(v) > 0:
            charges[v] = q
    g.charges = charges
    return g


def to_dot(G: ChargeGraph) -> str:
    """DOT export with weights as edge labels and charges as vertex labels."""
    def name(v):
        if isinstance(v, str):
            return v
        return "c_" + "_".join(str(x) for x in v)

    lines = ["digraph chargegraph {"]
    for v in G.vertices():
        if isinstance(v, str):
            lines.append(f'  {name(v)} [shape=box label="{v}"];')
        else:
            q = G.charges.get(v, 0)
            lines.append(f'  {name(v)} [label="{v} q={q:+d}"];')
    for (u, v), w in sorted(G.edges.items(),
                            key=lambda e: (vertex_key(e[0][0]), vertex_key(e[0][1]))):
        lines.append(f'  {name(u)} -> {name(v)} [label="{w:.6g}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
