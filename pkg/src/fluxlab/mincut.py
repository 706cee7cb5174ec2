"""Max-flow/min-cut on charge graphs and the charge-elimination procedure.

Real-valued capacities rule out plain Ford-Fulkerson (arbitrary augmenting
paths need not terminate on irrational data), so augmentation follows
shortest paths (Edmonds-Karp), whose augmentation count is polynomial in the
graph size independent of the capacity values.  Minimum cuts are selected
deterministically as the residual-reachable source side, the inclusion-wise
(hence lexicographically) smallest among all minimum cuts.

Charge elimination keeps the boundary-to-boundary traffic fixed, routes the
maximal boundary-to-boundary flow through the undirected charge graph
(traversing an interior edge backwards means flipping those paths), and
multiplies the leftover interior edges by zero.  Under the hypotheses (total
boundary mass < 1, boundary degree 0) every boundary-incident edge ends up
saturated, so the realized field keeps its trace while losing all interior
divergence.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Dict, List, Tuple

from .chargegraph import (
    BOUNDARY_IN,
    BOUNDARY_OUT,
    ChargeGraph,
    Edge,
    GraphOp,
    Vertex,
    apply_ops_to_graph,
    kirchhoff_defect,
    vertex_key,
)
from .errors import EmptyTerminalSet, HypothesisViolated, ShapeMismatch

_SRC = ("__source__",)
_SNK = ("__sink__",)

DUALITY_TOL = 1e-9


@dataclass
class CutResult:
    value: float
    cut_edges: List[Edge]
    side: frozenset


class _Network:
    """Residual network with deterministic adjacency order."""

    def __init__(self):
        self.adj: Dict[Vertex, list] = {}
        self.cap: Dict[Tuple[Vertex, Vertex], float] = {}

    def add(self, u, v, c):
        key = (u, v)
        if key not in self.cap:
            self.cap[key] = 0.0
            self.adj.setdefault(u, []).append(v)
            if (v, u) not in self.cap:
                self.cap[(v, u)] = 0.0
                self.adj.setdefault(v, []).append(u)
        self.cap[key] += c

    def bfs(self, s, t, eps):
        parent = {s: None}
        queue = deque([s])
        while queue:
            u = queue.popleft()
            if u == t:
                break
            for v in self.adj.get(u, ()):
                if v not in parent and self.cap[(u, v)] > eps:
                    parent[v] = u
                    queue.append(v)
        if t not in parent:
            return None
        path = []
        v = t
        while parent[v] is not None:
            u = parent[v]
            path.append((u, v))
            v = u
        return list(reversed(path))

    def reachable(self, s, eps):
        seen = {s}
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for v in self.adj.get(u, ()):
                if v not in seen and self.cap[(u, v)] > eps:
                    seen.add(v)
                    queue.append(v)
        return seen


def _build_network(G: ChargeGraph, sources, sinks, undirected: bool) -> _Network:
    net = _Network()
    for (u, v), w in sorted(G.edges.items(),
                            key=lambda e: (vertex_key(e[0][0]), vertex_key(e[0][1]))):
        net.add(u, v, w)
        if undirected:
            net.add(v, u, w)
    inf = float("inf")
    for s in sorted(sources, key=vertex_key):
        net.add(_SRC, s, inf)
    for t in sorted(sinks, key=vertex_key):
        net.add(t, _SNK, inf)
    return net


def max_flow(G: ChargeGraph, sources, sinks, undirected: bool = False,
             ) -> Tuple[Dict[Edge, float], float]:
    """Maximum flow between vertex sets; returns (net flow per edge, value).

    With ``undirected=True`` every edge may be traversed in either direction
    up to its weight and the per-edge flow is signed along the edge
    direction.
    """
    sources, sinks = set(sources), set(sinks)
    if not sources or not sinks:
        raise EmptyTerminalSet("sources and sinks must both be nonempty")
    if sources & sinks:
        raise ValueError("sources and sinks must be disjoint")
    net = _build_network(G, sources, sinks, undirected)
    max_cap = max((w for w in G.edges.values()), default=0.0)
    eps = 1e-12 * max(max_cap, 1.0)

    value = 0.0
    while True:
        path = net.bfs(_SRC, _SNK, eps)
        if path is None:
            break
        bottleneck = min(net.cap[(u, v)] for u, v in path)
        for u, v in path:
            net.cap[(u, v)] -= bottleneck
            net.cap[(v, u)] += bottleneck
        value += bottleneck

    flows: Dict[Edge, float] = {}
    for (u, v), w in G.edges.items():
        sent = w - net.cap[(u, v)]
        if undirected:
            # both directions started at w; the difference is twice the net flow
            back = w - net.cap[(v, u)]
            sent = (sent - back) / 2.0
        flows[(u, v)] = sent
    return flows, value


def min_cut(G: ChargeGraph, sources, sinks, undirected: bool = False) -> CutResult:
    """Deterministic minimum cut: the residual-reachable source side."""
    sources, sinks = set(sources), set(sinks)
    if not sources or not sinks:
        raise EmptyTerminalSet("sources and sinks must both be nonempty")
    if sources & sinks:
        raise ValueError("sources and sinks must be disjoint")
    net = _build_network(G, sources, sinks, undirected)
    max_cap = max((w for w in G.edges.values()), default=0.0)
    eps = 1e-12 * max(max_cap, 1.0)
    while True:
        path = net.bfs(_SRC, _SNK, eps)
        if path is None:
            break
        bottleneck = min(net.cap[(u, v)] for u, v in path)
        for u, v in path:
            net.cap[(u, v)] -= bottleneck
            net.cap[(v, u)] += bottleneck
    side = net.reachable(_SRC, eps) - {_SRC}
    cut_edges = []
    for (u, v) in sorted(G.edges, key=lambda e: (vertex_key(e[0]), vertex_key(e[1]))):
        if (u in side) != (v in side):
            if u in side or undirected:
                cut_edges.append((u, v))
    value = sum(G.edges[e] for e in cut_edges)
    return CutResult(value=value, cut_edges=cut_edges, side=frozenset(side))


# ---------------------------------------------------------------------------
# charge elimination (regular case)


def eliminate_charges(G: ChargeGraph) -> Tuple[List[GraphOp], ChargeGraph, bool]:
    """Remove all interior charges by elementary operations.

    Requires total boundary mass < 1 and boundary degree 0; raises
    :class:`HypothesisViolated` otherwise (the caller must shrink the ball or
    re-slice).  Returns (ops, modified graph, energy_decreased).
    """
    sigma_in = G.out_weight(BOUNDARY_IN)
    sigma_out = G.in_weight(BOUNDARY_OUT)
    mass = sigma_in + sigma_out
    tol = DUALITY_TOL * max(1.0, mass)
    if mass >= 1.0:
        raise HypothesisViolated(f"boundary mass {mass} >= 1")
    if abs(sigma_in - sigma_out) > max(tol, 1e-9):
        raise HypothesisViolated(
            f"boundary degree nonzero: inflow {sigma_in} vs outflow {sigma_out}")
    if not G.charge_vertices():
        return [], G, False

    interior = ChargeGraph(
        charges=dict(G.charges),
        edges={e: w for e, w in G.edges.items()
               if e != (BOUNDARY_IN, BOUNDARY_OUT)})
    routed: Dict[Edge, float] = {e: 0.0 for e in interior.edges}
    if sigma_in > 0:
        flows, value = max_flow(interior, {BOUNDARY_IN}, {BOUNDARY_OUT},
                                undirected=True)
        direct = G.edges.get((BOUNDARY_IN, BOUNDARY_OUT), 0.0)
        expect = sigma_in - direct
        if abs(value - expect) > max(1e-9, 1e-9 * max(1.0, expect)):
            raise HypothesisViolated(
                f"max flow {value} does not saturate the boundary mass {expect}; "
                "the graph is not an admissible integer-charge graph")
        routed = flows

    ops: List[GraphOp] = []
    energy_decreased = False
    for e in sorted(interior.edges, key=lambda e: (vertex_key(e[0]), vertex_key(e[1]))):
        w = interior.edges[e]
        f = routed.get(e, 0.0)
        alpha = min(1.0, max(-1.0, f / w))
        if abs(alpha) < 1e-12:
            alpha = 0.0
        if abs(alpha - 1.0) < 1e-12:
            continue  # kept edge, identity factor
        if BOUNDARY_IN in e or BOUNDARY_OUT in e:
            raise HypothesisViolated(
                f"boundary edge {e} not saturated (factor {alpha}); "
                "inconsistent charge graph")
        ops.append(GraphOp(edge=e, factor=alpha))
        if w > 0:
            energy_decreased = True

    G2 = apply_ops_to_graph(G, ops)
    defect = kirchhoff_defect(G2)
    if defect > 1e-8 * max(1.0, mass + sum(abs(q) for q in G.charges.values())):
        raise HypothesisViolated(f"elimination left a Kirchhoff defect {defect}")
    return ops, G2, energy_decreased


# ---------------------------------------------------------------------------
# the generic-case lemma


def generic_case_cut(G: ChargeGraph, upper_cells, lower_cells) -> CutResult:
    """Resolve the generic leftover shape: the full source-side arrow group is
    itself a minimal cut.

    ``upper_cells``/``lower_cells`` partition the charge vertices into the two
    components of the lemma's diagram.  The dotted arrows (boundary-in to
    lower minus, cross arrows, upper plus to boundary-out) must form a
    minimal cut; the returned cut consists of all boundary-in arrows, with
    the cross group ``d`` certified to carry zero weight.
    """
    upper, lower = set(map(tuple, upper_cells)), set(map(tuple, lower_cells))
    cells = set(G.charge_vertices())
    if upper | lower != cells or upper & lower:
        raise ShapeMismatch("upper/lower groups must partition the charge vertices")

    def side(v):
        if isinstance(v, str):
            return v
        return "upper" if v in upper else "lower"

    def polarity(v):
        q = G.charges.get(v, 0)
        if q == 0:
            raise ShapeMismatch(f"charge vertex {v} carries zero charge")
        return "+" if q > 0 else "-"

    groups = {k: [] for k in ("a", "b", "c", "d", "e", "f", "nu_top", "nu_bot")}
    for (u, v), w in G.edges.items():
        su, sv = side(u), side(v)
        if su == BOUNDARY_IN and sv == "upper" and polarity(v) == "-":
            groups["a"].append((u, v))
        elif su == BOUNDARY_IN and sv == "lower" and polarity(v) == "-":
            groups["b"].append((u, v))
        elif su == "upper" and polarity(u) == "+" and sv == "lower" and polarity(v) == "-":
            groups["c"].append((u, v))
        elif su == "lower" and polarity(u) == "+" and sv == "upper" and polarity(v) == "-":
            groups["d"].append((u, v))
        elif su == "upper" and polarity(u) == "+" and sv == BOUNDARY_OUT:
            groups["e"].append((u, v))
        elif su == "lower" and polarity(u) == "+" and sv == BOUNDARY_OUT:
            groups["f"].append((u, v))
        elif su == "upper" and polarity(u) == "+" and sv == "upper" and polarity(v) == "-":
            groups["nu_top"].append((u, v))
        elif su == "lower" and polarity(u) == "+" and sv == "lower" and polarity(v) == "-":
            groups["nu_bot"].append((u, v))
        else:
            raise ShapeMismatch(f"edge {u} -> {v} does not fit the lemma's diagram")

    def gw(name):
        return sum(G.edges[e] for e in groups[name])

    boundary_weight = gw("a") + gw("b")
    if boundary_weight >= 0.5:
        raise HypothesisViolated(f"|a|+|b| = {boundary_weight} >= 1/2")
    if abs((gw("a") + gw("b")) - (gw("e") + gw("f"))) > DUALITY_TOL:
        raise HypothesisViolated("zero-degree balance |a|+|b| = |e|+|f| violated")

    given_cut = groups["b"] + groups["c"] + groups["d"] + groups["e"]
    given_value = sum(G.edges[e] for e in given_cut)
    reference = min_cut(G, {BOUNDARY_IN}, {BOUNDARY_OUT}, undirected=True)
    if given_value > reference.value + DUALITY_TOL:
        raise HypothesisViolated(
            f"the b,c,d,e arrows (weight {given_value}) are not a minimal cut "
            f"(minimum {reference.value})")
    if gw("d") > DUALITY_TOL:
        raise HypothesisViolated(
            f"|d| = {gw('d')} > 0 contradicts minimality of the given cut")

    value = gw("a") + gw("b")
    if abs(value - reference.value) > DUALITY_TOL:
        raise HypothesisViolated(
            f"cut a,b (weight {value}) does not match the minimal value "
            f"{reference.value}")
    cut_edges = sorted(groups["a"] + groups["b"],
                       key=lambda e: (vertex_key(e[0]), vertex_key(e[1])))
    return CutResult(value=value, cut_edges=cut_edges,
                     side=frozenset({BOUNDARY_IN}))
