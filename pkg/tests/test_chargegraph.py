import numpy as np
import pytest

from fluxlab.chargegraph import (
    BOUNDARY_IN,
    BOUNDARY_OUT,
    GraphOp,
    apply_ops_to_graph,
    build_graph,
    kirchhoff_defect,
    realize,
    to_dot,
)
from fluxlab.decompose import decompose
from fluxlab.errors import (
    AnchorMismatch,
    FactorOutOfRange,
    NonIntegralDivergence,
    UnknownEdge,
)
from fluxlab.lattice import (
    boundary_trace,
    build_domain,
    check_integer_fluxes,
    divergence,
    energy,
    monopole_field,
)
from fluxlab.verify import random_integer_flux_field
from tests.test_decompose import wire_field

P = 1.2


def through_wire():
    """Unit wire entering one boundary face and leaving another."""
    dom = build_domain(6, 1.0)
    import numpy as np
    from fluxlab.lattice import _FACE_SHAPES

    arrays = [np.zeros(s) for s in _FACE_SHAPES(dom.N)]
    # straight line of x-faces through the center row
    j = k = dom.N // 2
    row = [i for i in range(dom.N) if dom.interior[i, j, k]]
    for i in range(row[0], row[-1] + 2):
        arrays[0][i, j, k] = 1.0
    from fluxlab.lattice import FluxField

    return dom, FluxField(dom, tuple(arrays))


def test_boundary_to_boundary_single_edge():
    dom, X = through_wire()
    C = check_integer_fluxes(X)
    assert C.charges == {}
    B = boundary_trace(X)
    D = decompose(X, C)
    G = build_graph(D, B)
    assert set(G.edges) == {(BOUNDARY_IN, BOUNDARY_OUT)}
    assert abs(G.edges[(BOUNDARY_IN, BOUNDARY_OUT)] - 1.0) < 1e-12
    assert kirchhoff_defect(G) == 0.0


def test_monopole_graph_single_edge_weight_one():
    dom = build_domain(16, 1.0)
    X = monopole_field(dom)
    C = check_integer_fluxes(X)
    B = boundary_trace(X)
    D = decompose(X, C)
    G = build_graph(D, B)
    cell = C.cells()[0]
    assert G.charges == {cell: 1}
    assert set(G.edges) == {(cell, BOUNDARY_OUT)}
    assert abs(G.edges[(cell, BOUNDARY_OUT)] - 1.0) < 1e-9
    # boundary totals match the sign classes of B
    assert abs(G.in_weight(BOUNDARY_OUT) - 1.0) < 1e-9
    assert G.out_weight(BOUNDARY_IN) == 0.0


def test_dipole_graph_single_interior_edge():
    dom = build_domain(8, 1.0)
    X = wire_field(dom, [(2, 4, 4), (3, 4, 4), (4, 4, 4), (5, 4, 4)])
    C = check_integer_fluxes(X)
    D = decompose(X, C)
    G = build_graph(D, boundary_trace(X))
    assert set(G.edges) == {((2, 4, 4), (5, 4, 4))}
    assert abs(G.edges[((2, 4, 4), (5, 4, 4))] - 1.0) < 1e-12
    # vertex balance: emitting side totals equal |charge|
    assert abs(G.out_weight((2, 4, 4)) - 1.0) < 1e-12
    assert abs(G.in_weight((5, 4, 4)) - 1.0) < 1e-12
    # the defect formula by hand: each unit charge unbalanced
    assert abs(kirchhoff_defect(G) - 2.0) < 1e-12


def test_anchor_mismatch_on_tampered_boundary():
    dom, X = through_wire()
    D = decompose(X, check_integer_fluxes(X))
    B = boundary_trace(X).scaled(-1.0)  # flips inflow/outflow classes
    with pytest.raises(AnchorMismatch):
        build_graph(D, B)


def test_realize_noop():
    dom, X = through_wire()
    D = decompose(X, check_integer_fluxes(X))
    Xr = realize(X, D, [])
    for ax in range(3):
        assert np.array_equal(Xr.flux[ax], X.flux[ax])


def test_realize_zero_edge_removes_paths():
    dom = build_domain(8, 1.0)
    X = wire_field(dom, [(2, 4, 4), (3, 4, 4), (4, 4, 4), (5, 4, 4)])
    C = check_integer_fluxes(X)
    D = decompose(X, C)
    op = GraphOp(edge=((2, 4, 4), (5, 4, 4)), factor=0.0)
    Xr = realize(X, D, [op])
    assert Xr.total_mass() == 0.0
    assert energy(X, P) - energy(Xr, P) == energy(X, P)  # full dipole energy drop


def test_realize_unknown_edge():
    dom, X = through_wire()
    D = decompose(X, check_integer_fluxes(X))
    with pytest.raises(UnknownEdge):
        realize(X, D, [GraphOp(edge=((0, 0, 0), (1, 1, 1)), factor=0.5)])


def test_graphop_factor_validation():
    with pytest.raises(FactorOutOfRange):
        GraphOp(edge=(BOUNDARY_IN, BOUNDARY_OUT), factor=1.2)


def test_realize_magnitudes_never_increase():
    dom = build_domain(6, 1.0)
    rng = np.random.default_rng(4)
    for _ in range(10):
        X, C = random_integer_flux_field(dom, rng)
        D = decompose(X, C)
        edges = list({(p.start_anchor, p.end_anchor) for p in D.paths})
        if not edges:
            continue
        from fluxlab.chargegraph import path_edge

        real_edges = list({path_edge(p) for p in D.paths})
        target = real_edges[int(rng.integers(len(real_edges)))]
        alpha = float(rng.uniform(-1, 1))
        Xr = realize(X, D, [GraphOp(edge=target, factor=alpha)])
        for ax in range(3):
            assert np.all(np.abs(Xr.flux[ax]) <= np.abs(X.flux[ax]) + 1e-12)
        # boundary trace mass cannot increase
        assert boundary_trace(Xr, tol=0.49).mass() <= \
            boundary_trace(X, tol=0.49).mass() + 1e-9


def test_integrality_iff_integral_imbalance():
    # fractional factor on a charge edge leaves non-integral divergence
    dom = build_domain(8, 1.0)
    X = wire_field(dom, [(2, 4, 4), (3, 4, 4), (4, 4, 4), (5, 4, 4)])
    C = check_integer_fluxes(X)
    D = decompose(X, C)
    edge = ((2, 4, 4), (5, 4, 4))
    G = build_graph(D, boundary_trace(X))
    for alpha in (1.0, 0.0, -1.0):
        Xr = realize(X, D, [GraphOp(edge=edge, factor=alpha)])
        G2 = apply_ops_to_graph(G, [GraphOp(edge=edge, factor=alpha)]) \
            if alpha != 1.0 else G
        check_integer_fluxes(Xr, tol=1e-6)  # must not raise
        for v in G2.charge_vertices():
            imb = G2.out_weight(v) - G2.in_weight(v)
            assert abs(imb - round(imb)) < 1e-9
    Xr = realize(X, D, [GraphOp(edge=edge, factor=0.5)])
    with pytest.raises(NonIntegralDivergence):
        check_integer_fluxes(Xr, tol=1e-6)


def test_edge_weight_total_matches_path_mass():
    dom = build_domain(6, 1.0)
    rng = np.random.default_rng(9)
    X, C = random_integer_flux_field(dom, rng)
    D = decompose(X, C)
    G = build_graph(D, boundary_trace(X, tol=0.49))
    assert abs(sum(G.edges.values()) - sum(p.weight for p in D.paths)) < 1e-9


def test_dot_export():
    dom = build_domain(8, 1.0)
    X = wire_field(dom, [(2, 4, 4), (3, 4, 4), (4, 4, 4), (5, 4, 4)])
    D = decompose(X, check_integer_fluxes(X))
    G = build_graph(D, boundary_trace(X))
    dot = to_dot(G)
    assert dot.startswith("digraph")
    assert "q=+1" in dot and "q=-1" in dot and "->" in dot
