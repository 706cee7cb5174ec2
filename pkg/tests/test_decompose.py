import numpy as np
import pytest

from fluxlab.decompose import apply_elementary_op, decompose, dump_decomposition, recompose
from fluxlab.errors import FactorOutOfRange, InconsistentCharges
from fluxlab.lattice import (
    ChargeSet,
    FluxField,
    _FACE_SHAPES,
    build_domain,
    check_integer_fluxes,
    energy,
    monopole_field,
)
from fluxlab.verify import random_integer_flux_field

P = 1.2


def wire_field(dom, cells, w=1.0):
    """Straight staircase through the given cell chain."""
    arrays = [np.zeros(s) for s in _FACE_SHAPES(dom.N)]
    for a, b in zip(cells, cells[1:]):
        diff = np.subtract(b, a)
        ax = int(np.flatnonzero(diff)[0])
        step = int(diff[ax])
        face = list(a)
        if step > 0:
            face[ax] += 1
        arrays[ax][tuple(face)] += step * w
    return FluxField(dom, tuple(arrays))


def test_straight_line_single_path():
    dom = build_domain(8, 1.0)
    chain = [(2, 4, 4), (3, 4, 4), (4, 4, 4), (5, 4, 4)]
    X = wire_field(dom, chain)
    C = check_integer_fluxes(X)
    D = decompose(X, C)
    assert len(D.paths) == 1 and not D.cycles
    path = D.paths[0]
    assert path.weight == 1.0
    assert path.start_anchor == ("cell", (2, 4, 4))
    assert path.end_anchor == ("cell", (5, 4, 4))
    assert D.residual.total_mass() == 0.0


def test_square_loop_single_cycle():
    dom = build_domain(8, 1.0)
    chain = [(2, 3, 4), (3, 3, 4), (3, 4, 4), (2, 4, 4), (2, 3, 4)]
    X = wire_field(dom, chain)
    C = check_integer_fluxes(X)
    assert C.charges == {}
    D = decompose(X, C)
    assert not D.paths
    assert len(D.cycles) == 1
    w, steps = D.cycles[0]
    assert w == 1.0 and len(steps) == 4


def test_recompose_inverse_identity():
    dom = build_domain(6, 1.0)
    rng = np.random.default_rng(11)
    for _ in range(10):
        X, C = random_integer_flux_field(dom, rng)
        D = decompose(X, C)
        R = recompose(D)
        scale = max(X.max_abs(), 1e-30)
        for ax in range(3):
            assert np.abs(R.flux[ax] - X.flux[ax]).max() <= 1e-9 * scale


def test_empty_decomposition_recomposes_to_zero():
    dom = build_domain(6, 1.0)
    D = decompose(FluxField.zeros(dom), ChargeSet({}))
    assert recompose(D).total_mass() == 0.0


def test_single_path_weight_half():
    dom = build_domain(8, 1.0)
    chain = [(2, 4, 4), (3, 4, 4), (3, 5, 4), (4, 5, 4)]
    X = wire_field(dom, chain, w=0.5)
    # 0.5 is not an integer charge; decompose via the boundary-free cycle...
    # here endpoints carry divergence 0.5, so treat as inconsistent:
    with pytest.raises(InconsistentCharges):
        decompose(X, ChargeSet({}), tol=1e-6)


def test_mass_identity_and_conformality():
    dom = build_domain(6, 1.0)
    rng = np.random.default_rng(23)
    for _ in range(30):
        X, C = random_integer_flux_field(dom, rng)
        D = decompose(X, C)
        mass = X.total_mass()
        dec = D.total_path_mass() + D.total_cycle_mass() + D.residual.total_mass()
        assert abs(mass - dec) <= 1e-9 * max(mass, 1e-30)
        # conformality: all crossings of one face share the sign of its flux
        signs = {}
        pieces = [(p.weight, p.steps) for p in D.paths] + D.cycles
        for w, steps in pieces:
            assert w > 0  # weight positivity
            for face, sign in steps:
                signs.setdefault(face, set()).add(sign)
        for face, ss in signs.items():
            assert len(ss) == 1


def test_paths_are_simple_and_bounded():
    dom = build_domain(6, 1.0)
    rng = np.random.default_rng(5)
    X, C = random_integer_flux_field(dom, rng)
    D = decompose(X, C)
    assert len(D.paths) <= dom.n_classified_faces()
    for p in D.paths:
        # a simple path visits each face at most once
        faces = [f for f, _ in p.steps]
        assert len(faces) == len(set(faces))


def test_endpoint_law_pure_cycles():
    dom = build_domain(8, 1.0)
    chain = [(3, 3, 3), (4, 3, 3), (4, 4, 3), (4, 4, 4), (3, 4, 4), (3, 3, 4), (3, 3, 3)]
    X = wire_field(dom, chain, w=0.7)
    D = decompose(X, check_integer_fluxes(X))
    assert D.paths == []
    assert len(D.cycles) >= 1


def test_inconsistent_charges_error():
    dom = build_domain(8, 1.0)
    X = wire_field(dom, [(2, 4, 4), (3, 4, 4)])
    with pytest.raises(InconsistentCharges):
        decompose(X, ChargeSet({}))  # actual charges are +-1


# -- elementary operations ----------------------------------------------------


def _two_class_instance():
    """Two disjoint unit wires with distinct anchors."""
    dom = build_domain(8, 1.0)
    X1 = wire_field(dom, [(2, 3, 3), (3, 3, 3), (4, 3, 3)])
    X2 = wire_field(dom, [(2, 5, 5), (3, 5, 5)])
    X = X1 + X2
    C = check_integer_fluxes(X)
    return dom, X, X1, X2, C


def test_alpha_one_is_identity():
    dom, X, _, _, C = _two_class_instance()
    D = decompose(X, C)
    D2 = apply_elementary_op(D, lambda s, e: True, 1.0)
    R = recompose(D2)
    for ax in range(3):
        assert np.array_equal(R.flux[ax], X.flux[ax])


def test_alpha_zero_kills_everything():
    dom, X, _, _, C = _two_class_instance()
    D = decompose(X, C)
    D2 = apply_elementary_op(D, lambda s, e: True, 0.0)
    assert recompose(D2).total_mass() == 0.0


def test_alpha_minus_one_flips_one_class():
    dom, X, X1, X2, C = _two_class_instance()
    D = decompose(X, C)
    selector = lambda s, e: s == ("cell", (2, 5, 5))
    D2 = apply_elementary_op(D, selector, -1.0)
    R = recompose(D2)
    expect = X1 - X2  # hand-superposed oracle: second wire reversed
    for ax in range(3):
        assert np.allclose(R.flux[ax], expect.flux[ax], atol=1e-12)
    flipped = [p for p in D2.paths if p.end_anchor == ("cell", (2, 5, 5))]
    assert flipped and flipped[0].start_anchor == ("cell", (3, 5, 5))


def test_factor_out_of_range():
    dom, X, _, _, C = _two_class_instance()
    D = decompose(X, C)
    with pytest.raises(FactorOutOfRange):
        apply_elementary_op(D, lambda s, e: True, 1.5)


def test_elementary_op_never_increases_lp():
    dom = build_domain(6, 1.0)
    rng = np.random.default_rng(17)
    for trial in range(15):
        X, C = random_integer_flux_field(dom, rng)
        D = decompose(X, C)
        base = energy(X, P)
        classes = {(p.start_anchor, p.end_anchor) for p in D.paths}
        for alpha in (-1.0, -0.5, 0.0, 0.4, 1.0):
            for target in list(classes)[:3]:
                D2 = apply_elementary_op(
                    D, lambda s, e, t=target: (s, e) == t, alpha)
                assert energy(recompose(D2), P) <= base + 1e-12 * max(base, 1.0)


def test_dump_format():
    dom, X, _, _, C = _two_class_instance()
    D = decompose(X, C)
    text = dump_decomposition(D)
    assert text.startswith("decomposition v1 8 1.0\n")
    assert any(line.startswith("P ") for line in text.splitlines())
