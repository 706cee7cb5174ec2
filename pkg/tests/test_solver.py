import numpy as np
import pytest

from fluxlab.errors import (
    BallOutsideDomain,
    ExponentOutOfRange,
    HypothesisViolated,
    IncompatibleData,
    InfeasibleCharges,
)
from fluxlab.lattice import (
    BoundaryData,
    ChargeSet,
    FluxField,
    _FACE_SHAPES,
    boundary_trace,
    build_domain,
    cell_center_of,
    check_integer_fluxes,
    divergence,
    energy,
    monopole_field,
    nearest_interior_cell,
    shell_domain,
)
from fluxlab.presets import dipole_cap_trace, uniform_degree_trace
from fluxlab.solver import (
    SolveConfig,
    build_interpolant,
    eliminate_in_ball,
    feasible_init,
    get_operators,
    minimize,
    neumann_interpolant,
    shell_side_masks,
    solve_fixed_charges,
)
from fluxlab.verify import poloidal_swirl
from tests.test_decompose import wire_field

P = 1.2
EXACT_MONO = (4 * np.pi) ** (1 - P) / (3 - 2 * P)


def test_config_validation():
    with pytest.raises(ExponentOutOfRange):
        SolveConfig(p=1.6)
    with pytest.raises(ValueError):
        SolveConfig(p=1.2, convex_tol=-1.0)


def test_zero_problem_gives_zero_field(dom16):
    B = uniform_degree_trace(dom16, 1).scaled(0.0)
    X = solve_fixed_charges(dom16, B, ChargeSet({}), SolveConfig(p=P))
    assert energy(X, P) == 0.0


def test_infeasible_charges(dom16):
    B = uniform_degree_trace(dom16, 1)
    with pytest.raises(InfeasibleCharges):
        solve_fixed_charges(dom16, B, ChargeSet({}), SolveConfig(p=P))


def test_feasible_init_constraints(dom16):
    B = uniform_degree_trace(dom16, 1)
    cell = nearest_interior_cell(dom16, (0, 0, 0))
    X0 = feasible_init(dom16, B, ChargeSet({cell: 1}))
    div = divergence(X0)
    assert abs(div[cell] - 1.0) < 1e-8
    div2 = div.copy()
    div2[cell] = 0
    assert np.abs(div2).max() < 1e-8
    B2 = boundary_trace(X0)
    for ax in range(3):
        assert np.allclose(B2.values[ax], B.values[ax], atol=1e-14)


def test_monopole_convex_solve(dom16, monopole16):
    B = boundary_trace(monopole16)
    C = check_integer_fluxes(monopole16)
    cfg = SolveConfig(p=P)
    X = solve_fixed_charges(dom16, B, C, cfg)
    e = energy(X, P)
    assert e <= energy(monopole16, P) + 1e-9      # the minimizer beats the sample
    assert abs(e - EXACT_MONO) / EXACT_MONO < 0.12
    # constraints maintained exactly at solver precision
    assert check_integer_fluxes(X, tol=1e-6).charges == C.charges
    B2 = boundary_trace(X)
    for ax in range(3):
        assert np.array_equal(B2.values[ax], B.values[ax])


def test_first_order_optimality(dom16, monopole16):
    # energy(X + tZ) >= energy(X) - convex_tol * t for unit divergence-free Z
    B = boundary_trace(monopole16)
    C = check_integer_fluxes(monopole16)
    cfg = SolveConfig(p=P, convex_tol=1e-3)
    X = solve_fixed_charges(dom16, B, C, cfg)
    ops = get_operators(dom16)
    e0 = energy(X, P)
    rng = np.random.default_rng(0)
    t = 1e-3
    for _ in range(20):
        z = ops.project_div_free(rng.standard_normal(ops.n_ifaces))
        z /= np.linalg.norm(z)
        arrays = ops.scatter(ops.gather(X.copy_arrays()) + t * z, X.copy_arrays())
        e1 = energy(FluxField(dom16, tuple(arrays)), P)
        assert e1 >= e0 - cfg.convex_tol * t - 1e-10


def test_dipole_energy_vs_distance():
    dom = build_domain(16, 1.0)
    B = uniform_degree_trace(dom, 1).scaled(0.0)
    cfg = SolveConfig(p=P)
    energies = {}
    for d_cells in (3, 6):
        a = nearest_interior_cell(dom, (0, 0, -d_cells * dom.h / 2))
        b = nearest_interior_cell(dom, (0, 0, d_cells * dom.h / 2))
        C = ChargeSet({a: 1, b: -1})
        X = solve_fixed_charges(dom, B, C, cfg)
        energies[d_cells] = energy(X, P)
    assert 0 < energies[3] < energies[6]
    # below the sum of two isolated truncated monopole energies
    assert energies[6] < 2 * EXACT_MONO


# -- outer loop ---------------------------------------------------------------


def test_minimize_zero_boundary(dom16):
    B = uniform_degree_trace(dom16, 1).scaled(0.0)
    res = minimize(dom16, B, SolveConfig(p=P))
    assert res.converged
    assert res.charges.charges == {}
    assert res.energy == 0.0


def test_minimize_degree_one(dom16):
    B = uniform_degree_trace(dom16, 1)
    res = minimize(dom16, B, SolveConfig(p=P, seed=2, max_outer_iters=6))
    assert res.converged
    assert list(res.charges.charges.values()) == [1]
    cell = res.charges.cells()[0]
    dist = float(np.linalg.norm(dom16.cell_centers()[cell]))
    assert dist <= 2 * dom16.h
    assert abs(res.energy - EXACT_MONO) / EXACT_MONO < 0.12
    # accepted-move history is non-increasing
    accepted = [e for it, desc, e in res.history if not desc.startswith("skipped")]
    assert all(b <= a + 1e-12 for a, b in zip(accepted, accepted[1:]))
    # iterate constraints: integer divergence, exact trace
    assert check_integer_fluxes(res.field, tol=1e-6).charges == res.charges.charges


def test_eliminate_in_ball_removes_dipole():
    dom = build_domain(12, 1.0)
    X = wire_field(dom, [(4, 6, 6), (5, 6, 6), (6, 6, 6), (7, 6, 6)])
    C = check_integer_fluxes(X)
    glued, C2 = eliminate_in_ball(X, C, (0.0, 0.0, 0.0), 0.6)
    assert C2.charges == {}
    assert energy(glued, P) <= energy(X, P)
    assert check_integer_fluxes(glued, tol=1e-6).charges == {}
    # outside the ball nothing changed
    rad = dom.cell_radii((0, 0, 0))
    outside = dom.interior & (rad >= 0.6)
    div = divergence(glued)
    assert np.abs(np.where(outside, div, 0)).max() < 1e-9


def test_eliminate_in_ball_hypothesis_errors():
    dom = build_domain(12, 1.0)
    X = monopole_field(dom)
    C = check_integer_fluxes(X)
    with pytest.raises(HypothesisViolated):
        eliminate_in_ball(X, C, (0.0, 0.0, 0.0), 0.5)  # enclosed charge sums to 1


# -- Neumann interpolant --------------------------------------------------------


def _shell_with_pattern(N=48, eps=0.3, amp=0.1):
    shell = shell_domain(N, 1.4, 1.0, 1.0 + eps)
    inner_b, _ = shell_side_masks(shell)
    vals = []
    for ax in range(3):
        fc = shell.face_centers(ax)
        r = np.linalg.norm(fc, axis=-1)
        vals.append(np.where(inner_b[ax], fc[..., 2] / np.maximum(r, 1e-12), 0.0)
                    * shell.h ** 2 * amp)
    return shell, BoundaryData(shell, tuple(vals), 0)


def test_neumann_zero_data():
    shell = shell_domain(24, 1.4, 1.0, 1.25)
    g = BoundaryData(shell, tuple(np.zeros(_FACE_SHAPES(24)[a]) for a in range(3)), 0)
    Y = neumann_interpolant(shell, g)
    assert Y.total_mass() == 0.0


def test_neumann_divergence_and_traces():
    shell, g = _shell_with_pattern()
    Y = neumann_interpolant(shell, g)
    assert np.abs(divergence(Y)[shell.interior]).max() < 1e-8
    tr = boundary_trace(Y, tol=1e-6)
    inner_b, outer_b = shell_side_masks(shell)
    for ax in range(3):
        assert np.allclose(tr.values[ax][inner_b[ax]], -g.values[ax][inner_b[ax]],
                           atol=1e-12)
        assert np.all(tr.values[ax][outer_b[ax]] == 0.0)


def test_neumann_incompatible_data():
    shell, g = _shell_with_pattern()
    bad_vals = [v.copy() for v in g.values]
    inner_b, _ = shell_side_masks(shell)
    ax = 2
    idx = tuple(np.argwhere(inner_b[ax])[0])
    bad_vals[ax][idx] += 0.5
    bad = BoundaryData(shell, tuple(bad_vals), 0)
    with pytest.raises(IncompatibleData):
        neumann_interpolant(shell, bad)


def test_neumann_scaling_ratio():
    norms = {}
    for eps in (0.3, 0.15):
        shell, g = _shell_with_pattern(N=48, eps=eps)
        Y = neumann_interpolant(shell, g)
        norms[eps] = energy(Y, P) ** (1 / P)
    assert norms[0.15] / norms[0.3] <= 2 ** (1 / P) * 1.2


# -- build_interpolant ----------------------------------------------------------


def test_interpolant_zero_field():
    dom = build_domain(32, 1.3)
    res = build_interpolant(FluxField.zeros(dom), 0.2, P)
    assert res.field.total_mass() == 0.0
    assert res.measured_c == 0.0


def test_interpolant_rejects_net_flux():
    dom = build_domain(32, 1.3)
    X = monopole_field(dom)  # unit flux through the unit sphere
    with pytest.raises(HypothesisViolated):
        build_interpolant(X, 0.2, P)


def test_interpolant_locality_for_contained_fields():
    # a loop supported inside B_{1+eps} passes through unchanged
    dom = build_domain(32, 1.3)
    h = dom.h
    cells = [nearest_interior_cell(dom, p) for p in
             [(0.7, 0.05, 0.05), (1.05, 0.05, 0.05)]]
    (ia, j, k), (ib, _, _) = cells
    chain = ([(i, j, k) for i in range(ia, ib + 1)]
             + [(i, j, k + 1) for i in range(ib, ia - 1, -1)]
             + [(ia, j, k)])
    X = wire_field(dom, chain, w=0.2)
    res = build_interpolant(X, 0.2, P)
    for ax in range(3):
        assert np.allclose(res.field.flux[ax], X.flux[ax], atol=1e-12)


def test_interpolant_swirl_bound_and_structure():
    dom = build_domain(64, 1.3)
    Y = poloidal_swirl(dom)
    eps = 0.2
    res = build_interpolant(Y, eps, P)
    out = res.field
    rad = dom.cell_radii((0, 0, 0))
    shell_mask = dom.interior & (rad > 1) & (rad < 1 + eps)
    # zero divergence in the shell, bound with finite C
    assert np.abs(divergence(out)[shell_mask]).max() < 1e-8
    assert np.isfinite(res.measured_c)
    assert res.lp_shell_after <= (res.lp_shell_before
                                  + max(res.measured_c, res.bound_c)
                                  * eps ** (-1 / P) * res.lp_inner_boundary + 1e-9)
    # equality inside the unit ball, zero far outside
    inner = dom.interior & (rad <= 1.0 - 2 * dom.h)
    for ax in range(3):
        m = inner[:-1] if ax == 0 else (inner[:, :-1] if ax == 1 else inner[:, :, :-1])
        pad = [(0, 0)] * 3
        pad[ax] = (1, 1)
        padded = np.pad(inner, pad, constant_values=False)
        both = padded[tuple(slice(0, -1) if a == ax else slice(None) for a in range(3))] \
            & padded[tuple(slice(1, None) if a == ax else slice(None) for a in range(3))]
        assert np.array_equal(out.flux[ax][both], Y.flux[ax][both])
        far = dom.cls[ax] != 0
        centers = dom.face_centers(ax)
        beyond = far & (np.linalg.norm(centers, axis=-1) > 1 + eps + 2 * dom.h)
        assert np.abs(out.flux[ax][beyond]).max() == 0.0


def test_interpolant_needs_room():
    dom = build_domain(32, 1.1)
    with pytest.raises(BallOutsideDomain):
        build_interpolant(FluxField.zeros(dom), 0.2, P)
