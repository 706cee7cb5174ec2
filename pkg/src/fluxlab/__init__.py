"""Lattice laboratory for L^p-minimizing vector fields with integer fluxes."""

from .lattice import (
    BoundaryData,
    ChargeSet,
    FluxField,
    LatticeDomain,
    boundary_trace,
    build_domain,
    check_integer_fluxes,
    divergence,
    energy,
    monopole_field,
    shell_domain,
)
from .decompose import PathDecomposition, apply_elementary_op, decompose, recompose
from .chargegraph import ChargeGraph, GraphOp, build_graph, kirchhoff_defect, realize
from .mincut import CutResult, eliminate_charges, generic_case_cut, max_flow, min_cut
from .solver import (
    MinimizeResult,
    SolveConfig,
    build_interpolant,
    minimize,
    neumann_interpolant,
    solve_fixed_charges,
)
from .analysis import (
    blowup,
    box_count,
    epsilon_p,
    homogeneity_defect,
    monotonicity_profile,
    radiality_defect,
    regularity_scan,
    rescaled_energy,
    stationarity_residual,
)

__version__ = "0.1.0"
