"""Numerical verification of the analytic structure of minimizers.

Sphere integrals use shell-of-cells quadrature (cells whose center distance
to the sphere is at most h/2, weighted by h^3/h = h^2); ball integrals sum
the cell energy density.  The blow-up rescaling is flux preserving: the flux
of the output through any lattice sphere equals the flux of the input
through the corresponding scaled sphere, which reproduces the energy
identity  integral_{B_1} |X_lam|^p = lam^{2p-3} integral_{B_lam} |X|^p.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy import ndimage, signal

from .errors import (
    BallOutsideDomain,
    ExponentOutOfRange,
    ScaleOutOfDomain,
    SupportViolation,
)
from .lattice import (
    Cell,
    FluxField,
    LatticeDomain,
    _FACE_SHAPES,
    build_domain,
    cell_vectors,
    energy_density,
)


def epsilon_p(p: float) -> float:
    """Small-energy threshold of the regularity criterion: (4 pi)^(1-p) / 2.

    Chosen so that the Hoelder bound on the sphere mass,
    (2 eps)^(1/p) (4 pi)^((p-1)/p), equals exactly 1.
    """
    if not (1.0 < p < 1.5):
        raise ExponentOutOfRange(f"p={p} outside the valid range ]1, 3/2[")
    return (4.0 * np.pi) ** (1.0 - p) / 2.0


def rescaled_energy(X: FluxField, x0, r: float, p: float) -> float:
    """r^(2p-3) times the energy over the cells inside B_r(x0)."""
    dom = X.domain
    if not dom.contains_ball(x0, r):
        raise BallOutsideDomain(f"ball of radius {r} at {x0} leaves the domain")
    inside = dom.cell_radii(x0) < r
    return float(r ** (2 * p - 3) * energy_density(X, p)[inside].sum())


# ---------------------------------------------------------------------------
# regularity scan


@dataclass
class RegularityReport:
    p: float
    eps_p: float
    radii: List[float]
    theta: Dict[float, np.ndarray]        # per radius, indexed by center cell
    valid: Dict[float, np.ndarray]        # centers whose ball fits the domain
    scope: np.ndarray                     # cells coverable by some tested ball
    flagged_mask: np.ndarray
    flagged_cells: List[Cell]


def _ball_kernel(h: float, r: float) -> np.ndarray:
    m = int(np.floor(r / h))
    if m < 0:
        return np.ones((1, 1, 1), dtype=bool)
    g = np.arange(-m, m + 1)
    X, Y, Z = np.meshgrid(g, g, g, indexing="ij")
    return (X * X + Y * Y + Z * Z) * h * h < r * r


def regularity_scan(X: FluxField, p: float,
                    radii: Sequence[float] | None = None) -> RegularityReport:
    """Flag the cells contained in no small-energy ball.

    A cell is cleared when some admissible ball B_r(x0) with the cell inside
    the half ball B_{r/2}(x0) has rescaled energy below eps_p.  Flagged is
    the complement within the scan's scope, the cells coverable by at least
    one admissible tested ball; the outer rim that no tested ball covers is
    outside the interior statement and reported via ``scope``.
    """
    dom = X.domain
    h = dom.h
    eps = epsilon_p(p)
    if radii is None:
        top = (dom.ball_radius or dom.R) * 0.6
        radii = [r for r in np.geomspace(3 * h, top, 6)]
    dens = energy_density(X, p)
    theta: Dict[float, np.ndarray] = {}
    valid: Dict[float, np.ndarray] = {}
    cleared = np.zeros_like(dom.interior)
    scope = np.zeros_like(dom.interior)
    for r in radii:
        kernel = _ball_kernel(h, r)
        ball_sum = signal.fftconvolve(dens, kernel.astype(float), mode="same")
        ball_sum = np.clip(ball_sum, 0.0, None)
        th = r ** (2 * p - 3) * ball_sum
        ok_center = ndimage.binary_erosion(dom.interior, structure=kernel)
        theta[r] = th
        valid[r] = ok_center
        half = _ball_kernel(h, r / 2)
        scope |= ndimage.binary_dilation(ok_center, structure=half)
        good = ok_center & (th < eps)
        cleared |= ndimage.binary_dilation(good, structure=half)
    flagged = dom.interior & scope & ~cleared
    cells = [tuple(int(v) for v in c) for c in np.argwhere(flagged)]
    return RegularityReport(p=p, eps_p=eps, radii=list(radii), theta=theta,
                            valid=valid, scope=scope, flagged_mask=flagged,
                            flagged_cells=cells)


def flagged_clusters(mask: np.ndarray) -> List[List[Cell]]:
    """Edge-connected components of a flagged-cell mask."""
    structure = ndimage.generate_binary_structure(3, 1)
    labels, n = ndimage.label(mask, structure=structure)
    out = []
    for lab in range(1, n + 1):
        cells = [tuple(int(v) for v in c) for c in np.argwhere(labels == lab)]
        out.append(cells)
    return out


def cluster_diameter(cells: List[Cell]) -> int:
    """Chebyshev diameter in cells (a single cell has diameter 1)."""
    arr = np.asarray(cells)
    return int((arr.max(axis=0) - arr.min(axis=0)).max()) + 1


# ---------------------------------------------------------------------------
# monotonicity


@dataclass
class MonotonicityProfile:
    radii: List[float]
    theta: List[float]
    rhs: List[float]
    dtheta: List[float]


def _sphere_shell_mask(dom: LatticeDomain, x0, r: float) -> np.ndarray:
    rad = dom.cell_radii(x0)
    return dom.interior & (np.abs(rad - r) <= dom.h / 2)


def monotonicity_profile(X: FluxField, x0, p: float,
                         radii: Sequence[float]) -> MonotonicityProfile:
    """Density Theta(r) = r^(2p-3) E(B_r) against the tangential sphere term.

    The right-hand side is 2p r^(2p-3) times the sphere integral of
    |X|^(p-2) |X_tangential|^2, evaluated by shell-of-cells quadrature.
    """
    dom = X.domain
    radii = sorted(float(r) for r in radii)
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be strictly increasing")
    vec = cell_vectors(X)
    centers = dom.cell_centers() - np.asarray(x0, dtype=float)
    rad = np.sqrt((centers ** 2).sum(axis=-1))
    with np.errstate(invalid="ignore", divide="ignore"):
        nu = centers / rad[..., None]
    nu = np.nan_to_num(nu)
    radial = (vec * nu).sum(axis=-1)
    tang2 = np.maximum((vec ** 2).sum(axis=-1) - radial ** 2, 0.0)
    mag = np.sqrt((vec ** 2).sum(axis=-1))
    with np.errstate(divide="ignore", invalid="ignore"):
        weight = np.where(mag > 0, mag ** (p - 2) * tang2, 0.0)

    theta, rhs = [], []
    for r in radii:
        theta.append(rescaled_energy(X, x0, r, p))
        shell = _sphere_shell_mask(dom, x0, r)
        integral = float(weight[shell].sum() * dom.h ** 2)
        rhs.append(2 * p * r ** (2 * p - 3) * integral)
    dtheta = list(np.gradient(np.asarray(theta), np.asarray(radii)))
    return MonotonicityProfile(radii=radii, theta=theta, rhs=rhs, dtheta=dtheta)


# ---------------------------------------------------------------------------
# stationarity


def stationarity_residual(X: FluxField, p: float, V) -> float:
    """Discrete inner variation of the energy along a compactly supported V.

    ``V`` maps (..., 3) points to (..., 3) vectors; it is sampled at cell
    centers with central finite differences for its gradient.  Vanishes (to
    quadrature) on minimizers; the uniform field with a compressive V gives a
    residual bounded away from zero.
    """
    dom = X.domain
    h = dom.h
    pts = dom.cell_centers()
    Vg = np.asarray(V(pts), dtype=float)
    if Vg.shape != pts.shape:
        raise ValueError("V must return one vector per cell center")

    # compact support: V must vanish on and next to non-interior cells
    scale = float(np.abs(Vg).max())
    if scale > 0:
        near_boundary = ~ndimage.binary_erosion(
            dom.interior, structure=ndimage.generate_binary_structure(3, 1),
            iterations=2)
        if np.abs(Vg[near_boundary]).max() > 1e-9 * scale:
            raise SupportViolation("V does not vanish near the domain boundary")

    grad = np.stack([np.stack(np.gradient(Vg[..., b], h), axis=-1)
                     for b in range(3)], axis=-1)  # grad[..., a, b] = d_a V_b
    divV = grad[..., 0, 0] + grad[..., 1, 1] + grad[..., 2, 2]
    vec = cell_vectors(X)
    mag2 = (vec ** 2).sum(axis=-1)
    mag = np.sqrt(mag2)
    xgx = np.einsum("...a,...ab,...b->...", vec, grad, vec)
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(mag > 0,
                        p * mag ** (p - 2) * (mag2 * divV - xgx)
                        - mag ** p * divV,
                        0.0)
    return float(term[dom.interior].sum() * h ** 3)


# ---------------------------------------------------------------------------
# blow-ups


def _overlap_matrix(n_out: int, lam: float, h_out: float, off: float,
                    lo_src: float, h: float, n_src: int) -> np.ndarray:
    """1D overlap lengths between image intervals and source strips."""
    starts = lam * (-1.0 + np.arange(n_out) * h_out) + off
    ends = starts + lam * h_out
    src_edges = lo_src + np.arange(n_src + 1) * h
    W = np.zeros((n_out, n_src))
    for j in range(n_out):
        a, b = starts[j], ends[j]
        J0 = max(0, int(np.floor((a - lo_src) / h)))
        J1 = min(n_src - 1, int(np.floor((b - lo_src) / h - 1e-12)))
        for J in range(J0, J1 + 1):
            W[j, J] = max(0.0, min(b, src_edges[J + 1]) - max(a, src_edges[J]))
    return W


def blowup(X: FluxField, x0, lam: float, N_out: int | None = None) -> FluxField:
    """Flux-preserving rescaling onto the unit ball: X_lam(y) = lam^2 X(lam y + x0).

    Output face fluxes are the fluxes of X through the lam-scaled image
    rectangles, computed from the piecewise-constant face density with
    linear interpolation along the normal; the construction is exact
    whenever the image planes land on lattice planes.
    """
    dom = X.domain
    if N_out is None:
        N_out = dom.N
    x0 = np.asarray(x0, dtype=float)
    if np.any(np.abs(x0) + lam > dom.R + 1e-12):
        raise ScaleOutOfDomain("image cube leaves the grid")
    if not dom.contains_ball(tuple(x0), lam):
        raise ScaleOutOfDomain("image ball leaves the interior mask")
    out_dom = build_domain(N_out, 1.0)
    h_out = out_dom.h
    h = dom.h
    lo = -dom.R
    area = h * h

    flux_out = []
    for ax in range(3):
        u, v = [a for a in range(3) if a != ax]
        dens = X.flux[ax] / area  # piecewise-constant normal flux density
        planes_img = lam * (-1.0 + np.arange(N_out + 1) * h_out) + x0[ax]
        m_float = (planes_img - lo) / h
        m0 = np.clip(np.floor(m_float).astype(int), 0, dom.N - 1)
        t = np.clip(m_float - m0, 0.0, 1.0)
        Wu = _overlap_matrix(N_out, lam, h_out, x0[u], lo, h, dom.N)
        Wv = _overlap_matrix(N_out, lam, h_out, x0[v], lo, h, dom.N)
        arr = np.zeros(_FACE_SHAPES(N_out)[ax])
        mover = [None, None, None]
        for i in range(N_out + 1):
            D0 = np.moveaxis(dens, ax, 0)[m0[i]]
            D1 = np.moveaxis(dens, ax, 0)[min(m0[i] + 1, dom.N)]
            Dm = (1 - t[i]) * D0 + t[i] * D1
            plane = Wu @ Dm @ Wv.T
            idx = [slice(None)] * 3
            idx[ax] = i
            arr[tuple(idx)] = plane
        flux_out.append(arr)
    return FluxField(out_dom, tuple(flux_out))


def radiality_defect(X: FluxField, x0, p: float) -> float:
    """Weighted tangential energy: integral of r^(2p-3) |X|^(p-2) |X_tan|^2.

    Zero for radially directed fields; tends to zero along minimizer
    blow-ups.  The cell containing x0 is excluded (the weight is singular
    there).
    """
    dom = X.domain
    vec = cell_vectors(X)
    centers = dom.cell_centers() - np.asarray(x0, dtype=float)
    rad = np.sqrt((centers ** 2).sum(axis=-1))
    keep = dom.interior & (rad > dom.h / 2)
    with np.errstate(invalid="ignore", divide="ignore"):
        nu = centers / rad[..., None]
    nu = np.nan_to_num(nu)
    radial = (vec * nu).sum(axis=-1)
    tang2 = np.maximum((vec ** 2).sum(axis=-1) - radial ** 2, 0.0)
    mag = np.sqrt((vec ** 2).sum(axis=-1))
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(mag > 0, mag ** (p - 2) * tang2, 0.0)
        vals = np.where(keep, rad ** (2 * p - 3) * w, 0.0)
    return float(vals.sum() * dom.h ** 3)


def _fibonacci_directions(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    phi = np.arccos(1 - 2 * i / n)
    theta = np.pi * (1 + 5 ** 0.5) * i
    return np.stack([np.sin(phi) * np.cos(theta),
                     np.sin(phi) * np.sin(theta),
                     np.cos(phi)], axis=-1)


def _trilinear(grid: np.ndarray, dom: LatticeDomain, pts: np.ndarray) -> np.ndarray:
    g = (pts + dom.R) / dom.h - 0.5
    g = np.clip(g, 0, dom.N - 1 - 1e-9)
    i0 = np.floor(g).astype(int)
    f = g - i0
    i1 = np.minimum(i0 + 1, dom.N - 1)
    out = np.zeros(pts.shape[:-1])
    for da, wa in ((0, 1 - f[..., 0]), (1, f[..., 0])):
        for db, wb in ((0, 1 - f[..., 1]), (1, f[..., 1])):
            for dc, wc in ((0, 1 - f[..., 2]), (1, f[..., 2])):
                ii = i0[..., 0] + da * (i1[..., 0] - i0[..., 0])
                jj = i0[..., 1] + db * (i1[..., 1] - i0[..., 1])
                kk = i0[..., 2] + dc * (i1[..., 2] - i0[..., 2])
                out += wa * wb * wc * grid[ii, jj, kk]
    return out


def homogeneity_defect(X: FluxField, center=(0.0, 0.0, 0.0), n_dirs: int = 192,
                       window: Tuple[float, float] = (0.25, 0.85)) -> float:
    """Max over rays of the relative variation of |x|^2 |X|(x).

    Zero for exact tangent maps (whose magnitude is (-2)-homogeneous).  Rays
    are sampled from a fixed direction set over the fraction ``window`` of
    the ball radius, floored at 2.5 h to stay clear of the unresolved core.
    """
    dom = X.domain
    Rb = dom.ball_radius or dom.R
    vec = cell_vectors(X)
    mag = np.sqrt((vec ** 2).sum(axis=-1))
    dirs = _fibonacci_directions(n_dirs)
    r_lo = max(window[0] * Rb, 2.5 * dom.h)
    r_hi = window[1] * Rb
    if r_lo >= r_hi:
        r_lo = 0.5 * r_hi
    n_samples = max(4, int(np.ceil((r_hi - r_lo) / dom.h)))
    radii = np.linspace(r_lo, r_hi, n_samples)
    pts = (np.asarray(center, dtype=float)[None, None, :]
           + dirs[:, None, :] * radii[None, :, None])
    vals = _trilinear(mag, dom, pts) * (radii[None, :] ** 2)
    vmax = vals.max(axis=1)
    vmin = vals.min(axis=1)
    vmean = np.maximum(vals.mean(axis=1), 1e-300)
    return float(((vmax - vmin) / vmean).max())


# ---------------------------------------------------------------------------
# box counting


def box_count(dom: LatticeDomain, cells: Sequence[Cell], s: float,
              scales: Sequence[float]) -> List[Tuple[float, int, float]]:
    """Premeasure table: for each box size delta, (delta, box count, count * delta^s)."""
    if not (0.0 < s < 3.0):
        raise ValueError("s must lie in (0, 3)")
    rows = []
    if cells:
        pts = np.asarray([dom.cell_centers()[tuple(c)] for c in cells])
    for delta in scales:
        if not cells:
            rows.append((float(delta), 0, 0.0))
            continue
        idx = np.floor((pts + dom.R) / delta).astype(int)
        count = len(np.unique(idx, axis=0))
        rows.append((float(delta), int(count), float(count * delta ** s)))
    return rows
