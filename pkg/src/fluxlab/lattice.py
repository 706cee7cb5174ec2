"""Cubic-lattice domains and staggered face-flux vector fields.

The grid covers the cube [-R, R]^3 with N cells per axis, h = 2R/N.  A
vector field is stored in MAC (staggered) layout, one area-integrated flux
value per oriented face: ``fx[i, j, k]`` is the flux through the face
separating cells (i-1, j, k) and (i, j, k), counted positive along +x and
carrying units of the surface integral of X·n.  With this convention a unit
point charge emits total flux 1, and the admissibility constraint (integer
flux through every lattice sphere) reduces, by additivity over cell unions,
to an integer net outflow per cell.

Face classification: a face is *interior* when both adjacent cells belong to
the domain mask, *boundary* when exactly one does (then it carries an
outward sign), and *exterior* otherwise.  Flux values live on interior and
boundary faces only; exterior entries are kept at exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Tuple

import numpy as np
from scipy import ndimage

from .errors import (
    ExponentOutOfRange,
    NonIntegralDegree,
    NonIntegralDivergence,
    ResolutionTooSmall,
)

Cell = Tuple[int, int, int]
Face = Tuple[int, int, int, int]  # (axis, i, j, k)

EXTERIOR, INTERIOR, BOUNDARY = 0, 1, 2

#: default integrality tolerance for analytically sampled fields; solver
#: intermediates use the looser TOL_SOLVER because rounding happens only at
#: accepted moves.
TOL_ANALYTIC = 1e-6
TOL_SOLVER = 0.05

_FACE_SHAPES = lambda N: ((N + 1, N, N), (N, N + 1, N), (N, N, N + 1))


@dataclass
class LatticeDomain:
    """Cell mask plus face classification on a cubic grid.

    ``R`` is the half-extent of the covering cube; for domains built with
    :func:`build_domain` it coincides with the ball radius (``ball_radius``).
    """

    N: int
    R: float
    interior: np.ndarray                      # bool (N, N, N)
    ball_radius: float | None = None
    ball_center: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    shell_radii: Tuple[float, float] | None = None
    cls: Tuple[np.ndarray, ...] = field(init=False, repr=False)
    sgn: Tuple[np.ndarray, ...] = field(init=False, repr=False)

    def __post_init__(self):
        N = self.N
        if not self.interior.any():
            raise ResolutionTooSmall("domain mask has no interior cell")
        if not _edge_connected(self.interior):
            raise ResolutionTooSmall("interior cells are not edge-connected")
        cls, sgn = [], []
        for ax in range(3):
            pad = [(0, 0)] * 3
            pad[ax] = (1, 1)
            padded = np.pad(self.interior, pad, constant_values=False)
            lo = padded[tuple(slice(0, -1) if a == ax else slice(None) for a in range(3))]
            hi = padded[tuple(slice(1, None) if a == ax else slice(None) for a in range(3))]
            c = np.zeros(_FACE_SHAPES(N)[ax], dtype=np.int8)
            c[lo & hi] = INTERIOR
            c[lo ^ hi] = BOUNDARY
            s = np.zeros_like(c)
            s[lo & ~hi] = 1    # interior cell on the minus side: outward = +axis
            s[~lo & hi] = -1
            cls.append(c)
            sgn.append(s)
        self.cls = tuple(cls)
        self.sgn = tuple(sgn)
        self._cache: Dict[str, object] = {}

    # -- geometry -----------------------------------------------------------

    @property
    def h(self) -> float:
        return 2.0 * self.R / self.N

    @property
    def n_interior(self) -> int:
        return int(self.interior.sum())

    def axis_coords(self) -> np.ndarray:
        """Cell-center coordinates along one axis."""
        return -self.R + (np.arange(self.N) + 0.5) * self.h

    def cell_centers(self) -> np.ndarray:
        """(N, N, N, 3) array of cell-center coordinates (cached)."""
        if "centers" not in self._cache:
            c = self.axis_coords()
            X, Y, Z = np.meshgrid(c, c, c, indexing="ij")
            self._cache["centers"] = np.stack([X, Y, Z], axis=-1)
        return self._cache["centers"]

    def cell_radii(self, center=(0.0, 0.0, 0.0)) -> np.ndarray:
        d = self.cell_centers() - np.asarray(center, dtype=float)
        return np.sqrt((d * d).sum(axis=-1))

    def face_centers(self, axis: int) -> np.ndarray:
        """Coordinates of all face centers on one axis, shape (*face_shape, 3)."""
        key = f"fcenters{axis}"
        if key not in self._cache:
            N, h, lo = self.N, self.h, -self.R
            planes = lo + np.arange(N + 1) * h
            mid = lo + (np.arange(N) + 0.5) * h
            coords = [mid, mid, mid]
            coords[axis] = planes
            A, B, C = np.meshgrid(*coords, indexing="ij")
            self._cache[key] = np.stack([A, B, C], axis=-1)
        return self._cache[key]

    def boundary_faces(self) -> list[Face]:
        """All boundary faces, sorted lexicographically by (axis, i, j, k)."""
        if "bfaces" not in self._cache:
            out = []
            for ax in range(3):
                for idx in np.argwhere(self.cls[ax] == BOUNDARY):
                    out.append((ax, int(idx[0]), int(idx[1]), int(idx[2])))
            self._cache["bfaces"] = out
        return self._cache["bfaces"]

    def n_classified_faces(self) -> int:
        return int(sum((c != EXTERIOR).sum() for c in self.cls))

    def face_cells(self, face: Face) -> Tuple[Cell | None, Cell | None]:
        """(minus-side cell, plus-side cell); ``None`` when off-grid or exterior."""
        ax, i, j, k = face
        idx = [i, j, k]
        lo_idx = idx.copy()
        lo_idx[ax] -= 1
        lo = tuple(lo_idx)
        hi = (i, j, k)
        lo_ok = 0 <= lo[ax] and self.interior[lo]
        hi_ok = idx[ax] < self.N and self.interior[hi]
        return (lo if lo_ok else None, hi if hi_ok else None)

    def contains_ball(self, center, r: float) -> bool:
        """True when every cell center within distance r of ``center`` is interior."""
        inside = self.cell_radii(center) < r
        return bool(np.all(self.interior[inside])) and inside.any()


def _edge_connected(mask: np.ndarray) -> bool:
    structure = ndimage.generate_binary_structure(3, 1)
    _, n = ndimage.label(mask, structure=structure)
    return n == 1


def masked_domain(N: int, extent: float, mask: np.ndarray, **meta) -> LatticeDomain:
    if mask.shape != (N, N, N):
        raise ValueError("mask shape must be (N, N, N)")
    return LatticeDomain(N=N, R=float(extent), interior=mask.astype(bool), **meta)


def ball_domain(N: int, extent: float, radius: float,
                center=(0.0, 0.0, 0.0)) -> LatticeDomain:
    """Ball mask by cell-center membership inside a cube of half-extent ``extent``."""
    dom_probe = _centers(N, extent) - np.asarray(center, dtype=float)
    mask = (dom_probe ** 2).sum(axis=-1) < radius ** 2
    if not mask.any():
        raise ResolutionTooSmall(f"no cell center inside the ball of radius {radius}")
    return masked_domain(N, extent, mask, ball_radius=float(radius),
                         ball_center=tuple(float(c) for c in center))


def _centers(N: int, extent: float) -> np.ndarray:
    h = 2.0 * extent / N
    c = -extent + (np.arange(N) + 0.5) * h
    X, Y, Z = np.meshgrid(c, c, c, indexing="ij")
    return np.stack([X, Y, Z], axis=-1)


def shell_domain(N: int, extent: float, r_inner: float, r_outer: float,
                 center=(0.0, 0.0, 0.0)) -> LatticeDomain:
    """Spherical-shell mask: cells with r_inner < |center distance| < r_outer."""
    r = np.sqrt(((_centers(N, extent) - np.asarray(center, float)) ** 2).sum(axis=-1))
    mask = (r > r_inner) & (r < r_outer)
    if not mask.any():
        raise ResolutionTooSmall("shell mask is empty; increase N or thickness")
    return masked_domain(N, extent, mask, ball_center=tuple(float(c) for c in center),
                         shell_radii=(float(r_inner), float(r_outer)))


def build_domain(N: int, R: float = 1.0) -> LatticeDomain:
    """Ball of radius R discretized on its bounding cube with N cells per axis."""
    if N < 4:
        raise ResolutionTooSmall(f"N={N} below the minimum resolution 4")
    if R <= 0:
        raise ValueError("R must be positive")
    return ball_domain(N, R, R)


# ---------------------------------------------------------------------------
# flux fields


class FluxField:
    """One real flux value per classified face of a domain.

    Treated as immutable after construction; all operations return new
    fields, which makes concurrent use safe.
    """

    __slots__ = ("domain", "flux")

    def __init__(self, domain: LatticeDomain, flux: Tuple[np.ndarray, ...]):
        self.domain = domain
        cleaned = []
        for ax in range(3):
            arr = np.asarray(flux[ax], dtype=np.float64)
            if arr.shape != _FACE_SHAPES(domain.N)[ax]:
                raise ValueError("flux array shape mismatch")
            if not np.isfinite(arr[domain.cls[ax] != EXTERIOR]).all():
                raise ValueError("non-finite flux on a classified face")
            arr = np.where(domain.cls[ax] == EXTERIOR, 0.0, arr)
            cleaned.append(arr)
        self.flux = tuple(cleaned)

    @classmethod
    def zeros(cls, domain: LatticeDomain) -> "FluxField":
        return cls(domain, tuple(np.zeros(s) for s in _FACE_SHAPES(domain.N)))

    def copy_arrays(self) -> list[np.ndarray]:
        return [f.copy() for f in self.flux]

    def __add__(self, other: "FluxField") -> "FluxField":
        return FluxField(self.domain, tuple(a + b for a, b in zip(self.flux, other.flux)))

    def __sub__(self, other: "FluxField") -> "FluxField":
        return FluxField(self.domain, tuple(a - b for a, b in zip(self.flux, other.flux)))

    def __mul__(self, s: float) -> "FluxField":
        return FluxField(self.domain, tuple(a * s for a in self.flux))

    __rmul__ = __mul__

    def total_mass(self) -> float:
        """Sum of |flux| over all classified faces."""
        return float(sum(np.abs(f[c != EXTERIOR]).sum()
                         for f, c in zip(self.flux, self.domain.cls)))

    def max_abs(self) -> float:
        return float(max((np.abs(f).max() for f in self.flux), default=0.0))


@dataclass
class ChargeSet:
    """Integer net outflow per cell: the discrete singular set with multiplicities."""

    charges: Dict[Cell, int]

    def total(self) -> int:
        return sum(self.charges.values())

    def __len__(self) -> int:
        return len(self.charges)

    def cells(self) -> list[Cell]:
        return sorted(self.charges)

    def count(self) -> int:
        """Total multiplicity, sum of |q|."""
        return sum(abs(q) for q in self.charges.values())


@dataclass
class BoundaryData:
    """Outward-oriented flux per boundary face plus the rounded degree."""

    domain: LatticeDomain
    values: Tuple[np.ndarray, ...]   # outward-oriented; zero off the boundary
    degree: int

    def mass(self) -> float:
        return float(sum(np.abs(v).sum() for v in self.values))

    def net(self) -> float:
        return float(sum(v.sum() for v in self.values))

    def __getitem__(self, face: Face) -> float:
        ax, i, j, k = face
        return float(self.values[ax][i, j, k])

    def scaled(self, s: float) -> "BoundaryData":
        data = tuple(v * s for v in self.values)
        deg = int(round(sum(v.sum() for v in data)))
        return BoundaryData(self.domain, data, deg)


def boundary_data_from_values(dom: LatticeDomain, values, tol: float = TOL_ANALYTIC,
                              ) -> BoundaryData:
    vals = []
    for ax in range(3):
        arr = np.asarray(values[ax], dtype=float)
        arr = np.where(dom.cls[ax] == BOUNDARY, arr, 0.0)
        vals.append(arr)
    net = float(sum(v.sum() for v in vals))
    deg = round(net)
    if abs(net - deg) > tol:
        raise NonIntegralDegree(f"boundary flux total {net} is {abs(net-deg):.3e} from an integer")
    return BoundaryData(dom, tuple(vals), deg)


# ---------------------------------------------------------------------------
# core operations


def divergence(X: FluxField) -> np.ndarray:
    """Per-cell net outflow: sum of outward fluxes over the six faces.

    Returns an (N, N, N) array; entries outside the interior mask are zero.
    """
    dom = X.domain
    fx, fy, fz = X.flux
    div = (fx[1:, :, :] - fx[:-1, :, :]
           + fy[:, 1:, :] - fy[:, :-1, :]
           + fz[:, :, 1:] - fz[:, :, :-1])
    return np.where(dom.interior, div, 0.0)


def check_integer_fluxes(X: FluxField, tol: float = TOL_ANALYTIC) -> ChargeSet:
    """Round per-cell divergences to integers, verifying each within ``tol``."""
    if not tol < 0.5:
        raise ValueError("tolerance must be < 1/2")
    div = divergence(X)
    rounded = np.rint(div)
    dev = np.abs(div - rounded)
    bad = dev > tol
    bad &= X.domain.interior
    if bad.any():
        cell = tuple(int(v) for v in np.argwhere(bad)[0])
        raise NonIntegralDivergence(cell, float(dev[bad].max()))
    charges = {}
    nz = X.domain.interior & (rounded != 0)
    for idx in np.argwhere(nz):
        cell = tuple(int(v) for v in idx)
        charges[cell] = int(rounded[cell])
    return ChargeSet(charges)


def cell_vectors(X: FluxField) -> np.ndarray:
    """Signed per-cell field vector from arithmetic face averages, (N, N, N, 3).

    Face fluxes are divided by the face area h^2, so the result is in field
    units.  Entries outside the interior mask are zero.  Used for
    direction-sensitive diagnostics; the energy quadrature uses the
    quadratic per-axis average (see :func:`cell_magnitude2`).
    """
    dom = X.domain
    area = dom.h ** 2
    fx, fy, fz = X.flux
    cx = (fx[:-1, :, :] + fx[1:, :, :]) / (2 * area)
    cy = (fy[:, :-1, :] + fy[:, 1:, :]) / (2 * area)
    cz = (fz[:, :, :-1] + fz[:, :, 1:]) / (2 * area)
    vec = np.stack([cx, cy, cz], axis=-1)
    vec[~dom.interior] = 0.0
    return vec


def cell_magnitude2(X: FluxField) -> np.ndarray:
    """Squared per-cell magnitude |X_cell|^2 by axis-wise quadratic face averages.

    |X_cell|^2 = sum over axes of (f_minus^2 + f_plus^2) / (2 h^4).  This is
    a strictly convex function of the face fluxes (it is the squared
    Euclidean norm of a nonsingular linear map), exact on constant fields,
    and monotone under per-face magnitude decrease, which is what makes
    elementary operations never increase the energy.
    """
    dom = X.domain
    area2 = dom.h ** 4
    fx, fy, fz = X.flux
    m2 = ((fx[:-1, :, :] ** 2 + fx[1:, :, :] ** 2)
          + (fy[:, :-1, :] ** 2 + fy[:, 1:, :] ** 2)
          + (fz[:, :, :-1] ** 2 + fz[:, :, 1:] ** 2)) / (2 * area2)
    return np.where(dom.interior, m2, 0.0)


def _check_exponent(p: float):
    if not (1.0 < p < 1.5):
        raise ExponentOutOfRange(f"p={p} outside the valid range ]1, 3/2[")


def energy_density(X: FluxField, p: float) -> np.ndarray:
    """Per-cell contribution |X_cell|^p * h^3 (zero outside the mask)."""
    _check_exponent(p)
    return cell_magnitude2(X) ** (p / 2) * X.domain.h ** 3


def energy(X: FluxField, p: float) -> float:
    """L^p energy: sum over interior cells of |X_cell|^p h^3."""
    return float(energy_density(X, p).sum())


def lp_norm(X: FluxField, p: float) -> float:
    return energy(X, p) ** (1.0 / p)


def boundary_trace(X: FluxField, tol: float = TOL_ANALYTIC) -> BoundaryData:
    """Outward-oriented restriction of the flux to the boundary faces."""
    dom = X.domain
    vals = tuple(np.where(dom.cls[ax] == BOUNDARY,
                          X.flux[ax] * dom.sgn[ax], 0.0) for ax in range(3))
    return boundary_data_from_values(dom, vals, tol=tol)


def impose_boundary(dom: LatticeDomain, B: BoundaryData) -> Tuple[np.ndarray, ...]:
    """Axis-oriented flux arrays carrying B on the boundary faces, zero elsewhere."""
    return tuple(np.where(dom.cls[ax] == BOUNDARY,
                          B.values[ax] * dom.sgn[ax], 0.0) for ax in range(3))


# ---------------------------------------------------------------------------
# analytic samplers (oracles and presets)


def _triangle_solid_angle(r1, r2, r3):
    n1 = np.linalg.norm(r1, axis=-1)
    n2 = np.linalg.norm(r2, axis=-1)
    n3 = np.linalg.norm(r3, axis=-1)
    num = np.einsum("...i,...i->...", r1, np.cross(r2, r3))
    den = (n1 * n2 * n3
           + np.einsum("...i,...i->...", r1, r2) * n3
           + np.einsum("...i,...i->...", r1, r3) * n2
           + np.einsum("...i,...i->...", r2, r3) * n1)
    return 2.0 * np.arctan2(num, den)


def _face_solid_angles(dom: LatticeDomain, axis: int, source) -> np.ndarray:
    """Signed solid angle (oriented along +axis) of every face on one axis."""
    N, h, lo = dom.N, dom.h, -dom.R
    u, v = (axis + 1) % 3, (axis + 2) % 3  # cyclic: right-hand normal = +axis
    shape = _FACE_SHAPES(N)[axis]
    grids = np.indices(shape).astype(float)
    base = np.empty(shape + (3,), dtype=float)
    base[..., axis] = lo + grids[axis] * h
    base[..., u] = lo + grids[u] * h
    base[..., v] = lo + grids[v] * h
    # corners counterclockwise seen from the +axis side (right-hand normal = +axis)
    du = np.zeros(3); du[u] = h
    dv = np.zeros(3); dv[v] = h
    c1 = base
    c2 = base + du
    c3 = base + du + dv
    c4 = base + dv
    src = np.asarray(source, dtype=float)
    r1, r2, r3, r4 = c1 - src, c2 - src, c3 - src, c4 - src
    return _triangle_solid_angle(r1, r2, r3) + _triangle_solid_angle(r1, r3, r4)


def monopole_field(dom: LatticeDomain, center=None) -> FluxField:
    """Exact lattice sampling of the radial unit-charge field x/(4π|x|³).

    Face fluxes are exact signed solid angles over 4π, so the divergence is
    exactly +1 on the cell containing ``center`` and exactly 0 elsewhere.
    ``center`` defaults to the interior cell center nearest the origin and
    must stay off the lattice face planes.
    """
    if center is None:
        center = default_charge_cell_center(dom)
    flux = []
    for ax in range(3):
        omega = _face_solid_angles(dom, ax, center) / (4.0 * np.pi)
        omega = np.where(dom.cls[ax] == EXTERIOR, 0.0, omega)
        flux.append(omega)
    return FluxField(dom, tuple(flux))


def default_charge_cell_center(dom: LatticeDomain) -> Tuple[float, float, float]:
    """Center of the interior cell nearest the domain's ball center."""
    r = dom.cell_radii(dom.ball_center)
    r = np.where(dom.interior, r, np.inf)
    cell = np.unravel_index(int(np.argmin(r)), r.shape)
    return tuple(float(v) for v in dom.cell_centers()[cell])


def cell_center_of(dom: LatticeDomain, cell: Cell) -> Tuple[float, float, float]:
    return tuple(float(v) for v in dom.cell_centers()[tuple(cell)])


def nearest_interior_cell(dom: LatticeDomain, point) -> Cell:
    d = dom.cell_centers() - np.asarray(point, dtype=float)
    r = (d * d).sum(axis=-1)
    r = np.where(dom.interior, r, np.inf)
    return tuple(int(v) for v in np.unravel_index(int(np.argmin(r)), r.shape))


def dipole_field(dom: LatticeDomain, center_pos, center_neg) -> FluxField:
    plus = monopole_field(dom, center_pos)
    minus = monopole_field(dom, center_neg)
    return plus - minus


def uniform_field(dom: LatticeDomain, vec) -> FluxField:
    """Constant field: flux = v·n times the face area (exact quadrature)."""
    v = np.asarray(vec, dtype=float)
    area = dom.h ** 2
    flux = []
    for ax in range(3):
        arr = np.full(_FACE_SHAPES(dom.N)[ax], v[ax] * area)
        arr = np.where(dom.cls[ax] == EXTERIOR, 0.0, arr)
        flux.append(arr)
    return FluxField(dom, tuple(flux))


def sample_field(dom: LatticeDomain, func: Callable[[np.ndarray], np.ndarray],
                 ) -> FluxField:
    """Midpoint-rule face quadrature of an analytic vector field.

    ``func`` maps an (..., 3) array of points to (..., 3) field values.
    """
    area = dom.h ** 2
    flux = []
    for ax in range(3):
        pts = dom.face_centers(ax)
        vals = np.asarray(func(pts))[..., ax] * area
        vals = np.where(dom.cls[ax] == EXTERIOR, 0.0, vals)
        flux.append(vals)
    return FluxField(dom, tuple(flux))


def curl_potential_field(dom: LatticeDomain,
                         potential: Callable[[np.ndarray], np.ndarray]) -> FluxField:
    """Exactly divergence-free sampling: face fluxes are circulations of W.

    The vector potential ``potential`` is integrated over the lattice edges
    (midpoint rule); each face flux is the signed sum of its four edge
    circulations, so every cell divergence telescopes to exactly zero.
    """
    N, h, lo = dom.N, dom.h, -dom.R
    planes = lo + np.arange(N + 1) * h
    mids = lo + (np.arange(N) + 0.5) * h

    edge_vals = []
    for ax in range(3):
        coords = [planes, planes, planes]
        coords[ax] = mids
        A, B, C = np.meshgrid(*coords, indexing="ij")
        pts = np.stack([A, B, C], axis=-1)
        edge_vals.append(np.asarray(potential(pts))[..., ax] * h)
    Ax, Ay, Az = edge_vals

    fx = (Ay[:, :, :-1] + Az[:, 1:, :] - Ay[:, :, 1:] - Az[:, :-1, :])
    fy = (Az[:-1, :, :] + Ax[:, :, 1:] - Az[1:, :, :] - Ax[:, :, :-1])
    fz = (Ax[:, :-1, :] + Ay[1:, :, :] - Ax[:, 1:, :] - Ay[:-1, :, :])
    flux = []
    for ax, arr in enumerate((fx, fy, fz)):
        flux.append(np.where(dom.cls[ax] == EXTERIOR, 0.0, arr))
    return FluxField(dom, tuple(flux))
