"""Named boundary-data presets and run-config parsing.

Boundary specs accepted by the CLI and the config files:

    zero                      all-zero trace
    uniform-degree-K          exact radial trace of K unit charges at the origin
    dipole-cap[:key=val,...]  trace of a +/- pair on the z-axis; keys: sep
                              (center separation, default 0.8R) and mass
                              (rescale so the total |trace| equals this)
    @path                     boundary file (see fieldio.save_boundary)

The uniform preset computes exact per-face solid angles, so its degree is
exactly K on every resolution.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from . import fieldio
from .errors import FieldFormatError
from .lattice import (
    BOUNDARY,
    BoundaryData,
    LatticeDomain,
    boundary_data_from_values,
    nearest_interior_cell,
    cell_center_of,
    _face_solid_angles,
)


def uniform_degree_trace(dom: LatticeDomain, k: int) -> BoundaryData:
    """Radial boundary data of exact integer degree k (flux k per solid angle)."""
    vals = []
    for ax in range(3):
        omega = _face_solid_angles(dom, ax, (0.0, 0.0, 0.0)) * (k / (4.0 * np.pi))
        vals.append(np.where(dom.cls[ax] == BOUNDARY, omega * dom.sgn[ax], 0.0))
    return boundary_data_from_values(dom, vals)


def dipole_cap_trace(dom: LatticeDomain, sep: float | None = None,
                     mass: float | None = None) -> BoundaryData:
    """Degree-0 trace of a +/- charge pair on the z-axis.

    Charge positions snap to cell centers so that no face plane contains
    them.  With ``mass`` given, the trace is rescaled to that total |flux|
    (the degree stays 0).
    """
    if sep is None:
        sep = 0.8 * dom.R
    plus = cell_center_of(dom, nearest_interior_cell(dom, (0.0, 0.0, +sep / 2)))
    minus = cell_center_of(dom, nearest_interior_cell(dom, (0.0, 0.0, -sep / 2)))
    vals = []
    for ax in range(3):
        omega = (_face_solid_angles(dom, ax, plus)
                 - _face_solid_angles(dom, ax, minus)) / (4.0 * np.pi)
        vals.append(np.where(dom.cls[ax] == BOUNDARY, omega * dom.sgn[ax], 0.0))
    B = boundary_data_from_values(dom, vals)
    if mass is not None:
        raw = B.mass()
        if raw > 0:
            B = B.scaled(mass / raw)
    return B


def make_boundary(dom: LatticeDomain, spec: str) -> BoundaryData:
    spec = spec.strip()
    if spec.startswith("@"):
        return fieldio.load_boundary(spec[1:], dom)
    if spec == "zero":
        return boundary_data_from_values(
            dom, tuple(np.zeros_like(dom.sgn[ax], dtype=float) for ax in range(3)))
    m = re.fullmatch(r"uniform-degree-(-?\d+)", spec)
    if m:
        return uniform_degree_trace(dom, int(m.group(1)))
    if spec.startswith("dipole-cap"):
        kwargs = {}
        if ":" in spec:
            for item in spec.split(":", 1)[1].split(","):
                key, _, val = item.partition("=")
                if key not in ("sep", "mass") or not val:
                    raise ValueError(f"bad dipole-cap option {item!r}")
                kwargs[key] = float(val)
        return dipole_cap_trace(dom, **kwargs)
    raise ValueError(f"unknown boundary spec {spec!r}")


# ---------------------------------------------------------------------------
# run-config files


CONFIG_KEYS = {"N", "R", "p", "boundary", "charges_init", "convex_tol",
               "max_outer_iters", "seed", "shell_eps", "out_dir"}

DEFAULTS = {
    "R": 1.0,
    "p": 1.2,
    "boundary": "zero",
    "charges_init": "",
    "convex_tol": 1e-3,
    "max_outer_iters": 30,
    "seed": 0,
    "shell_eps": 0.1,
    "out_dir": "runs/out",
}


def parse_config(path) -> dict:
    cfg = dict(DEFAULTS)
    seen_n = False
    for ln, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not eq or key not in CONFIG_KEYS:
            raise FieldFormatError(f"bad config line {raw!r}", line=ln)
        cfg[key] = val
        if key == "N":
            seen_n = True
    if not seen_n:
        raise FieldFormatError("config must set N")
    cfg["N"] = int(cfg["N"])
    cfg["R"] = float(cfg["R"])
    cfg["p"] = float(cfg["p"])
    cfg["convex_tol"] = float(cfg["convex_tol"])
    cfg["max_outer_iters"] = int(cfg["max_outer_iters"])
    cfg["seed"] = int(cfg["seed"])
    cfg["shell_eps"] = float(cfg["shell_eps"])
    return cfg


def parse_charges(spec: str) -> dict:
    """Parse 'i,j,k:q; i,j,k:q' into a charge map."""
    charges = {}
    for item in spec.split(";"):
        item = item.strip()
        if not item:
            continue
        cell_s, _, q_s = item.partition(":")
        i, j, k = (int(v) for v in cell_s.split(","))
        charges[(i, j, k)] = int(q_s)
    return charges


def bundled_config(name: str) -> Path:
    """Path of a bundled preset config (monopole.cfg, zero.cfg, smallmass.cfg)."""
    here = Path(__file__).parent / "presets" / name
    if not here.exists():
        raise FileNotFoundError(f"no bundled preset {name!r}")
    return here
