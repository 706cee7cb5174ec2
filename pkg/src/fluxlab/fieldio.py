"""Field, charge and boundary file formats.

Text field format, one record per classified face::

    fluxfield v1 N R
    axis i j k flux

Floats are written with ``repr`` so both directions round-trip bit-exactly.
The binary variant carries a 16-byte magic header followed by little-endian
N (int64), R (float64), record count (int64) and flat arrays of face ids
(int8 axis + 3x int32) and float64 fluxes.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np

from .errors import FieldFormatError
from .lattice import (
    EXTERIOR,
    BOUNDARY,
    BoundaryData,
    ChargeSet,
    FluxField,
    LatticeDomain,
    _FACE_SHAPES,
    boundary_data_from_values,
    build_domain,
)

MAGIC = b"FLUXFLD1\x00\x00\x00\x00\x00\x00\x00\x00"


def _classified_records(dom: LatticeDomain):
    """Deterministic (axis, i, j, k) order over all classified faces."""
    for ax in range(3):
        for i, j, k in np.argwhere(dom.cls[ax] != EXTERIOR):
            yield ax, int(i), int(j), int(k)


def save_field_text(X: FluxField, path) -> None:
    dom = X.domain
    lines = [f"fluxfield v1 {dom.N} {float(dom.R)!r}"]
    for ax, i, j, k in _classified_records(dom):
        lines.append(f"{ax} {i} {j} {k} {float(X.flux[ax][i, j, k])!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_field_text(path) -> FluxField:
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines:
        raise FieldFormatError("empty file", line=1)
    head = lines[0].split()
    if len(head) != 4 or head[0] != "fluxfield" or head[1] != "v1":
        raise FieldFormatError("bad header, expected 'fluxfield v1 N R'", line=1)
    try:
        N, R = int(head[2]), float(head[3])
    except ValueError:
        raise FieldFormatError("unparsable N/R in header", line=1)
    dom = build_domain(N, R)
    flux = [np.zeros(s) for s in _FACE_SHAPES(N)]
    seen = 0
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 5:
            raise FieldFormatError("expected 'axis i j k flux'", line=ln)
        try:
            ax, i, j, k = (int(p) for p in parts[:4])
            val = float(parts[4])
        except ValueError:
            raise FieldFormatError("unparsable face record", line=ln)
        if not (0 <= ax < 3):
            raise FieldFormatError(f"bad axis {ax}", line=ln)
        try:
            if dom.cls[ax][i, j, k] == EXTERIOR:
                raise FieldFormatError(f"face ({ax},{i},{j},{k}) is exterior", line=ln)
        except IndexError:
            raise FieldFormatError("face index out of range", line=ln)
        flux[ax][i, j, k] = val
        seen += 1
    expected = dom.n_classified_faces()
    if seen != expected:
        raise FieldFormatError(
            f"expected {expected} face records, found {seen}", line=len(lines))
    return FluxField(dom, tuple(flux))


def save_field_binary(X: FluxField, path) -> None:
    dom = X.domain
    recs = list(_classified_records(dom))
    axes = np.array([r[0] for r in recs], dtype=np.int8)
    ijk = np.array([r[1:] for r in recs], dtype=np.int32)
    vals = np.array([X.flux[r[0]][r[1], r[2], r[3]] for r in recs], dtype=np.float64)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.int64(dom.N).tobytes())
        fh.write(np.float64(dom.R).tobytes())
        fh.write(np.int64(len(recs)).tobytes())
        fh.write(axes.tobytes())
        fh.write(ijk.tobytes())
        fh.write(vals.tobytes())


def load_field_binary(path) -> FluxField:
    raw = Path(path).read_bytes()
    buf = io.BytesIO(raw)
    if buf.read(16) != MAGIC:
        raise FieldFormatError("bad magic header")
    N = int(np.frombuffer(buf.read(8), dtype=np.int64)[0])
    R = float(np.frombuffer(buf.read(8), dtype=np.float64)[0])
    n = int(np.frombuffer(buf.read(8), dtype=np.int64)[0])
    axes = np.frombuffer(buf.read(n), dtype=np.int8)
    ijk = np.frombuffer(buf.read(12 * n), dtype=np.int32).reshape(n, 3)
    vals = np.frombuffer(buf.read(8 * n), dtype=np.float64)
    dom = build_domain(N, R)
    flux = [np.zeros(s) for s in _FACE_SHAPES(N)]
    for ax, (i, j, k), v in zip(axes, ijk, vals):
        flux[ax][i, j, k] = v
    return FluxField(dom, tuple(flux))


def save_charges(C: ChargeSet, path) -> None:
    lines = [f"{i} {j} {k} {C.charges[(i, j, k)]}" for i, j, k in C.cells()]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def load_charges(path) -> ChargeSet:
    charges = {}
    for ln, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 4:
            raise FieldFormatError("expected 'i j k q'", line=ln)
        i, j, k, q = (int(p) for p in parts)
        charges[(i, j, k)] = q
    return ChargeSet(charges)


def save_boundary(B: BoundaryData, path) -> None:
    dom = B.domain
    lines = [f"boundarydata v1 {dom.N} {float(dom.R)!r}"]
    for ax in range(3):
        for i, j, k in np.argwhere(dom.cls[ax] == BOUNDARY):
            lines.append(f"{ax} {i} {j} {k} {float(B.values[ax][i, j, k])!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_boundary(path, dom: LatticeDomain | None = None) -> BoundaryData:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise FieldFormatError("empty file", line=1)
    head = lines[0].split()
    if len(head) != 4 or head[0] != "boundarydata" or head[1] != "v1":
        raise FieldFormatError("bad header, expected 'boundarydata v1 N R'", line=1)
    N, R = int(head[2]), float(head[3])
    if dom is None:
        dom = build_domain(N, R)
    elif dom.N != N:
        raise FieldFormatError(f"boundary file resolution {N} != domain {dom.N}")
    vals = [np.zeros(s) for s in _FACE_SHAPES(dom.N)]
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 5:
            raise FieldFormatError("expected 'axis i j k value'", line=ln)
        ax, i, j, k = (int(p) for p in parts[:4])
        vals[ax][i, j, k] = float(parts[4])
    return boundary_data_from_values(dom, vals)
