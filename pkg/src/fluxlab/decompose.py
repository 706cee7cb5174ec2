"""Total decomposition of a flux field into weighted paths and cycles.

A field with integer charges is peeled into simple lattice paths running
from sources (positive charges, inflow boundary faces) to sinks (negative
charges, outflow boundary faces), followed by cycles carrying the
divergence-free remainder.  Every face is crossed in the sign direction of
its flux, so peeling never cancels mass: the sum of |flux| over faces equals
the total path/cycle mass plus the residual, and the signed superposition of
all pieces reproduces the field face by face.

Peeling walks greedily along the locally widest sign-aligned face (ties
broken by lexicographic face index), which zeroes at least one face or
exhausts an anchor per emitted piece and is deterministic.  Cycles closing a
walk back on itself are excised and recorded as they appear.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np

from .errors import DecompositionError, FactorOutOfRange, InconsistentCharges
from .lattice import (
    BOUNDARY,
    EXTERIOR,
    Cell,
    ChargeSet,
    Face,
    FluxField,
    TOL_ANALYTIC,
    divergence,
)

# anchor = ("cell", (i, j, k)) for a charged cell, ("face", (a, i, j, k)) for
# a boundary face
Anchor = Tuple[str, tuple]

RESIDUAL_MASS_BOUND = 1e-9  # relative to the input mass


@dataclass
class LatticePath:
    """Weighted simple walk; ``steps`` hold (face, crossing sign) pairs."""

    weight: float
    steps: List[Tuple[Face, int]]
    start_anchor: Anchor
    end_anchor: Anchor

    def flipped(self) -> "LatticePath":
        steps = [(f, -s) for f, s in reversed(self.steps)]
        return LatticePath(self.weight, steps, self.end_anchor, self.start_anchor)

    def scaled(self, w: float) -> "LatticePath":
        return LatticePath(w, list(self.steps), self.start_anchor, self.end_anchor)


@dataclass
class PathDecomposition:
    paths: List[LatticePath]
    cycles: List[Tuple[float, List[Tuple[Face, int]]]]
    residual: FluxField
    domain: object = None

    def __post_init__(self):
        if self.domain is None:
            self.domain = self.residual.domain

    def total_path_mass(self) -> float:
        return sum(p.weight * len(p.steps) for p in self.paths)

    def total_cycle_mass(self) -> float:
        return sum(w * len(steps) for w, steps in self.cycles)


def _leave_candidates(work, dom, cell, eps):
    """Sign-aligned ways out of a cell, in lexicographic face order.

    Yields (face, sign, magnitude, next_cell); next_cell is None for a
    boundary exit.
    """
    i, j, k = cell
    for ax, face, sign, nxt in (
        (0, (0, i, j, k), -1, (i - 1, j, k)),
        (0, (0, i + 1, j, k), 1, (i + 1, j, k)),
        (1, (1, i, j, k), -1, (i, j - 1, k)),
        (1, (1, i, j + 1, k), 1, (i, j + 1, k)),
        (2, (2, i, j, k), -1, (i, j, k - 1)),
        (2, (2, i, j, k + 1), 1, (i, j, k + 1)),
    ):
        idx = face[1:]
        c = dom.cls[ax][idx]
        if c == EXTERIOR:
            continue
        val = work[ax][idx]
        if sign * val <= eps:
            continue
        yield face, sign, sign * val, (None if c == BOUNDARY else nxt)


def _best_candidate(work, dom, cell, eps):
    best = None
    for cand in _leave_candidates(work, dom, cell, eps):
        if best is None or cand[2] > best[2]:
            best = cand
    return best


def _peel(work, steps, w, eps):
    for (ax, i, j, k), sign in steps:
        v = work[ax][i, j, k] - sign * w
        work[ax][i, j, k] = 0.0 if abs(v) <= eps else v


def _bottleneck(work, steps):
    return min(abs(work[ax][i, j, k]) for (ax, i, j, k), _ in steps)


class _Walker:
    """Greedy sign-aligned walk with on-the-fly cycle excision."""

    def __init__(self, work, dom, eps, cycles):
        self.work = work
        self.dom = dom
        self.eps = eps
        self.cycles = cycles

    def walk(self, start_cell: Cell, prefix, demand: Callable[[Cell], float],
             allow_exit: bool = True):
        """Walk until a sink; returns (steps, end_cell, end_face) or None if stuck.

        ``prefix`` holds already-fixed entry steps (the inflow boundary face
        for boundary-anchored walks).  A cell with ``demand(cell) > eps`` ends
        the walk once at least one step was taken; a boundary exit ends it
        with ``end_face`` set.  Cycles detected on the way are peeled
        immediately and appended to ``self.cycles``.
        """
        cells = [start_cell]
        pos = {start_cell: 0}
        steps = list(prefix)
        npre = len(prefix)
        while True:
            cur = cells[-1]
            if steps and demand(cur) > self.eps:
                return steps, cur, None
            cand = _best_candidate(self.work, self.dom, cur, self.eps)
            if cand is None:
                return None
            face, sign, _, nxt = cand
            if nxt is None:
                if not allow_exit:
                    return None
                steps.append((face, sign))
                return steps, None, face
            if nxt in pos:
                q = pos[nxt]
                # transition m (cells[m] -> cells[m+1]) sits at steps[npre + m]
                cyc = steps[npre + q:] + [(face, sign)]
                w = _bottleneck(self.work, cyc)
                _peel(self.work, cyc, w, self.eps)
                self.cycles.append((w, cyc))
                for c in cells[q + 1:]:
                    del pos[c]
                del cells[q + 1:]
                del steps[npre + q:]
                continue
            steps.append((face, sign))
            pos[nxt] = len(cells)
            cells.append(nxt)


def decompose(X: FluxField, C: ChargeSet, tol: float = TOL_ANALYTIC,
              ) -> PathDecomposition:
    """Totally decompose ``X`` into paths between anchors plus cycles.

    ``C`` must match the field divergence within ``tol`` per cell.
    """
    dom = X.domain
    div = np.where(dom.interior, divergence(X), 0.0)
    dev = np.abs(div - _charge_grid(dom, C))
    worst = float(dev.max())
    if worst > tol:
        cell = tuple(int(v) for v in np.argwhere(dev == dev.max())[0])
        raise InconsistentCharges(
            f"divergence at {cell} deviates from charge by {worst:.3e}")

    work = X.copy_arrays()
    scale = X.max_abs()
    eps = max(1e-15, 1e-12 * scale)
    total_mass = X.total_mass()

    paths: List[LatticePath] = []
    cycles: List[Tuple[float, list]] = []
    walker = _Walker(work, dom, eps, cycles)

    demands = {c: float(-q) for c, q in C.charges.items() if q < 0}
    supplies = {c: float(q) for c, q in C.charges.items() if q > 0}

    def demand(cell):
        return demands.get(cell, 0.0)

    def consume_demand(cell, w):
        left = demands[cell] - w
        demands[cell] = 0.0 if left <= eps else left

    # paths out of positive charges
    for cell in sorted(supplies):
        while supplies[cell] > eps:
            res = walker.walk(cell, [], demand)
            if res is None:
                break
            steps, end_cell, end_face = res
            w = min(supplies[cell], _bottleneck(work, steps))
            if end_cell is not None:
                w = min(w, demands[end_cell])
                end_anchor: Anchor = ("cell", end_cell)
            else:
                end_anchor = ("face", end_face)
            _peel(work, steps, w, eps)
            left = supplies[cell] - w
            supplies[cell] = 0.0 if left <= eps else left
            if end_cell is not None:
                consume_demand(end_cell, w)
            paths.append(LatticePath(w, steps, ("cell", cell), end_anchor))

    # paths entering through inflow boundary faces
    for face in dom.boundary_faces():
        ax = face[0]
        idx = face[1:]
        sg = int(dom.sgn[ax][idx])
        lo, hi = dom.face_cells(face)
        inner = lo if lo is not None else hi
        # outward-oriented trace < 0 means flux enters the domain here
        while work[ax][idx] * sg < -eps:
            sign = 1 if work[ax][idx] > 0 else -1
            res = walker.walk(inner, [(face, sign)], demand)
            if res is None:
                break
            steps, end_cell, end_face = res
            w = _bottleneck(work, steps)
            if end_cell is not None:
                w = min(w, demands[end_cell])
                end_anchor = ("cell", end_cell)
            else:
                end_anchor = ("face", end_face)
            _peel(work, steps, w, eps)
            if end_cell is not None:
                consume_demand(end_cell, w)
            paths.append(LatticePath(w, steps, ("face", face), end_anchor))

    # divergence-free remainder: peel cycles by walking from each leftover face
    no_demand = lambda c: 0.0
    blocked = set()
    for ax in range(3):
        for raw in np.argwhere((np.abs(work[ax]) > eps) & (dom.cls[ax] != EXTERIOR)):
            face = (ax, int(raw[0]), int(raw[1]), int(raw[2]))
            while abs(work[ax][face[1:]]) > eps and face not in blocked:
                sign = 1 if work[ax][face[1:]] > 0 else -1
                up, down = _face_cells_oriented(dom, face, sign)
                if up is None or down is None:
                    blocked.add(face)
                    break
                n_before = len(cycles)
                walker.walk(up, [], no_demand, allow_exit=False)
                if len(cycles) == n_before:
                    blocked.add(face)

    residual_arrays = tuple(np.where(np.abs(w) <= eps, 0.0, w) for w in work)
    residual_mass = float(sum(np.abs(a).sum() for a in residual_arrays))
    if total_mass > 0 and residual_mass > RESIDUAL_MASS_BOUND * total_mass:
        raise DecompositionError(
            f"residual mass {residual_mass:.3e} exceeds "
            f"{RESIDUAL_MASS_BOUND:.0e} of total mass {total_mass:.3e}")
    residual = FluxField(dom, residual_arrays)
    paths = [p for p in paths if p.weight > 0]
    cycles = [(w, s) for w, s in cycles if w > 0]
    return PathDecomposition(paths=paths, cycles=cycles, residual=residual, domain=dom)


def _charge_grid(dom, C: ChargeSet) -> np.ndarray:
    grid = np.zeros((dom.N,) * 3)
    for cell, q in C.charges.items():
        grid[cell] = q
    return grid


def _face_cells_oriented(dom, face: Face, sign: int):
    """(upstream, downstream) cells of a face crossed with ``sign``."""
    lo, hi = dom.face_cells(face)
    return (lo, hi) if sign > 0 else (hi, lo)


def recompose(D: PathDecomposition) -> FluxField:
    """Signed superposition of paths, cycles and residual."""
    dom = D.domain
    arrays = D.residual.copy_arrays()
    for p in D.paths:
        for (ax, i, j, k), sign in p.steps:
            arrays[ax][i, j, k] += sign * p.weight
    for w, steps in D.cycles:
        for (ax, i, j, k), sign in steps:
            arrays[ax][i, j, k] += sign * w
    return FluxField(dom, tuple(arrays))


def apply_elementary_op(D: PathDecomposition,
                        selector: Callable[[Anchor, Anchor], bool],
                        alpha: float) -> PathDecomposition:
    """Scale selected path classes by ``alpha`` in [-1, 1].

    Negative factors reverse the orientation of the selected paths.  The
    selector sees (start_anchor, end_anchor) and must only depend on their
    classes.  Cycles and the residual are untouched.
    """
    if not -1.0 <= alpha <= 1.0:
        raise FactorOutOfRange(f"alpha={alpha} outside [-1, 1]")
    paths = []
    for p in D.paths:
        if not selector(p.start_anchor, p.end_anchor):
            paths.append(p)
            continue
        w = abs(alpha) * p.weight
        if w == 0.0:
            continue
        q = p.flipped() if alpha < 0 else p
        paths.append(q.scaled(w))
    return PathDecomposition(paths=paths, cycles=list(D.cycles),
                             residual=D.residual, domain=D.domain)


# ---------------------------------------------------------------------------
# dump format


def _fmt_anchor(a: Anchor) -> str:
    kind, idx = a
    return f"{kind}:{','.join(str(v) for v in idx)}"


def _fmt_step(step) -> str:
    (ax, i, j, k), sign = step
    return f"{ax},{i},{j},{k},{'+' if sign > 0 else '-'}"


def dump_decomposition(D: PathDecomposition) -> str:
    """Text dump: `P w anchorA anchorB n face...` / `C w n face...` lines."""
    lines = [f"decomposition v1 {D.domain.N} {float(D.domain.R)!r}"]
    for p in D.paths:
        faces = " ".join(_fmt_step(s) for s in p.steps)
        lines.append(f"P {float(p.weight)!r} {_fmt_anchor(p.start_anchor)} "
                     f"{_fmt_anchor(p.end_anchor)} {len(p.steps)} {faces}")
    for w, steps in D.cycles:
        faces = " ".join(_fmt_step(s) for s in steps)
        lines.append(f"C {float(w)!r} {len(steps)} {faces}")
    return "\n".join(lines) + "\n"
