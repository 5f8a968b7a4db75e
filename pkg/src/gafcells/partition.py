"""Cell lattices over a box field, subcell rotation/sliding, and requirement audits."""
from __future__ import annotations

import io
import itertools
import math
from dataclasses import dataclass, field as dc_field
from typing import Iterable, Mapping

import numpy as np
from shapely.geometry import Polygon, box as shapely_box

from .bounds import (
    INFINITESIMAL,
    Protocol,
    SubcellRegime,
    UnsupportedCombination,
    max_cell,
    quotient_allowed,
)
from .geometry import SQRT3, ShapeKind

CONSTRUCTIBLE = (ShapeKind.SQUARE, ShapeKind.TRIANGLE, ShapeKind.HEXAGON, ShapeKind.CUBE)
_EPS = 1e-9


class NotConstructible(ValueError):
    pass


class OutsideField(ValueError):
    pass


@dataclass(frozen=True)
class Field:
    extent: tuple[float, ...]
    origin: tuple[float, ...] | None = None

    def __post_init__(self):
        extent = tuple(float(e) for e in self.extent)
        if len(extent) not in (2, 3):
            raise ValueError("field must be 2D or 3D")
        if any(not (math.isfinite(e) and e > 0) for e in extent):
            raise ValueError(f"field extents must be positive, got {extent}")
        origin = (0.0,) * len(extent) if self.origin is None else tuple(float(o) for o in self.origin)
        if len(origin) != len(extent):
            raise ValueError("origin and extent dimensions differ")
        object.__setattr__(self, "extent", extent)
        object.__setattr__(self, "origin", origin)

    @property
    def dimension(self) -> int:
        return len(self.extent)

    @property
    def low(self) -> np.ndarray:
        return np.asarray(self.origin)

    @property
    def high(self) -> np.ndarray:
        return np.asarray(self.origin) + np.asarray(self.extent)

    @property
    def measure(self) -> float:
        return float(np.prod(self.extent))

    def contains(self, points, tol: float = _EPS) -> np.ndarray:
        pts = np.atleast_2d(points)
        span = tol * max(self.extent)
        return np.all((pts >= self.low - span) & (pts <= self.high + span), axis=1)


@dataclass(frozen=True)
class PartitionScheme:
    protocol: Protocol
    kind: ShapeKind
    size: float
    subcell: float | None = None
    epoch: float = 60.0

    def __post_init__(self):
        object.__setattr__(self, "protocol", Protocol(self.protocol))
        object.__setattr__(self, "kind", ShapeKind(self.kind))
        if self.kind not in CONSTRUCTIBLE:
            raise NotConstructible(
                f"no global tessellation supported for {self.kind.value} cells;"
                " analyse them per cell with the bounds module"
            )
        if not (math.isfinite(self.size) and self.size > 0):
            raise ValueError("cell size must be positive")
        if not self.epoch > 0:
            raise ValueError("rotation epoch must be positive")
        if self.protocol is Protocol.GAF:
            if self.subcell is not None:
                raise ValueError("GAF cells have no subcells")
            return
        if self.kind not in (ShapeKind.SQUARE, ShapeKind.CUBE):
            raise UnsupportedCombination(
                f"subcell rotation/sliding is implemented for square and cube lattices,"
                f" not {self.kind.value}"
            )
        if self.subcell is None:
            raise ValueError(f"{self.protocol.value} partitions need a finite subcell size")
        m = self.size / self.subcell
        if abs(m - round(m)) > 1e-9 * max(1.0, m) or round(m) < 1:
            raise ValueError(f"cell size {self.size} is not a multiple of subcell {self.subcell}")
        if not quotient_allowed(self.protocol, self.kind, round(m)):
            raise ValueError(f"quotient {round(m)} not allowed for {self.protocol.value}")

    @property
    def dimension(self) -> int:
        return self.kind.dimension

    @property
    def quotient(self) -> int | None:
        """Subcells per axis, ``m = r/d``."""
        return None if self.subcell is None else int(round(self.size / self.subcell))

    def check_range(self, R: float) -> None:
        """Raise if the cell size exceeds the binding maximum for range ``R``."""
        regime = INFINITESIMAL
        if self.subcell is not None and self.kind is ShapeKind.SQUARE:
            regime = SubcellRegime(self.subcell)
        try:
            report = max_cell(self.protocol, self.kind, R, regime)
        except UnsupportedCombination as exc:
            raise ValueError(f"strict range check impossible: {exc}") from exc
        if self.size > report.combined_max_size * (1 + 1e-12):
            raise ValueError(
                f"cell size {self.size} exceeds the maximum {report.combined_max_size:.6g} for R={R}"
            )


# ---------------------------------------------------------------------------
# lattices (local coordinates: field origin plus sliding offset removed)


class _Hypercubic:
    def __init__(self, size: float, dimension: int):
        self.r = size
        self.dimension = dimension

    def locate(self, local, lower: bool = True) -> np.ndarray:
        u = local / self.r
        idx = np.ceil(u) - 1 if lower else np.floor(u)
        return idx.astype(np.int64)

    def vertices(self, index) -> np.ndarray:
        lo = np.asarray(index, dtype=float) * self.r
        if self.dimension == 2:
            corners = [(0, 0), (1, 0), (1, 1), (0, 1)]
        else:
            corners = list(itertools.product((0, 1), repeat=3))
        return lo + np.asarray(corners, dtype=float) * self.r

    def centroid(self, index) -> np.ndarray:
        return (np.asarray(index, dtype=float) + 0.5) * self.r

    def neighbors(self, index) -> list[tuple]:
        out = []
        for axis in range(self.dimension):
            for step in (-1, 1):
                nb = list(index)
                nb[axis] += step
                out.append(tuple(nb))
        return out

    def candidates(self, lo, hi) -> Iterable[tuple]:
        ranges = [
            range(int(math.floor(lo[a] / self.r + _EPS)), int(math.ceil(hi[a] / self.r - _EPS)))
            for a in range(self.dimension)
        ]
        return itertools.product(*ranges)


class _Triangular:
    """Alternating up (k=0) / down (k=1) triangles of height ``h`` on a rhombic grid."""

    dimension = 2

    def __init__(self, height: float):
        self.h = height
        self.a = 2 * height / SQRT3
        self.e1 = np.array([self.a, 0.0])
        self.e2 = np.array([self.a / 2, self.h])

    def _uv(self, local):
        v = local[:, 1] / self.h
        u = local[:, 0] / self.a - v / 2
        return u, v

    def locate(self, local, lower: bool = True) -> np.ndarray:
        u, v = self._uv(np.atleast_2d(local))
        if lower:
            i, j = np.ceil(u) - 1, np.ceil(v) - 1
            k = (u - i) + (v - j) > 1 + 1e-12
        else:
            i, j = np.floor(u), np.floor(v)
            k = (u - i) + (v - j) >= 1 - 1e-12
        return np.stack([i, j, k], axis=1).astype(np.int64)

    def vertices(self, index) -> np.ndarray:
        i, j, k = index
        base = i * self.e1 + j * self.e2
        if k == 0:
            return np.array([base, base + self.e1, base + self.e2])
        return np.array([base + self.e1, base + self.e1 + self.e2, base + self.e2])

    def centroid(self, index) -> np.ndarray:
        return self.vertices(index).mean(axis=0)

    def neighbors(self, index) -> list[tuple]:
        i, j, k = index
        if k == 0:
            return [(i, j, 1), (i, j - 1, 1), (i - 1, j, 1)]
        return [(i, j, 0), (i + 1, j, 0), (i, j + 1, 0)]

    def candidates(self, lo, hi) -> Iterable[tuple]:
        j0, j1 = math.floor(lo[1] / self.h) - 1, math.ceil(hi[1] / self.h) + 1
        us = [self._uv(np.array([[x, y]]))[0][0] for x in (lo[0], hi[0]) for y in (lo[1], hi[1])]
        i0, i1 = math.floor(min(us)) - 1, math.ceil(max(us)) + 1
        for i in range(i0, i1 + 1):
            for j in range(j0, j1 + 1):
                for k in (0, 1):
                    yield (i, j, k)


class _Hexagonal:
    """Pointy-top hexagons of side ``s`` in axial coordinates ``(q, r)``."""

    dimension = 2
    _DIRS = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1)]

    def __init__(self, side: float):
        self.s = side

    def _center(self, q, r):
        return np.stack([self.s * SQRT3 * (q + r / 2), 1.5 * self.s * r], axis=-1)

    def locate(self, local, lower: bool = True) -> np.ndarray:
        local = np.atleast_2d(local)
        rf = local[:, 1] / (1.5 * self.s)
        qf = local[:, 0] / (self.s * SQRT3) - rf / 2
        q0, r0 = np.floor(qf), np.floor(rf)
        # candidates in lexicographic order so ties go to the lowest index
        cands = [(q0 + dq, r0 + dr) for dq in (0, 1) for dr in (0, 1)]
        dists = np.stack(
            [np.linalg.norm(local - self._center(q, r), axis=1) for q, r in cands], axis=1
        )
        best = dists.min(axis=1, keepdims=True)
        pick = np.argmax(dists <= best * (1 + 1e-12) + 1e-15, axis=1)
        if not lower:
            pick = dists.shape[1] - 1 - np.argmax(
                (dists <= best * (1 + 1e-12) + 1e-15)[:, ::-1], axis=1
            )
        q = np.choose(pick, [c[0] for c in cands])
        r = np.choose(pick, [c[1] for c in cands])
        return np.stack([q, r], axis=1).astype(np.int64)

    def vertices(self, index) -> np.ndarray:
        c = self._center(*map(float, index))
        ang = np.deg2rad(30 + 60 * np.arange(6))
        return c + self.s * np.stack([np.cos(ang), np.sin(ang)], axis=1)

    def centroid(self, index) -> np.ndarray:
        return self._center(*map(float, index))

    def neighbors(self, index) -> list[tuple]:
        q, r = index
        return [(q + dq, r + dr) for dq, dr in self._DIRS]

    def candidates(self, lo, hi) -> Iterable[tuple]:
        r0, r1 = math.floor(lo[1] / (1.5 * self.s)) - 1, math.ceil(hi[1] / (1.5 * self.s)) + 1
        for r in range(r0, r1 + 1):
            q0 = math.floor(lo[0] / (self.s * SQRT3) - r / 2) - 1
            q1 = math.ceil(hi[0] / (self.s * SQRT3) - r / 2) + 1
            for q in range(q0, q1 + 1):
                yield (q, r)


def _lattice(scheme: PartitionScheme):
    if scheme.kind is ShapeKind.SQUARE:
        return _Hypercubic(scheme.size, 2)
    if scheme.kind is ShapeKind.CUBE:
        return _Hypercubic(scheme.size, 3)
    if scheme.kind is ShapeKind.TRIANGLE:
        return _Triangular(scheme.size)
    return _Hexagonal(scheme.size)


# ---------------------------------------------------------------------------


@dataclass
class Partition:
    """Cells of a lattice intersecting the field; boundary cells are clipped."""

    field: Field
    scheme: PartitionScheme
    phase: int = 0
    offset: np.ndarray = dc_field(default=None)

    def __post_init__(self):
        if self.field.dimension != self.scheme.dimension:
            raise ValueError(
                f"{self.scheme.kind.value} cells need a {self.scheme.dimension}D field,"
                f" got {self.field.dimension}D"
            )
        self._lattice = _lattice(self.scheme)
        self.set_offset(np.zeros(self.field.dimension) if self.offset is None else self.offset)

    # -- construction ------------------------------------------------------

    def set_offset(self, offset) -> None:
        offset = np.asarray(offset, dtype=float).reshape(self.field.dimension)
        if np.any(np.abs(offset) > self.scheme.size / 2 * (1 + 1e-12)):
            raise ValueError(f"sliding offset {offset} outside [-r/2, r/2]")
        self.offset = offset
        self._build_cells()

    def _build_cells(self) -> None:
        lat = self._lattice
        lo = self.field.low - self._shift
        hi = self.field.high - self._shift
        cells, clipped = [], {}
        if isinstance(lat, _Hypercubic):
            for idx in lat.candidates(lo, hi):
                v = lat.vertices(idx)
                clo = np.maximum(v.min(axis=0), lo)
                chi = np.minimum(v.max(axis=0), hi)
                cells.append(idx)
                clipped[idx] = (clo + chi) / 2
        else:
            fbox = shapely_box(lo[0], lo[1], hi[0], hi[1])
            for idx in lat.candidates(lo, hi):
                inter = Polygon(lat.vertices(idx)).intersection(fbox)
                if inter.area > 1e-12 * fbox.area:
                    cells.append(idx)
                    clipped[idx] = np.array(inter.centroid.coords[0])
        cells.sort()
        self.cells: list[tuple] = cells
        self.cell_id = {c: i for i, c in enumerate(cells)}
        self._clipped_centroid = np.array([clipped[c] for c in cells]) + self._shift
        adjacency = []
        edges = []
        for i, c in enumerate(cells):
            nbs = sorted(self.cell_id[n] for n in lat.neighbors(c) if n in self.cell_id)
            adjacency.append(tuple(nbs))
            edges.extend((i, j) for j in nbs if j > i)
        self.adjacency: list[tuple[int, ...]] = adjacency
        self.edges = np.array(edges, dtype=np.int64).reshape(-1, 2)

    @property
    def _shift(self) -> np.ndarray:
        return self.field.low + self.offset

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    # -- geometry ----------------------------------------------------------

    def centroid(self, cell: int, clipped: bool = True) -> np.ndarray:
        if clipped:
            return self._clipped_centroid[cell].copy()
        return self._lattice.centroid(self.cells[cell]) + self._shift

    def vertices(self, cell: int) -> np.ndarray:
        return self._lattice.vertices(self.cells[cell]) + self._shift

    def locate(self, points) -> np.ndarray:
        """Cell id of each point; boundary ties go to the lower-index cell."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.field.dimension:
            raise ValueError("point dimension does not match the field")
        inside = self.field.contains(pts)
        if not inside.all():
            bad = pts[~inside][0]
            raise OutsideField(f"point {bad.tolist()} lies outside the field")
        local = pts - self._shift
        first = self._lattice.locate(local, lower=True)
        second = self._lattice.locate(local, lower=False)
        ids = np.empty(len(pts), dtype=np.int64)
        for n, (a, b) in enumerate(zip(map(tuple, first), map(tuple, second))):
            cid = self.cell_id.get(a)
            if cid is None:
                cid = self.cell_id.get(b)
            if cid is None:
                # on the field boundary, next to a cell lying outside it
                d = np.linalg.norm(self._clipped_centroid - pts[n], axis=1)
                cid = int(np.argmin(d))
            ids[n] = cid
        return ids

    def locate_one(self, point) -> tuple:
        return self.cells[int(self.locate([point])[0])]

    def subcell_of(self, points, cells=None) -> np.ndarray:
        """Within-cell subcell coordinates (square/cube schemes with subcells)."""
        m = self.scheme.quotient
        if m is None:
            raise ValueError("scheme has no subcells")
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        cells = self.locate(pts) if cells is None else np.asarray(cells)
        low = np.array(self.cells, dtype=float)[cells] * self.scheme.size + self._shift
        u = (pts - low) / self.scheme.subcell
        return np.clip(np.ceil(u - 1e-9) - 1, 0, m - 1).astype(np.int64)

    def subcell_center(self, cell: int, sub) -> np.ndarray:
        low = np.asarray(self.cells[cell], dtype=float) * self.scheme.size + self._shift
        return low + (np.asarray(sub, dtype=float) + 0.5) * self.scheme.subcell


def build_partition(field: Field, scheme: PartitionScheme, R: float | None = None, strict: bool = False) -> Partition:
    if strict:
        if R is None:
            raise ValueError("strict mode needs the communication range")
        scheme.check_range(R)
    return Partition(field, scheme)


# ---------------------------------------------------------------------------
# rotation and sliding


def rotation_position(scheme: PartitionScheme, phase: int) -> tuple[int, ...]:
    """Row-major cyclic active-subcell position, shared by every cell."""
    if scheme.protocol is Protocol.GAF or scheme.quotient is None:
        raise ValueError("rotation needs an HGAF-family scheme with subcells")
    m, dim = scheme.quotient, scheme.dimension
    k = int(phase) % m**dim
    out = []
    for axis in range(dim):
        out.append((k // m ** (dim - 1 - axis)) % m)
    return tuple(out)


def sliding_offset_for(scheme: PartitionScheme, chosen) -> np.ndarray:
    """Boundary shift that moves subcell ``chosen`` to the cell center."""
    if scheme.protocol is not Protocol.EHGAF or scheme.quotient is None:
        raise ValueError("boundary sliding needs an eHGAF scheme with subcells")
    m = scheme.quotient
    if m % 2 == 0:
        raise ValueError(f"sliding needs an odd subcell quotient, got {m}")
    chosen = np.asarray(chosen, dtype=float)
    if chosen.shape != (scheme.dimension,) or np.any(chosen < 0) or np.any(chosen >= m):
        raise ValueError(f"subcell {chosen.tolist()} out of range for quotient {m}")
    return (chosen - (m - 1) / 2) * scheme.subcell


def center_subcell(scheme: PartitionScheme) -> tuple[int, ...]:
    m = scheme.quotient
    return ((m - 1) // 2,) * scheme.dimension


# ---------------------------------------------------------------------------
# audits


@dataclass(frozen=True)
class Req1Audit:
    worst: float
    passed: bool
    pair: tuple[int, int] | None
    pairs_checked: int


@dataclass(frozen=True)
class Req2Audit:
    worst: float
    passed: bool
    distance_ok: bool
    per_cell: dict[int, float]
    uncovered: tuple[int, ...]


def _active_array(partition: Partition, actives: Mapping[int, object]):
    pos = np.full((partition.n_cells, partition.field.dimension), np.nan)
    for cell, p in actives.items():
        pos[int(cell)] = np.asarray(p, dtype=float)
    return pos


def audit_req1(partition: Partition, actives: Mapping[int, object], R: float, rtol: float = 1e-9) -> Req1Audit:
    """Largest active-to-active distance over adjacent cell pairs."""
    if partition.edges.size == 0 or not actives:
        return Req1Audit(0.0, True, None, 0)
    pos = _active_array(partition, actives)
    e = partition.edges
    ok = ~np.isnan(pos[e[:, 0], 0]) & ~np.isnan(pos[e[:, 1], 0])
    if not ok.any():
        return Req1Audit(0.0, True, None, 0)
    e = e[ok]
    d = np.linalg.norm(pos[e[:, 0]] - pos[e[:, 1]], axis=1)
    k = int(np.argmax(d))
    worst = float(d[k])
    return Req1Audit(worst, worst <= R * (1 + rtol), (int(e[k, 0]), int(e[k, 1])), int(len(e)))


def audit_req2(
    partition: Partition,
    actives: Mapping[int, object],
    nodes,
    R: float,
    node_cells=None,
    rtol: float = 1e-9,
) -> Req2Audit:
    """Largest active-to-member distance per cell; cells with members but no active fail."""
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    if nodes.size == 0:
        return Req2Audit(0.0, True, True, {}, ())
    cells = partition.locate(nodes) if node_cells is None else np.asarray(node_cells)
    pos = _active_array(partition, actives)
    covered = ~np.isnan(pos[cells, 0])
    per = np.full(partition.n_cells, -1.0)
    if covered.any():
        d = np.linalg.norm(nodes[covered] - pos[cells[covered]], axis=1)
        np.maximum.at(per, cells[covered], d)
    uncovered = tuple(sorted(set(cells[~covered].tolist())))
    per_cell = {int(c): float(per[c]) for c in np.unique(cells[covered])}
    worst = max(per_cell.values(), default=0.0)
    distance_ok = worst <= R * (1 + rtol)
    return Req2Audit(worst, distance_ok and not uncovered, distance_ok, per_cell, uncovered)


def synchronous_worst_active_distance(scheme: PartitionScheme, grid: int = 1) -> float:
    """Grid search of the worst Req.I distance for synchronized active subcells.

    Every rotation position is tried (only the centered one for eHGAF); the
    active nodes range over a ``(grid+1)^dim`` lattice of points in their
    subcell, which includes the subcell corners.
    """
    m, d, r, dim = scheme.quotient, scheme.subcell, scheme.size, scheme.dimension
    if m is None:
        raise ValueError("scheme has no subcells")
    if scheme.protocol is Protocol.EHGAF:
        positions = [center_subcell(scheme)]
    else:
        positions = list(itertools.product(range(m), repeat=dim))
    ticks = np.linspace(0.0, 1.0, grid + 1)
    local = np.array(list(itertools.product(ticks, repeat=dim))) * d
    best = 0.0
    for pos in positions:
        a = np.asarray(pos, dtype=float) * d + local
        for axis in range(dim):
            shift = np.zeros(dim)
            shift[axis] = r
            b = a + shift
            dist = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1).max()
            best = max(best, float(dist))
    return best


# ---------------------------------------------------------------------------
# plain-text export


def write_partition(partition: Partition, stream) -> None:
    """One line per cell: ``index=i,j centroid=x,y vertices=x,y;x,y;...``."""
    s = partition.scheme
    print(
        f"# gafcells-partition v1 dimension={partition.field.dimension} shape={s.kind.value}"
        f" size={s.size!r} offset={','.join(repr(float(o)) for o in partition.offset)}"
        f" cells={partition.n_cells}",
        file=stream,
    )
    for cid, idx in enumerate(partition.cells):
        cen = partition.centroid(cid, clipped=False)
        verts = partition.vertices(cid)
        print(
            "index=" + ",".join(str(i) for i in idx)
            + " centroid=" + ",".join(repr(float(x)) for x in cen)
            + " vertices=" + ";".join(",".join(repr(float(x)) for x in v) for v in verts),
            file=stream,
        )


def partition_text(partition: Partition) -> str:
    buf = io.StringIO()
    write_partition(partition, buf)
    return buf.getvalue()


def read_partition_records(text: str) -> list[dict]:
    records = []
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        fields = dict(part.split("=", 1) for part in line.split())
        records.append(
            {
                "index": tuple(int(i) for i in fields["index"].split(",")),
                "centroid": tuple(float(x) for x in fields["centroid"].split(",")),
                "vertices": [tuple(float(x) for x in v.split(",")) for v in fields["vertices"].split(";")],
            }
        )
    return records
