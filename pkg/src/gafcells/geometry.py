"""Metric geometry of the cell shapes, sphere lenses and sampling oracles.

Lengths are unitless; callers usually express them as multiples of the
communication range R.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np
from scipy.spatial import ConvexHull, QhullError

SQRT2 = math.sqrt(2.0)
SQRT3 = math.sqrt(3.0)
SQRT5 = math.sqrt(5.0)
SQRT6 = math.sqrt(6.0)
PHI = (1.0 + SQRT5) / 2.0

MIN_ORACLE_SAMPLES = 10_000
MIN_UNION_SAMPLES = 1_000_000


class GeometryError(ValueError):
    """Raised for degenerate or otherwise invalid geometry."""


class ShapeKind(str, Enum):
    SQUARE = "square"
    TRIANGLE = "triangle"
    HEXAGON = "hexagon"
    CUBE = "cube"
    TETRAHEDRON = "tetrahedron"
    OCTAHEDRON = "octahedron"
    DODECAHEDRON = "dodecahedron"
    ICOSAHEDRON = "icosahedron"

    @property
    def dimension(self) -> int:
        return 2 if self in _PLANAR else 3

    @property
    def is_polyhedron(self) -> bool:
        return self.dimension == 3


_PLANAR = frozenset({ShapeKind.SQUARE, ShapeKind.TRIANGLE, ShapeKind.HEXAGON})


@dataclass(frozen=True)
class CellShape:
    """A regular cell.

    ``size`` is the side for squares and hexagons, the *height* for
    equilateral triangles and the edge length for every polyhedron.
    """

    kind: ShapeKind
    size: float

    def __post_init__(self):
        object.__setattr__(self, "kind", ShapeKind(self.kind))
        if not (math.isfinite(self.size) and self.size > 0):
            raise GeometryError(f"cell size must be positive and finite, got {self.size!r}")

    @property
    def dimension(self) -> int:
        return self.kind.dimension

    def scaled(self, factor: float) -> "CellShape":
        return CellShape(self.kind, self.size * factor)


@dataclass(frozen=True)
class ShapeMetrics:
    measure: float
    inradius: float
    circumradius: float
    diameter: float
    adjacent_barycenter_distance: float
    adjacent_diameter: float


# Per-kind metrics at size 1: (measure, inradius, circumradius, diameter,
# adjacent_diameter). Adjacent copies are mirror images through one facet.
_UNIT_METRICS = {
    ShapeKind.SQUARE: (1.0, 0.5, SQRT2 / 2, SQRT2, SQRT5),
    ShapeKind.TRIANGLE: (1 / SQRT3, 1 / 3, 2 / 3, 2 / SQRT3, 2.0),
    ShapeKind.HEXAGON: (3 * SQRT3 / 2, SQRT3 / 2, 1.0, 2.0, math.sqrt(13.0)),
    ShapeKind.CUBE: (1.0, 0.5, SQRT3 / 2, SQRT3, SQRT6),
    ShapeKind.TETRAHEDRON: (SQRT2 / 12, SQRT6 / 12, SQRT6 / 4, 1.0, 2 * SQRT6 / 3),
    ShapeKind.OCTAHEDRON: (SQRT2 / 3, SQRT6 / 6, SQRT2 / 2, SQRT2, math.sqrt(11 / 3)),
    ShapeKind.DODECAHEDRON: (
        (15 + 7 * SQRT5) / 4,
        0.5 * math.sqrt((25 + 11 * SQRT5) / 10),
        SQRT3 * (1 + SQRT5) / 4,
        SQRT3 * (1 + SQRT5) / 2,
        math.sqrt((115 + 49 * SQRT5) / 10),
    ),
    ShapeKind.ICOSAHEDRON: (
        5 * (3 + SQRT5) / 12,
        SQRT3 * (3 + SQRT5) / 12,
        0.25 * math.sqrt(10 + 2 * SQRT5),
        0.5 * math.sqrt(10 + 2 * SQRT5),
        math.sqrt((17 + 6 * SQRT5) / 3),
    ),
}


def shape_metrics(shape: CellShape) -> ShapeMetrics:
    measure, inr, circ, diam, adj_diam = _UNIT_METRICS[shape.kind]
    s = shape.size
    return ShapeMetrics(
        measure=measure * s**shape.dimension,
        inradius=inr * s,
        circumradius=circ * s,
        diameter=diam * s,
        adjacent_barycenter_distance=2 * inr * s,
        adjacent_diameter=adj_diam * s,
    )


def unit_metrics(kind: ShapeKind | str) -> ShapeMetrics:
    return shape_metrics(CellShape(ShapeKind(kind), 1.0))


def ball_measure(radius: float, dimension: int = 3) -> float:
    if dimension == 2:
        return math.pi * radius**2
    if dimension == 3:
        return 4.0 / 3.0 * math.pi * radius**3
    raise ValueError(f"dimension must be 2 or 3, got {dimension}")


def lens_measure(radius: float, distance: float, dimension: int = 3) -> float:
    """Overlap of two radius-``radius`` balls whose centers are ``distance`` apart."""
    if radius <= 0:
        raise GeometryError("radius must be positive")
    if not 0.0 <= distance <= 2.0 * radius:
        raise GeometryError(f"center distance must lie in [0, 2R], got {distance}")
    R, t = radius, distance
    if dimension == 3:
        return math.pi / 12.0 * (4 * R + t) * (2 * R - t) ** 2
    if dimension == 2:
        return 2 * R * R * math.acos(t / (2 * R)) - 0.5 * t * math.sqrt(max(4 * R * R - t * t, 0.0))
    raise ValueError(f"dimension must be 2 or 3, got {dimension}")


# ---------------------------------------------------------------------------
# placed shapes and sampling oracles


def _sign_perms(v):
    out = set()
    for signs in itertools.product((1.0, -1.0), repeat=3):
        p = [v[i] * signs[i] for i in range(3)]
        for k in range(3):
            out.add(tuple(p[k:] + p[:k]))
    return sorted(out)


def _raw_vertices(kind: ShapeKind) -> np.ndarray:
    cube = list(itertools.product((1.0, -1.0), repeat=3))
    if kind is ShapeKind.SQUARE:
        pts = [(0, 0), (1, 0), (1, 1), (0, 1)]
    elif kind is ShapeKind.TRIANGLE:
        pts = [(0, 0), (1, 0), (0.5, SQRT3 / 2)]
    elif kind is ShapeKind.HEXAGON:
        pts = [(math.cos(k * math.pi / 3), math.sin(k * math.pi / 3)) for k in range(6)]
    elif kind is ShapeKind.CUBE:
        pts = cube
    elif kind is ShapeKind.TETRAHEDRON:
        pts = [(1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1)]
    elif kind is ShapeKind.OCTAHEDRON:
        pts = _sign_perms([1.0, 0.0, 0.0])
    elif kind is ShapeKind.DODECAHEDRON:
        pts = cube + _sign_perms([0.0, 1 / PHI, PHI])
    else:
        pts = _sign_perms([0.0, 1.0, PHI])
    return np.unique(np.round(np.asarray(pts, dtype=float), 14), axis=0)


class PlacedShape:
    """A convex cell with concrete coordinates."""

    def __init__(self, vertices, shape: CellShape | None = None):
        vertices = np.atleast_2d(np.asarray(vertices, dtype=float))
        if vertices.shape[1] not in (2, 3):
            raise GeometryError("vertices must be 2D or 3D points")
        try:
            hull = ConvexHull(vertices)
        except QhullError as exc:
            raise GeometryError("degenerate placement: vertices span no volume") from exc
        if hull.volume <= 1e-300:
            raise GeometryError("degenerate placement: zero measure")
        self.vertices = vertices[hull.vertices]
        self.shape = shape
        self._hull = hull
        self._planes = None

    @classmethod
    def place(cls, shape: CellShape, center=None) -> "PlacedShape":
        raw = _raw_vertices(shape.kind)
        if shape.kind is ShapeKind.TRIANGLE:
            ref = raw[:, 1].max() - raw[:, 1].min()
        else:
            d = np.linalg.norm(raw[:, None, :] - raw[None, :, :], axis=-1)
            ref = d[d > 1e-12].min()
        verts = raw * (shape.size / ref)
        verts -= verts.mean(axis=0)
        if center is not None:
            verts += np.asarray(center, dtype=float)
        return cls(verts, shape)

    @property
    def dimension(self) -> int:
        return self.vertices.shape[1]

    @property
    def center(self) -> np.ndarray:
        """Vertex centroid; the barycenter for every regular cell."""
        return self.vertices.mean(axis=0)

    @property
    def measure(self) -> float:
        return float(self._hull.volume)

    @property
    def facet_planes(self) -> np.ndarray:
        """Unique outward facet planes as rows ``(normal..., offset)``."""
        eq = np.round(self._hull.equations, 12)
        _, idx = np.unique(eq, axis=0, return_index=True)
        return self._hull.equations[np.sort(idx)]

    def contains(self, points, tol: float = 1e-12) -> np.ndarray:
        pts = np.atleast_2d(points)
        if self._planes is None:
            self._planes = self.facet_planes
        eq = self._planes
        inside = np.ones(len(pts), dtype=bool)
        for row in eq:
            inside &= pts @ row[:-1] <= tol - row[-1]
        return inside

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """``n`` uniform interior points by bounding-box rejection."""
        lo, hi = self.vertices.min(axis=0), self.vertices.max(axis=0)
        out, have = [], 0
        while have < n:
            batch = max(1024, int(1.3 * (n - have) * np.prod(hi - lo) / self.measure))
            cand = lo + rng.random((batch, self.dimension)) * (hi - lo)
            cand = cand[self.contains(cand)]
            out.append(cand)
            have += len(cand)
        return np.concatenate(out)[:n]

    def translated(self, offset) -> "PlacedShape":
        return PlacedShape(self.vertices + np.asarray(offset, dtype=float), self.shape)

    def reflected(self, plane) -> "PlacedShape":
        return PlacedShape(reflect_points(self.vertices, plane), self.shape)

    def neighbor(self, facet: int = 0, mirror: bool = True) -> "PlacedShape":
        """Copy sharing facet ``facet``: mirrored through it, or translated across it."""
        plane = self.facet_planes[facet]
        if mirror:
            return self.reflected(plane)
        normal, offset = plane[:-1], plane[-1]
        width = np.max(-(self.vertices @ normal + offset))
        return self.translated(width * normal)


def reflect_points(points, plane) -> np.ndarray:
    """Reflect points through the hyperplane ``normal . x + offset = 0`` (unit normal)."""
    pts = np.asarray(points, dtype=float)
    normal, offset = np.asarray(plane[:-1]), plane[-1]
    return pts - 2.0 * (pts @ normal + offset)[..., None] * normal


def _hull_points(points: np.ndarray) -> np.ndarray:
    if len(points) <= points.shape[1] + 1:
        return points
    try:
        return points[ConvexHull(points).vertices]
    except QhullError:
        return points


def farthest_distance(a, b) -> float:
    """Largest distance between a point of ``a`` and a point of ``b`` (point clouds)."""
    a = _hull_points(np.atleast_2d(a))
    b = _hull_points(np.atleast_2d(b))
    best = 0.0
    for chunk in np.array_split(a, max(1, len(a) // 2048)):
        d2 = ((chunk[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1)
        best = max(best, float(d2.max()))
    return math.sqrt(best)


def _oracle_cloud(shape: PlacedShape, samples: int, rng) -> np.ndarray:
    return np.concatenate([shape.vertices, shape.sample(samples, rng)])


def max_distance_oracle(a: PlacedShape, b, samples: int = 10**6, seed: int = 0) -> float:
    """Sampled maximum distance between shape ``a`` and a shape or fixed point ``b``.

    Vertices are always part of the sample, so maxima attained at vertices
    are found exactly.
    """
    if samples < MIN_ORACLE_SAMPLES:
        raise ValueError(f"samples must be >= {MIN_ORACLE_SAMPLES}, got {samples}")
    rng = np.random.default_rng(seed)
    pa = _oracle_cloud(a, samples, rng)
    if isinstance(b, PlacedShape):
        pb = _oracle_cloud(b, samples, rng)
    else:
        pb = np.atleast_2d(np.asarray(b, dtype=float))
        if pb.shape != (1, a.dimension):
            raise GeometryError("point dimension does not match the shape")
        return float(np.sqrt(((pa - pb) ** 2).sum(axis=1)).max())
    return farthest_distance(pa, pb)


class MonteCarloEstimate(NamedTuple):
    value: float
    stderr: float
    samples: int


def sphere_chain_union_volume(
    n: int, radius: float = 1.0, samples: int = 10**6, seed: int = 0
) -> MonteCarloEstimate:
    """Volume of the union of ``n`` radius-R balls with centers R apart on a line."""
    if n < 1:
        raise ValueError("need at least one sphere")
    if samples < MIN_UNION_SAMPLES:
        raise ValueError(f"samples must be >= {MIN_UNION_SAMPLES}, got {samples}")
    R = float(radius)
    lo = np.array([-R, -R, -R])
    hi = np.array([(n - 1) * R + R, R, R])
    box = float(np.prod(hi - lo))
    rng = np.random.default_rng(seed)
    hits, left = 0, samples
    while left:
        m = min(left, 1 << 20)
        p = lo + rng.random((m, 3)) * (hi - lo)
        # nearest center along the axis is the nearest center overall
        k = np.clip(np.rint(p[:, 0] / R), 0, n - 1)
        d2 = (p[:, 0] - k * R) ** 2 + p[:, 1] ** 2 + p[:, 2] ** 2
        hits += int(np.count_nonzero(d2 <= R * R))
        left -= m
    frac = hits / samples
    return MonteCarloEstimate(box * frac, box * math.sqrt(frac * (1 - frac) / samples), samples)
