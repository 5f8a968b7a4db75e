"""Closed forms checked against sampled geometry."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bounds import INFINITESIMAL, Protocol, SubcellRegime, lemma1_field_size, max_cell, max_size_for_quotient
from .geometry import (
    MIN_ORACLE_SAMPLES,
    MIN_UNION_SAMPLES,
    CellShape,
    PlacedShape,
    ShapeKind,
    farthest_distance,
    max_distance_oracle,
    reflect_points,
    shape_metrics,
    sphere_chain_union_volume,
)
from .partition import PartitionScheme, synchronous_worst_active_distance

DEFAULT_RTOL = 0.01


@dataclass(frozen=True)
class Check:
    name: str
    expected: float
    observed: float
    rtol: float = DEFAULT_RTOL
    # "close": within rtol; "exceeds": observed strictly above expected
    relation: str = "close"

    @property
    def rel_error(self) -> float:
        return abs(self.observed - self.expected) / abs(self.expected)

    @property
    def passed(self) -> bool:
        if self.relation == "exceeds":
            return self.observed > self.expected
        return self.rel_error <= self.rtol


@dataclass(frozen=True)
class VerificationReport:
    target: str
    samples: int
    seed: int
    checks: list[Check]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _check_samples(samples: int, floor: int = MIN_ORACLE_SAMPLES) -> int:
    samples = int(samples)
    if samples < floor:
        raise ValueError(f"samples={samples} is below the minimum of {floor}")
    return samples


def metric_checks(kind: ShapeKind, samples: int = 10**6, seed: int = 0, size: float = 1.0) -> list[Check]:
    """Sampled circumradius, diameter and adjacent distances of one shape.

    One uniform cloud (vertices included) is drawn; the face-adjacent copy's
    cloud is its mirror image through the shared facet.
    """
    kind = ShapeKind(kind)
    shape = CellShape(kind, size)
    m = shape_metrics(shape)
    cell = PlacedShape.place(shape)
    rng = np.random.default_rng(seed)
    interior = cell.sample(samples, rng)
    cloud = np.concatenate([cell.vertices, interior])
    plane = cell.facet_planes[0]
    mirrored = reflect_points(cloud, plane)
    circ = float(np.sqrt(((cloud - cell.center) ** 2).sum(axis=1)).max())
    bary = float(np.linalg.norm(interior.mean(axis=0) - reflect_points(interior, plane).mean(axis=0)))
    name = kind.value
    return [
        Check(f"{name}.circumradius", m.circumradius, circ),
        Check(f"{name}.diameter", m.diameter, farthest_distance(cloud, cloud)),
        Check(f"{name}.adjacent_diameter", m.adjacent_diameter, farthest_distance(cloud, mirrored)),
        Check(f"{name}.adjacent_barycenter_distance", m.adjacent_barycenter_distance, bary),
    ]


def verify_metrics(kinds=None, samples: int = 10**6, seed: int = 0) -> VerificationReport:
    samples = _check_samples(samples)
    kinds = list(ShapeKind) if kinds is None else [ShapeKind(k) for k in kinds]
    checks = [c for k in kinds for c in metric_checks(k, samples, seed)]
    return VerificationReport("metrics", samples, seed, checks)


def _subcell(d: float, corner, dim: int) -> PlacedShape:
    center = np.asarray(corner, dtype=float) + d / 2
    return PlacedShape.place(CellShape(ShapeKind.SQUARE if dim == 2 else ShapeKind.CUBE, d), center)


def worst_case_distances(
    protocol: Protocol, kind: ShapeKind, size: float, d: float | None, samples: int, seed: int
) -> tuple[float, float]:
    """Oracle Req.I and Req.II worst distances for active regions at cell size ``size``.

    Active regions: the whole cell for GAF; a corner subcell (HGAF) or the
    centered subcell (eHGAF) for finite ``d``; the barycenter otherwise.
    """
    protocol, kind = Protocol(protocol), ShapeKind(kind)
    shape = CellShape(kind, size)
    cell = PlacedShape.place(shape)
    nb = cell.neighbor()
    if protocol is Protocol.GAF:
        return max_distance_oracle(cell, nb, samples, seed), max_distance_oracle(cell, cell, samples, seed)
    if d is None:
        if protocol is Protocol.HGAF:
            # rotation reaches the corner; all cells share the position
            corner = cell.center - size / 2
            return size, max_distance_oracle(cell, corner, samples, seed)
        # active subcell shrinks to the barycenter
        return float(np.linalg.norm(nb.center - cell.center)), max_distance_oracle(cell, cell.center, samples, seed)
    if kind is ShapeKind.TRIANGLE and protocol is Protocol.EHGAF:
        # centered subcell of height d, same orientation; the neighbor's is its mirror image
        here = PlacedShape.place(CellShape(kind, d), cell.center)
        there = PlacedShape(reflect_points(here.vertices, cell.facet_planes[0]))
        return max_distance_oracle(here, there, samples, seed), max_distance_oracle(cell, here, samples, seed)
    if kind not in (ShapeKind.SQUARE, ShapeKind.CUBE):
        raise ValueError(f"finite subcells are not modelled for {protocol.value}/{kind.value}")
    dim = kind.dimension
    low = cell.center - size / 2
    if protocol is Protocol.HGAF:
        corner = low
    else:
        corner = cell.center - d / 2
    here = _subcell(d, corner, dim)
    shift = np.zeros(dim)
    shift[0] = size
    there = here.translated(shift)
    return max_distance_oracle(here, there, samples, seed), max_distance_oracle(cell, here, samples, seed)


def verify_worst_case(
    protocol: Protocol,
    kind: ShapeKind,
    R: float = 1.0,
    regime: SubcellRegime = INFINITESIMAL,
    samples: int = 10**6,
    seed: int = 0,
    overshoot: float = 1.05,
) -> VerificationReport:
    """At each requirement's maximum the oracle distance equals R; beyond it, exceeds R."""
    samples = _check_samples(samples)
    rep = max_cell(protocol, kind, R, regime)
    d = None if regime.infinitesimal else regime.d
    checks = []
    for label, size, which in (("req1", rep.req1_max_size, 0), ("req2", rep.req2_max_size, 1)):
        at = worst_case_distances(rep.protocol, rep.kind, size, d, samples, seed)[which]
        over = worst_case_distances(rep.protocol, rep.kind, size * overshoot, d, samples, seed)[which]
        checks.append(Check(f"{label}.at_max", R, at, DEFAULT_RTOL))
        checks.append(Check(f"{label}.exceeds_at_{overshoot:g}x", R, over, relation="exceeds"))
    return VerificationReport(f"worst-case:{rep.protocol.value}:{rep.kind.value}", samples, seed, checks)


def verify_hgaf_grid(R: float = 1.0, m: int = 3, grid: int = 4) -> Check:
    """Synchronous-rotation grid search against d² + (r+d)² at the HGAF maximum with quotient m."""
    r = max_size_for_quotient(Protocol.HGAF, ShapeKind.SQUARE, R, m)
    d = r / m
    scheme = PartitionScheme(Protocol.HGAF, ShapeKind.SQUARE, r, d)
    worst = synchronous_worst_active_distance(scheme, grid)
    return Check("hgaf.grid_worst_sq", d**2 + (r + d) ** 2, worst**2, 1e-6)


def verify_lemma1(ns=(1, 2, 3), R: float = 1.0, samples: int = 10**7, seed: int = 0, rtol: float = DEFAULT_RTOL) -> VerificationReport:
    samples = _check_samples(samples, MIN_UNION_SAMPLES)
    checks = []
    for n in ns:
        est = sphere_chain_union_volume(n, R, samples, seed)
        checks.append(Check(f"lemma1.n{n}", lemma1_field_size(n, R), est.value, rtol))
    return VerificationReport("lemma1", samples, seed, checks)
