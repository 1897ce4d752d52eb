"""Temperley-Lieb arc diagrams, the operator A and the intertwiner L.

An oriented arc (a, b) stands for the singlet psi_ab = dn_a up_b - up_a dn_b and
every unpaired site carries an up spin. The generator on an edge {u, v} is
U_uv = psi_uv psi~_uv^dagger with psi~_uv^dagger = <up_u dn_v| - <dn_u up_v|,
which equals -2 h_uv on spin space, so L A = -2H L holds by construction.

Diagrams are stored canonically with a < b in every arc; reversing an arc
flips the sign of its coefficient.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterator

import numpy as np
import scipy.linalg
import sympy

from foel.basis import Geometry, Sector, SectorBasis, enumerate_sector
from foel.config import SolverTolerances
from foel.eigensolve import full_spectrum
from foel.errors import GeometryError, VerificationError
from foel.operators import EdgeSet, build_sparse

logger = logging.getLogger(__name__)

Arc = tuple[int, int]

EIGEN_CLUSTER_TOLERANCE = 1e-6
EXACT_RECHECK_LIMIT = 120


def _spans(arc: Arc, site: int) -> bool:
    low, high = sorted(arc)
    return low < site < high


def _crossing(first: Arc, second: Arc) -> bool:
    a, b = sorted(first)
    c, d = sorted(second)
    return a < c < b < d or c < a < d < b


@dataclass(frozen=True)
class ArcDiagram:
    """Oriented noncrossing arcs on sites 1..N plus the unpaired sites."""

    n_sites: int
    arcs: tuple[Arc, ...]
    unpaired: frozenset[int]
    geometry: Geometry = Geometry.CHAIN

    def __post_init__(self) -> None:
        sites = [site for arc in self.arcs for site in arc] + sorted(self.unpaired)
        if sorted(sites) != list(range(1, self.n_sites + 1)):
            raise GeometryError(f"Diagram does not cover sites 1..{self.n_sites} exactly once: {self}.")
        for first, second in itertools.combinations(self.arcs, 2):
            if _crossing(first, second):
                raise GeometryError(f"Arcs {first} and {second} cross.")
        for arc in self.arcs:
            inside = {site for site in self.unpaired if _spans(arc, site)}
            if self.geometry is Geometry.CHAIN:
                if arc[0] > arc[1]:
                    raise GeometryError(f"Chain arc {arc} must be oriented left to right.")
                if inside:
                    raise GeometryError(f"Arc {arc} spans unpaired sites {sorted(inside)}.")
            elif inside and len(inside) != len(self.unpaired):
                raise GeometryError(f"Arc {arc} has unpaired sites on both sides.")

    @property
    def n_arcs(self) -> int:
        return len(self.arcs)

    def partner(self, site: int) -> int | None:
        for a, b in self.arcs:
            if site == a:
                return b
            if site == b:
                return a
        return None

    def canonical(self) -> tuple[ArcDiagram, int]:
        """Same diagram with every arc ordered a < b, and the sign of the reorientation."""
        sign = 1
        arcs = []
        for a, b in self.arcs:
            if a > b:
                a, b = b, a
                sign = -sign
            arcs.append((a, b))
        diagram = ArcDiagram(self.n_sites, tuple(sorted(arcs)), self.unpaired, self.geometry)
        return diagram, sign

    def rotated(self, shift: int) -> ArcDiagram:
        """Translate every site by ``shift`` around the ring."""

        def move(site: int) -> int:
            return (site - 1 + shift) % self.n_sites + 1

        return ArcDiagram(
            self.n_sites,
            tuple((move(a), move(b)) for a, b in self.arcs),
            frozenset(move(site) for site in self.unpaired),
            Geometry.RING,
        )

    def spin_terms(self) -> Iterator[tuple[int, int]]:
        """(bits, coefficient) pairs of the spin state, bit j-1 set for a down spin at site j."""
        for choice in itertools.product((0, 1), repeat=len(self.arcs)):
            bits, sign = 0, 1
            for (a, b), pick in zip(self.arcs, choice):
                if pick:
                    bits |= 1 << (b - 1)
                    sign = -sign
                else:
                    bits |= 1 << (a - 1)
            yield bits, sign

    def __str__(self) -> str:
        arcs = " ".join(f"{a}-{b}" for a, b in self.arcs)
        ups = ",".join(str(site) for site in sorted(self.unpaired))
        return f"[{arcs} | {ups}]"


@dataclass
class DiagramVector:
    """Formal linear combination of canonical diagrams with exact coefficients."""

    terms: dict[ArcDiagram, Fraction] = field(default_factory=dict)

    def add(self, diagram: ArcDiagram, coefficient: Fraction | int) -> None:
        diagram, sign = diagram.canonical()
        value = self.terms.get(diagram, Fraction(0)) + sign * Fraction(coefficient)
        if value:
            self.terms[diagram] = value
        else:
            self.terms.pop(diagram, None)

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self) -> Iterator[tuple[ArcDiagram, Fraction]]:
        return iter(self.terms.items())

    def coefficient(self, diagram: ArcDiagram) -> Fraction:
        diagram, sign = diagram.canonical()
        return sign * self.terms.get(diagram, Fraction(0))


def _chain_diagrams(n_sites: int, n_arcs: int) -> Iterator[ArcDiagram]:
    def walk(site: int, open_arcs: list[int], arcs: list[Arc], ups: list[int]) -> Iterator[ArcDiagram]:
        if len(arcs) + len(open_arcs) > n_arcs:
            return
        remaining = n_sites - site + 1
        if remaining < len(open_arcs):
            return
        if site > n_sites:
            if not open_arcs and len(arcs) == n_arcs:
                yield ArcDiagram(n_sites, tuple(sorted(arcs)), frozenset(ups), Geometry.CHAIN)
            return
        if not open_arcs:
            yield from walk(site + 1, open_arcs, arcs, ups + [site])
        if open_arcs:
            start = open_arcs[-1]
            yield from walk(site + 1, open_arcs[:-1], arcs + [(start, site)], ups)
        yield from walk(site + 1, open_arcs + [site], arcs, ups)

    yield from walk(1, [], [], [])


def enumerate_diagrams(n_sites: int, n_arcs: int, geometry: Geometry = Geometry.CHAIN) -> list[ArcDiagram]:
    """All valid canonical diagrams with ``n_arcs`` arcs, in sorted order.

    Ring diagrams are the translates of chain diagrams.
    """
    if not 0 <= 2 * n_arcs <= n_sites:
        raise GeometryError(f"{n_arcs} arcs do not fit on {n_sites} sites.")
    Sector(n_sites, n_arcs, geometry)
    chain = list(_chain_diagrams(n_sites, n_arcs))
    if geometry is Geometry.CHAIN:
        diagrams = set(chain)
    else:
        diagrams = {
            diagram.rotated(shift).canonical()[0]
            for diagram in chain
            for shift in range(n_sites)
        }
    ordered = sorted(diagrams, key=lambda d: (d.arcs, sorted(d.unpaired)))
    logger.debug("%d %s diagrams for N=%d with %d arcs", len(ordered), geometry.value, n_sites, n_arcs)
    return ordered


def _check_edge(diagram: ArcDiagram, edge: Arc) -> None:
    u, v = edge
    allowed = EdgeSet.for_geometry(diagram.n_sites, diagram.geometry).edges
    if (u, v) not in allowed and (v, u) not in allowed:
        raise GeometryError(f"{{{u},{v}}} is not an edge of the {diagram.geometry.value}.")


def apply_generator(edge: Arc, diagram: ArcDiagram) -> DiagramVector:
    """U_uv applied to one diagram: loops give -2, arcs are rewired, up-up pairs vanish."""
    _check_edge(diagram, edge)
    u, v = edge
    touching = [arc for arc in diagram.arcs if u in arc or v in arc]
    others = [arc for arc in diagram.arcs if u not in arc and v not in arc]
    partners = [site for arc in touching for site in arc if site not in (u, v)]

    # Expand the local factor on u, v and their partners, then contract u and v.
    contracted: dict[tuple[int, ...], int] = {}
    for choice in itertools.product((0, 1), repeat=len(touching)):
        spins = {site: 0 for site in (u, v) if site in diagram.unpaired}
        sign = 1
        for (a, b), pick in zip(touching, choice):
            spins[a], spins[b] = (0, 1) if pick else (1, 0)
            if pick:
                sign = -sign
        weight = {(0, 1): 1, (1, 0): -1}.get((spins[u], spins[v]), 0)
        if weight:
            key = tuple(spins[site] for site in partners)
            contracted[key] = contracted.get(key, 0) + sign * weight
    contracted = {key: value for key, value in contracted.items() if value}

    result = DiagramVector()
    if not contracted:
        return result
    new_arcs = [(u, v)]
    unpaired = set(diagram.unpaired) - {u, v}
    if not partners:
        coefficient = contracted[()]
    elif len(partners) == 1:
        if set(contracted) != {(0,)}:
            raise VerificationError(f"Contraction of {diagram} on {edge} left a down spin unpaired.")
        coefficient = contracted[(0,)]
        unpaired.add(partners[0])
    else:
        x, y = partners
        coefficient = contracted.get((1, 0), 0)
        if contracted != {(1, 0): coefficient, (0, 1): -coefficient}:
            raise VerificationError(f"Contraction of {diagram} on {edge} is not a singlet on {x},{y}.")
        new_arcs.append((x, y))

    # Orient the new arcs before building, chain diagrams only accept a < b.
    for a, b in list(new_arcs):
        if a > b:
            new_arcs[new_arcs.index((a, b))] = (b, a)
            coefficient = -coefficient
    result.add(
        ArcDiagram(
            diagram.n_sites,
            tuple(sorted(others + new_arcs)),
            frozenset(unpaired),
            diagram.geometry,
        ),
        coefficient,
    )
    return result


def _diagram_index(diagrams: list[ArcDiagram]) -> dict[ArcDiagram, int]:
    return {diagram: position for position, diagram in enumerate(diagrams)}


def generator_matrix(edge: Arc, diagrams: list[ArcDiagram]) -> np.ndarray:
    """Integer matrix of U_uv on the span of ``diagrams`` (column j is U d_j)."""
    index = _diagram_index(diagrams)
    matrix = np.zeros((len(diagrams), len(diagrams)), dtype=np.int64)
    for column, diagram in enumerate(diagrams):
        for image, coefficient in apply_generator(edge, diagram):
            if image not in index:
                raise VerificationError(f"U{edge} maps {diagram} outside the diagram space: {image}.")
            if coefficient.denominator != 1:
                raise VerificationError(f"Non-integral coefficient {coefficient} in U{edge}.")
            matrix[index[image], column] += int(coefficient)
    return matrix


def build_a_operator(
    n_sites: int,
    n_arcs: int,
    geometry: Geometry = Geometry.RING,
    *,
    diagrams: list[ArcDiagram] | None = None,
) -> np.ndarray:
    """A = sum of U over the edges of the geometry, on the diagram basis."""
    diagrams = diagrams if diagrams is not None else enumerate_diagrams(n_sites, n_arcs, geometry)
    edges = EdgeSet.for_geometry(n_sites, geometry).edges
    total = np.zeros((len(diagrams), len(diagrams)), dtype=np.int64)
    for edge in edges:
        total += generator_matrix(edge, diagrams)
    return total


@dataclass(frozen=True, eq=False)
class IntertwinerMatrix:
    """L from the diagram space into the k-magnon sector coordinates."""

    diagrams: tuple[ArcDiagram, ...]
    basis: SectorBasis
    matrix: np.ndarray

    @property
    def geometry(self) -> Geometry:
        return self.basis.geometry

    @cached_property
    def exact(self) -> sympy.Matrix:
        return sympy.Matrix(self.matrix.tolist())

    @cached_property
    def rank(self) -> int:
        return int(self.exact.rank())

    @property
    def kernel_dimension(self) -> int:
        return len(self.diagrams) - self.rank

    @property
    def highest_weight_dimension(self) -> int:
        n_sites, k = self.basis.n_sites, self.basis.sector.n_magnons
        return math.comb(n_sites, k) - (math.comb(n_sites, k - 1) if k else 0)

    @property
    def is_isomorphism(self) -> bool:
        return self.kernel_dimension == 0 and self.rank == self.highest_weight_dimension


def build_intertwiner(
    n_sites: int,
    n_arcs: int,
    geometry: Geometry = Geometry.RING,
    *,
    diagrams: list[ArcDiagram] | None = None,
) -> IntertwinerMatrix:
    diagrams = diagrams if diagrams is not None else enumerate_diagrams(n_sites, n_arcs, geometry)
    basis = enumerate_sector(Sector(n_sites, n_arcs, geometry))
    matrix = np.zeros((basis.dimension, len(diagrams)), dtype=np.int64)
    for column, diagram in enumerate(diagrams):
        for bits, coefficient in diagram.spin_terms():
            matrix[basis.position(bits), column] += coefficient
    return IntertwinerMatrix(diagrams=tuple(diagrams), basis=basis, matrix=matrix)


@dataclass(frozen=True)
class AEigenvalue:
    value: complex
    algebraic: int
    geometric: int
    kept: int
    exact: Fraction | None = None

    @property
    def removed(self) -> int:
        return self.algebraic - self.kept

    @property
    def real(self) -> float:
        return float(self.exact) if self.exact is not None else self.value.real


@dataclass(frozen=True)
class DiagramSpectrum:
    n_sites: int
    n_arcs: int
    geometry: Geometry
    eigenvalues: tuple[AEigenvalue, ...]
    kept_2h: tuple[float, ...]
    kernel_dimension: int
    defective: bool

    @property
    def removed_values(self) -> tuple[float, ...]:
        return tuple(item.real + 0.0 for item in self.eigenvalues if item.removed > 0)


def _cluster_complex(values: np.ndarray, tolerance: float) -> list[list[complex]]:
    ordered = sorted(values, key=lambda value: (round(value.real, 6), value.imag))
    clusters: list[list[complex]] = []
    for value in ordered:
        for cluster in clusters:
            if abs(cluster[0] - value) < tolerance:
                cluster.append(value)
                break
        else:
            clusters.append([value])
    return clusters


def _numerical_rank(matrix: np.ndarray, tolerance: float = 1e-8) -> int:
    if matrix.size == 0:
        return 0
    singular = np.linalg.svd(matrix, compute_uv=False)
    return int(np.sum(singular > tolerance * max(1.0, singular[0])))


def _recognize_rational(value: complex, max_denominator: int = 12) -> Fraction | None:
    if abs(value.imag) > 1e-9:
        return None
    guess = Fraction(value.real).limit_denominator(max_denominator)
    return guess if abs(float(guess) - value.real) < 1e-9 else None


def _exact_kept(a_exact: sympy.Matrix, l_exact: sympy.Matrix, value: Fraction) -> tuple[int, int]:
    shifted = a_exact - sympy.Rational(value.numerator, value.denominator) * sympy.eye(a_exact.shape[0])
    null = shifted.nullspace()
    if not null:
        return 0, 0
    return len(null), int((l_exact * sympy.Matrix.hstack(*null)).rank())


def _image_spectrum(intertwiner: IntertwinerMatrix) -> tuple[float, ...]:
    """Eigenvalues of 2H on the column space of L."""
    two_h = build_sparse(intertwiner.basis, "two_h", threshold=intertwiner.basis.dimension).toarray()
    columns = scipy.linalg.orth(intertwiner.matrix.astype(float))
    return tuple(float(value) for value in np.linalg.eigvalsh(columns.T @ two_h @ columns))


def diagram_spectrum(
    n_sites: int,
    n_arcs: int,
    geometry: Geometry = Geometry.RING,
    *,
    a_operator: np.ndarray | None = None,
    intertwiner: IntertwinerMatrix | None = None,
) -> DiagramSpectrum:
    """Spectrum of A split into the part seen through L (kept) and the part in its kernel."""
    diagrams = enumerate_diagrams(n_sites, n_arcs, geometry)
    a_matrix = a_operator if a_operator is not None else build_a_operator(n_sites, n_arcs, geometry, diagrams=diagrams)
    intertwiner = intertwiner or build_intertwiner(n_sites, n_arcs, geometry, diagrams=diagrams)
    l_float = intertwiner.matrix.astype(float)
    exact_ok = len(diagrams) <= EXACT_RECHECK_LIMIT
    a_exact = sympy.Matrix(a_matrix.tolist()) if exact_ok else None

    eigenvalues: list[AEigenvalue] = []
    kept: list[float] = []
    defective = False
    raw = scipy.linalg.eigvals(a_matrix.astype(float))
    for cluster in _cluster_complex(raw, EIGEN_CLUSTER_TOLERANCE):
        value = complex(np.mean(cluster))
        null = scipy.linalg.null_space(a_matrix - value * np.eye(len(diagrams)), rcond=1e-7)
        geometric = null.shape[1]
        count = _numerical_rank(l_float @ null)
        rational = _recognize_rational(value)
        if rational is not None and a_exact is not None:
            exact_geometric, exact_count = _exact_kept(a_exact, intertwiner.exact, rational)
            if (exact_geometric, exact_count) != (geometric, count):
                logger.warning(
                    "Exact recheck at lambda=%s changed (geometric, kept) from %s to %s",
                    rational,
                    (geometric, count),
                    (exact_geometric, exact_count),
                )
            geometric, count = exact_geometric, exact_count
        if geometric < len(cluster):
            defective = True
        eigenvalues.append(
            AEigenvalue(value=value, algebraic=len(cluster), geometric=geometric, kept=count, exact=rational)
        )
        energy = -(float(rational) if rational is not None else value.real)
        kept.extend([energy] * count)

    if defective:
        logger.warning(
            "A is defective on the N=%d %s sector with %d arcs; kept spectrum taken from the image of L",
            n_sites,
            geometry.value,
            n_arcs,
        )
        kept = list(_image_spectrum(intertwiner))

    return DiagramSpectrum(
        n_sites=n_sites,
        n_arcs=n_arcs,
        geometry=geometry,
        eigenvalues=tuple(eigenvalues),
        kept_2h=tuple(sorted(kept)),
        kernel_dimension=intertwiner.kernel_dimension,
        defective=defective,
    )


def ring_spectrum_via_diagrams(n_sites: int, n_arcs: int) -> tuple[float, ...]:
    """2H spectrum of the spin N/2 - k highest-weight space of a ring, from A and ker L."""
    return diagram_spectrum(n_sites, n_arcs, Geometry.RING).kept_2h


@dataclass(frozen=True)
class DiagramVerification:
    n_sites: int
    n_arcs: int
    geometry: Geometry
    dimension: int
    dimension_identity: bool
    relation_failures: tuple[str, ...]
    intertwining: bool
    rank: int
    kernel_dimension: int
    removed_values: tuple[float, ...]
    kept_2h: tuple[float, ...]
    route_equivalence: bool
    defective: bool

    @property
    def tl_relations(self) -> bool:
        return not self.relation_failures

    @property
    def passed(self) -> bool:
        return self.dimension_identity and self.tl_relations and self.intertwining and self.route_equivalence


def tl_relation_failures(n_sites: int, geometry: Geometry, diagrams: list[ArcDiagram]) -> list[str]:
    """Names of the relations U^2 = -2U, UU'U = U and distant commutation that fail."""
    edges = EdgeSet.for_geometry(n_sites, geometry).edges
    generators = {edge: generator_matrix(edge, diagrams) for edge in edges}
    failures: list[str] = []
    for edge, matrix in generators.items():
        if not np.array_equal(matrix @ matrix, -2 * matrix):
            failures.append(f"U{edge}^2 != -2 U{edge}")
    for first, second in itertools.permutations(edges, 2):
        left, right = generators[first], generators[second]
        if set(first) & set(second):
            if not np.array_equal(left @ right @ left, left):
                failures.append(f"U{first} U{second} U{first} != U{first}")
        elif first < second and not np.array_equal(left @ right, right @ left):
            failures.append(f"U{first} and U{second} do not commute")
    return failures


def _spin_multiset(n_sites: int, n_arcs: int, geometry: Geometry, tolerances: SolverTolerances) -> list[float]:
    basis = enumerate_sector(Sector(n_sites, n_arcs, geometry))
    report = full_spectrum(basis, tolerances=tolerances, threshold=max(basis.dimension, 1))
    spin = n_sites / 2 - n_arcs
    return sorted(
        level.energy_2h
        for level in report.levels_with_spin(spin)
        for _ in range(level.multiplicity)
    )


def verify_sector(
    n_sites: int,
    n_arcs: int,
    geometry: Geometry = Geometry.RING,
    *,
    tolerances: SolverTolerances | None = None,
) -> DiagramVerification:
    """Check the TL relations, L A = -2H L, the dimension identity and the route equivalence."""
    tolerances = tolerances or SolverTolerances()
    diagrams = enumerate_diagrams(n_sites, n_arcs, geometry)
    a_matrix = build_a_operator(n_sites, n_arcs, geometry, diagrams=diagrams)
    intertwiner = build_intertwiner(n_sites, n_arcs, geometry, diagrams=diagrams)
    two_h = build_sparse(intertwiner.basis, "two_h", threshold=intertwiner.basis.dimension).toarray()
    intertwining = bool(
        np.array_equal(intertwiner.matrix @ a_matrix, -np.rint(two_h).astype(np.int64) @ intertwiner.matrix)
    )

    failures = tl_relation_failures(n_sites, geometry, diagrams)
    highest = intertwiner.highest_weight_dimension
    if geometry is Geometry.CHAIN:
        dimension_identity = len(diagrams) == highest and intertwiner.is_isomorphism
    else:
        dimension_identity = intertwiner.rank == highest

    spectrum = diagram_spectrum(
        n_sites, n_arcs, geometry, a_operator=a_matrix, intertwiner=intertwiner
    )
    reference = _spin_multiset(n_sites, n_arcs, geometry, tolerances)
    route_equivalence = len(reference) == len(spectrum.kept_2h) and all(
        abs(ours - theirs) <= tolerances.violation * max(1.0, abs(theirs))
        for ours, theirs in zip(spectrum.kept_2h, reference)
    )

    verification = DiagramVerification(
        n_sites=n_sites,
        n_arcs=n_arcs,
        geometry=geometry,
        dimension=len(diagrams),
        dimension_identity=dimension_identity,
        relation_failures=tuple(failures),
        intertwining=intertwining,
        rank=intertwiner.rank,
        kernel_dimension=intertwiner.kernel_dimension,
        removed_values=spectrum.removed_values,
        kept_2h=spectrum.kept_2h,
        route_equivalence=route_equivalence,
        defective=spectrum.defective,
    )
    log = logger.info if verification.passed else logger.warning
    log(
        "TL verification N=%d k=%d %s: dim V=%d, kernel=%d, passed=%s",
        n_sites,
        n_arcs,
        geometry.value,
        len(diagrams),
        verification.kernel_dimension,
        verification.passed,
    )
    return verification
