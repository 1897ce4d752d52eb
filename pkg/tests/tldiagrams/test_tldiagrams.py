import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from foel.basis import Geometry
from foel.errors import GeometryError
from foel.tldiagrams import (
    ArcDiagram,
    DiagramVector,
    apply_generator,
    build_a_operator,
    build_intertwiner,
    diagram_spectrum,
    enumerate_diagrams,
    generator_matrix,
    ring_spectrum_via_diagrams,
    tl_relation_failures,
    verify_sector,
)

SQRT13 = math.sqrt(13)


def _chain(n_sites, arcs, ups):
    return ArcDiagram(n_sites, tuple(arcs), frozenset(ups), Geometry.CHAIN)


def _ring(n_sites, arcs, ups):
    return ArcDiagram(n_sites, tuple(arcs), frozenset(ups), Geometry.RING)


class TestArcDiagram:
    def test_must_cover_every_site_once(self):
        with pytest.raises(GeometryError):
            _chain(4, [(1, 2)], [3])

    def test_arcs_must_not_cross(self):
        with pytest.raises(GeometryError):
            _chain(4, [(1, 3), (2, 4)], [])

    def test_chain_arcs_cannot_span_unpaired_sites(self):
        with pytest.raises(GeometryError):
            _chain(3, [(1, 3)], [2])

    def test_ring_arcs_need_one_free_side(self):
        assert _ring(4, [(1, 4)], [2, 3]).n_arcs == 1
        with pytest.raises(GeometryError):
            _ring(4, [(1, 3)], [2, 4])

    def test_canonical_flips_sign_per_reversed_arc(self):
        diagram, sign = _ring(4, [(2, 1), (4, 3)], []).canonical()
        assert diagram.arcs == ((1, 2), (3, 4))
        assert sign == 1
        _, sign = _ring(4, [(2, 1), (3, 4)], []).canonical()
        assert sign == -1

    def test_rotation_wraps_around(self):
        rotated = _chain(4, [(3, 4)], [1, 2]).rotated(1)
        assert rotated.geometry is Geometry.RING
        assert rotated.partner(4) == 1
        assert rotated.unpaired == frozenset({2, 3})

    def test_spin_terms_of_a_singlet(self):
        terms = dict(_chain(3, [(1, 2)], [3]).spin_terms())
        # psi_12 = dn_1 up_2 - up_1 dn_2
        assert terms == {0b001: 1, 0b010: -1}

    def test_str(self):
        assert str(_chain(4, [(1, 2)], [3, 4])) == "[1-2 | 3,4]"


class TestDiagramVector:
    def test_add_canonicalizes_and_drops_zeros(self):
        vector = DiagramVector()
        vector.add(_ring(4, [(2, 1)], [3, 4]), 3)
        assert vector.coefficient(_chain(4, [(1, 2)], [3, 4]).rotated(0)) == Fraction(-3)
        vector.add(_ring(4, [(1, 2)], [3, 4]), 3)
        assert len(vector) == 0


class TestEnumeration:
    @pytest.mark.parametrize("n_sites,n_arcs", [(4, 1), (4, 2), (6, 2), (6, 3), (8, 3), (9, 4)])
    def test_chain_count_is_highest_weight_dimension(self, n_sites, n_arcs):
        expected = math.comb(n_sites, n_arcs) - math.comb(n_sites, n_arcs - 1)
        assert len(enumerate_diagrams(n_sites, n_arcs)) == expected

    def test_ring_counts(self):
        assert len(enumerate_diagrams(4, 1, Geometry.RING)) == 4
        assert len(enumerate_diagrams(4, 2, Geometry.RING)) == 2
        assert len(enumerate_diagrams(6, 2, Geometry.RING)) == 15

    def test_diagrams_are_canonical_and_sorted(self):
        diagrams = enumerate_diagrams(6, 3, Geometry.RING)
        assert all(a < b for diagram in diagrams for a, b in diagram.arcs)
        assert diagrams == sorted(diagrams, key=lambda d: (d.arcs, sorted(d.unpaired)))

    def test_too_many_arcs(self):
        with pytest.raises(GeometryError):
            enumerate_diagrams(4, 3)


class TestGenerators:
    def test_closed_loop_gives_minus_two(self):
        diagram = _chain(4, [(1, 2)], [3, 4])
        result = apply_generator((1, 2), diagram)
        assert list(result) == [(diagram, Fraction(-2))]

    def test_arc_slides_onto_up_spin(self):
        result = apply_generator((2, 3), _chain(4, [(1, 2)], [3, 4]))
        assert list(result) == [(_chain(4, [(2, 3)], [1, 4]), Fraction(1))]

    def test_two_arcs_are_rewired(self):
        result = apply_generator((2, 3), _chain(4, [(1, 2), (3, 4)], []))
        assert list(result) == [(_chain(4, [(1, 4), (2, 3)], []), Fraction(1))]

    def test_two_up_spins_vanish(self):
        assert len(apply_generator((3, 4), _chain(4, [(1, 2)], [3, 4]))) == 0

    def test_edge_must_belong_to_geometry(self):
        with pytest.raises(GeometryError):
            apply_generator((1, 4), _chain(4, [(1, 2)], [3, 4]))

    def test_generator_matrix_is_integral(self):
        diagrams = enumerate_diagrams(6, 2, Geometry.RING)
        matrix = generator_matrix((1, 6), diagrams)
        assert matrix.dtype == np.int64
        np.testing.assert_array_equal(matrix @ matrix, -2 * matrix)

    @pytest.mark.parametrize(
        "n_sites,n_arcs,geometry",
        [(4, 1, Geometry.RING), (5, 2, Geometry.RING), (6, 2, Geometry.RING), (6, 3, Geometry.CHAIN)],
    )
    def test_temperley_lieb_relations(self, n_sites, n_arcs, geometry):
        diagrams = enumerate_diagrams(n_sites, n_arcs, geometry)
        assert tl_relation_failures(n_sites, geometry, diagrams) == []


class TestIntertwiner:
    def test_chain_intertwiner_is_an_isomorphism(self):
        intertwiner = build_intertwiner(6, 3, Geometry.CHAIN)
        assert intertwiner.is_isomorphism
        assert intertwiner.rank == 5

    def test_c4_single_arc_kernel(self):
        intertwiner = build_intertwiner(4, 1, Geometry.RING)
        assert len(intertwiner.diagrams) == 4
        assert intertwiner.kernel_dimension == 1
        assert intertwiner.rank == intertwiner.highest_weight_dimension == 3

    def test_intertwines_a_with_minus_two_h(self):
        from foel.operators import build_sparse

        intertwiner = build_intertwiner(6, 2, Geometry.RING)
        a_matrix = build_a_operator(6, 2, Geometry.RING, diagrams=list(intertwiner.diagrams))
        two_h = build_sparse(intertwiner.basis, "two_h").toarray()
        np.testing.assert_array_equal(intertwiner.matrix @ a_matrix, -two_h @ intertwiner.matrix)


class TestDiagramSpectrum:
    def test_c4_single_arc(self):
        spectrum = diagram_spectrum(4, 1)
        values = sorted(item.real for item in spectrum.eigenvalues for _ in range(item.algebraic))
        assert values == pytest.approx([-4, -2, -2, 0])
        assert spectrum.removed_values == (0.0,)
        assert spectrum.kept_2h == pytest.approx((2, 2, 4))
        assert spectrum.kernel_dimension == 1

    def test_c4_two_arcs(self):
        spectrum = diagram_spectrum(4, 2)
        assert sorted(item.real for item in spectrum.eigenvalues) == pytest.approx([-6, -2])
        assert spectrum.kernel_dimension == 0
        assert spectrum.removed_values == ()
        assert ring_spectrum_via_diagrams(4, 2) == pytest.approx((2, 6))

    def test_c6_two_arcs_removed_values(self):
        spectrum = diagram_spectrum(6, 2)
        assert sorted(spectrum.removed_values) == pytest.approx([-4, -3, -1, 0])
        assert spectrum.kernel_dimension == 15 - 9
        assert len(spectrum.kept_2h) == 9

    def test_c6_singlets(self):
        kept = ring_spectrum_via_diagrams(6, 3)
        assert 5 - SQRT13 == pytest.approx(kept[0])
        assert any(abs(value - (5 + SQRT13)) < 1e-9 for value in kept)


class TestVerifySector:
    @pytest.mark.parametrize(
        "n_sites,n_arcs,geometry",
        [(4, 1, Geometry.RING), (4, 2, Geometry.RING), (6, 2, Geometry.RING), (6, 3, Geometry.RING), (6, 3, Geometry.CHAIN)],
    )
    def test_passes(self, n_sites, n_arcs, geometry):
        verification = verify_sector(n_sites, n_arcs, geometry)
        assert verification.tl_relations
        assert verification.intertwining
        assert verification.dimension_identity
        assert verification.route_equivalence
        assert verification.passed

    def test_logs_summary(self, info_logs):
        verify_sector(4, 1)
        assert "TL verification N=4 k=1 ring" in info_logs.text


@st.composite
def ring_diagram_and_edge(draw):
    n_sites = draw(st.integers(min_value=3, max_value=8))
    n_arcs = draw(st.integers(min_value=0, max_value=n_sites // 2))
    diagrams = enumerate_diagrams(n_sites, n_arcs, Geometry.RING)
    diagram = draw(st.sampled_from(diagrams))
    site = draw(st.integers(min_value=1, max_value=n_sites))
    edge = (site, site + 1) if site < n_sites else (1, n_sites)
    return diagram, edge


def _apply(edge, vector):
    result = DiagramVector()
    for diagram, coefficient in vector:
        for image, weight in apply_generator(edge, diagram):
            result.add(image, coefficient * weight)
    return result


@given(ring_diagram_and_edge())
@settings(max_examples=60, deadline=None)
def test_generator_squares_to_minus_two_times_itself(case):
    diagram, edge = case
    once = apply_generator(edge, diagram)
    twice = _apply(edge, once)
    assert twice.terms == {image: -2 * weight for image, weight in once}


EVEN_SECTORS = [
    pytest.param(n_sites, n_arcs, marks=[pytest.mark.slow] if n_sites == 8 else [])
    for n_sites in (4, 6, 8)
    for n_arcs in range(n_sites // 2 + 1)
]


@pytest.mark.parametrize("geometry", [Geometry.RING, Geometry.CHAIN])
@pytest.mark.parametrize("n_sites,n_arcs", EVEN_SECTORS)
def test_identity_suite_on_even_sizes(n_sites, n_arcs, geometry):
    verification = verify_sector(n_sites, n_arcs, geometry)
    assert verification.relation_failures == ()
    assert verification.intertwining
    assert verification.dimension_identity
    if geometry is Geometry.RING:
        assert verification.route_equivalence
    if geometry is Geometry.CHAIN:
        assert verification.dimension == math.comb(n_sites, n_arcs) - (math.comb(n_sites, n_arcs - 1) if n_arcs else 0)
