import logging
import math

import numpy as np
import pytest

from foel.bethe import (
    BetheState,
    ContinuationSchedule,
    bethe_residual,
    continue_in_n,
    curve_parameters,
    dhar_shastry_eps,
    ed_match,
    elliptic_pair,
    elliptic_series,
    energy_from_roots,
    hermite_init,
    hermite_zeros,
    newton_refine,
    single_magnon_state,
    sutherland_curve,
    sutherland_sweep,
)
from foel.errors import BetheError, NewtonDivergenceError, RootCollisionError, SingularJacobianError


def _dispersion(n_sites, index):
    return 2 * (1 - math.cos(2 * math.pi * index / n_sites))


class TestBetheState:
    def test_mode_numbers_must_match_roots(self):
        with pytest.raises(ValueError):
            BetheState(n_param=6.0, roots=np.array([0.5 + 0j]), mode_numbers=(1, 1))

    def test_conjugation_closed(self):
        state = BetheState(n_param=10.0, roots=np.array([1 + 0.6j, 1 - 0.6j]), mode_numbers=(1, 1))
        assert state.conjugation_closed()
        skewed = BetheState(n_param=10.0, roots=np.array([1 + 0.6j, 1 - 0.5j]), mode_numbers=(1, 1))
        assert not skewed.conjugation_closed()

    def test_as_dict(self):
        state = single_magnon_state(6, 1)
        payload = state.as_dict()
        assert payload["n"] == 6.0
        assert payload["mode_numbers"] == [1]
        assert payload["converged"] is True


class TestSingleMagnon:
    @pytest.mark.parametrize("n_sites,index", [(6, 1), (6, 2), (7, 3), (10, 4)])
    def test_energy_matches_dispersion(self, n_sites, index):
        state = single_magnon_state(n_sites, index)
        assert state.converged
        assert energy_from_roots(state) == pytest.approx(_dispersion(n_sites, index), abs=1e-12)

    def test_c6_lowest_magnon(self):
        assert energy_from_roots(single_magnon_state(6, 1)) == pytest.approx(1.0)

    def test_zero_momentum_has_no_finite_root(self):
        with pytest.raises(BetheError):
            single_magnon_state(6, 0)


class TestResidualAndNewton:
    def test_exact_solution_has_zero_residual(self):
        state = single_magnon_state(9, 2)
        assert np.linalg.norm(bethe_residual(state)) < 1e-10

    def test_newton_recovers_perturbed_root(self):
        exact = single_magnon_state(12, 1)
        start = BetheState(n_param=12.0, roots=exact.roots + 0.05, mode_numbers=exact.mode_numbers)
        refined = newton_refine(start)
        assert refined.converged
        assert refined.iterations > 0
        np.testing.assert_allclose(refined.roots, exact.roots, atol=1e-9)

    def test_converged_state_is_returned_unchanged(self):
        state = single_magnon_state(12, 1)
        assert newton_refine(state).iterations == 0

    def test_root_on_a_pole(self):
        state = BetheState(n_param=6.0, roots=np.array([0.5j]), mode_numbers=(1,))
        with pytest.raises(RootCollisionError):
            bethe_residual(state)

    def test_coinciding_roots(self):
        state = BetheState(n_param=6.0, roots=np.array([1.0 + 0j, 1.0 + 0j]), mode_numbers=(1, 2))
        with pytest.raises(RootCollisionError):
            bethe_residual(state)

    def test_divergence_carries_history(self, monkeypatch):
        monkeypatch.setattr("foel.bethe.DIVERGENCE_LIMIT", -1.0)
        start = BetheState(n_param=12.0, roots=np.array([2.0 + 0j]), mode_numbers=(1,))
        with pytest.raises(NewtonDivergenceError) as excinfo:
            newton_refine(start)
        assert excinfo.value.history[0]["iteration"] == 1

    def test_singular_jacobian(self, monkeypatch):
        monkeypatch.setattr("foel.bethe.MAX_CONDITION", 0.0)
        start = BetheState(n_param=12.0, roots=np.array([2.0 + 0j]), mode_numbers=(1,))
        with pytest.raises(SingularJacobianError):
            newton_refine(start)

    def test_energy_needs_integer_n(self):
        state = BetheState(n_param=6.5, roots=np.array([1.0 + 0j]), mode_numbers=(1,))
        with pytest.raises(BetheError):
            energy_from_roots(state)


class TestHermiteInit:
    def test_hermite_zeros(self):
        np.testing.assert_allclose(hermite_zeros(2), [-1 / math.sqrt(2), 1 / math.sqrt(2)])
        assert len(hermite_zeros(0)) == 0

    def test_roots_are_conjugate_pairs_near_n_over_two_pi(self):
        state = hermite_init(2, 60)
        assert state.conjugation_closed()
        np.testing.assert_allclose(state.roots.real, 60 / (2 * math.pi))
        assert state.mode_numbers == (1, 1)

    def test_large_n_start_converges(self):
        state = newton_refine(hermite_init(2, 60))
        assert state.converged
        assert state.conjugation_closed()


class TestContinuation:
    def test_single_magnon_follows_dispersion(self):
        result = continue_in_n(single_magnon_state(20, 1), 10)
        assert result.completed
        integers = result.integer_states()
        assert [state.n_param for state in integers] == [float(n) for n in range(20, 9, -1)]
        for state in integers:
            n_sites = int(state.n_param)
            assert energy_from_roots(state) == pytest.approx(_dispersion(n_sites, 1), abs=1e-9)

    def test_fractional_steps_land_on_integers(self):
        schedule = ContinuationSchedule(step=0.75, min_step=0.25)
        result = continue_in_n(single_magnon_state(8, 1), 6, schedule)
        assert {6.0, 7.0, 8.0} <= {state.n_param for state in result.chain}

    def test_schedule_validation(self):
        with pytest.raises(ValueError):
            ContinuationSchedule(step=0.5, min_step=1.0)

    def test_failures_end_as_chaotic(self, monkeypatch, caplog):
        def always_fail(state, *args, **kwargs):
            if state.n_param == 10.0:
                return state
            raise NewtonDivergenceError("forced", history=[])

        start = single_magnon_state(10, 1)
        monkeypatch.setattr("foel.bethe.newton_refine", always_fail)
        with caplog.at_level(logging.WARNING, logger="foel.bethe"):
            result = continue_in_n(start, 5, ContinuationSchedule(step=1.0, min_step=0.25, max_floor_failures=2))

        assert not result.completed
        assert result.diagnostics.chaotic
        assert result.diagnostics.stopped_at == 10.0
        assert result.diagnostics.first_refinement_n == 10.0
        assert result.diagnostics.breakdown_density == pytest.approx(0.1)
        assert len(result.chain) == 1
        assert sum("refining the step" in r.message for r in caplog.records) == 1
        assert "chaotic" in caplog.text

    @pytest.mark.slow
    def test_two_magnon_band_from_sixty_to_twelve(self):
        start = newton_refine(hermite_init(2, 60))
        result = continue_in_n(start, 12)

        assert result.completed
        integers = result.integer_states()
        assert [state.n_param for state in integers] == [float(n) for n in range(60, 11, -1)]
        for state in integers:
            assert state.converged
            assert state.conjugation_closed(1e-6)
            _, deviation = ed_match(state)
            assert deviation < 1e-6

    @pytest.mark.slow
    def test_three_magnon_band_matches_ed_down_to_eight(self):
        result = continue_in_n(newton_refine(hermite_init(3, 60)), 8)

        by_n = {state.n_param: state for state in result.integer_states()}
        for n_sites in (12.0, 10.0, 8.0):
            assert by_n[n_sites].converged
            _, deviation = ed_match(by_n[n_sites])
            assert deviation < 1e-6

    @pytest.mark.slow
    def test_four_magnon_band_breaks_down_near_twice_k(self, caplog):
        with caplog.at_level(logging.WARNING, logger="foel.bethe"):
            result = continue_in_n(newton_refine(hermite_init(4, 60)), 8)

        diagnostics = result.diagnostics
        assert not result.completed
        assert diagnostics.chaotic
        assert 8 < diagnostics.stopped_at < 12
        assert diagnostics.breakdown_density > 0
        assert diagnostics.first_refinement_n is not None
        assert "chaotic" in caplog.text


class TestEdMatch:
    def test_dense_sector(self):
        nearest, deviation = ed_match(single_magnon_state(8, 3))
        assert nearest == pytest.approx(_dispersion(8, 3))
        assert deviation < 1e-10

    def test_large_sector_uses_the_lanczos_band(self, monkeypatch):
        def no_dense(*args, **kwargs):
            raise AssertionError("dense solve above the threshold")

        monkeypatch.setattr("foel.bethe.full_spectrum", no_dense)
        nearest, deviation = ed_match(single_magnon_state(40, 1), threshold=10, band_size=4, pad=4)
        assert nearest == pytest.approx(_dispersion(40, 1), abs=1e-9)
        assert deviation < 1e-8

    def test_energy_above_the_band_is_not_matched(self, caplog):
        with caplog.at_level(logging.DEBUG, logger="foel.bethe"):
            match = ed_match(single_magnon_state(40, 5), threshold=10, band_size=4, pad=4)
        assert match is None
        assert "lies above the" in caplog.text


class TestEllipticIntegrals:
    def test_zero_modulus(self):
        pair = elliptic_pair(0.0)
        assert pair.K == pytest.approx(math.pi / 2)
        assert pair.E == pytest.approx(math.pi / 2)

    def test_known_value(self):
        # K(1/sqrt 2) = Gamma(1/4)^2 / (4 sqrt(pi))
        expected = math.gamma(0.25) ** 2 / (4 * math.sqrt(math.pi))
        assert elliptic_pair(1 / math.sqrt(2)).K == pytest.approx(expected, rel=1e-14)

    def test_series_agrees_with_agm(self):
        agm = elliptic_pair(0.1)
        series = elliptic_series(0.1, order=10)
        assert abs(series.K - agm.K) < 1e-10
        assert abs(series.E - agm.E) < 1e-10

    def test_truncation_error_scales_with_next_power(self):
        errors = [abs(elliptic_series(m, order=4).K - elliptic_pair(m).K) for m in (0.1, 0.2)]
        slope = math.log(errors[1] / errors[0]) / math.log(2)
        assert slope == pytest.approx(6, abs=0.2)

    def test_modulus_range(self):
        with pytest.raises(ValueError):
            elliptic_pair(1.0)


class TestSutherlandCurve:
    def test_large_parameter_limit(self):
        point = sutherland_curve(1e6)
        assert abs(point.d - 0.5) < 1e-6
        assert abs(point.eps - math.pi**2) < 1e-4

    def test_dhar_shastry_at_half_filling(self):
        assert dhar_shastry_eps(0.5) == pytest.approx(math.pi**2)
        with pytest.raises(ValueError):
            dhar_shastry_eps(1.5)

    def test_parameter_must_exceed_one(self):
        with pytest.raises(ValueError):
            sutherland_curve(1.0)

    def test_sweep(self):
        a_values = curve_parameters(1.1, 1e6, 20)
        assert a_values[0] == pytest.approx(1.1)
        assert a_values[-1] == pytest.approx(1e6)
        points = sutherland_sweep(a_values)
        densities = [point.d for point in points]
        assert all(0 <= d <= 0.5 for d in densities)
        assert densities == sorted(densities)
        slopes = [
            (right.eps - left.eps) / (right.d - left.d) for left, right in zip(points, points[1:])
        ]
        assert abs(slopes[-1]) < 1e-3
        assert abs(slopes[-1]) < 1e-3 * abs(slopes[0])

    def test_sweep_needs_two_samples(self):
        with pytest.raises(ValueError):
            curve_parameters(1.1, 10, 1)
