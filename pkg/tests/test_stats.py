"""
Tests for gap sequences, spacing reports, heat sums and the greedy construction.
"""

import logging
import math

import numpy as np
import pytest
from scipy import stats as sstats

from app.errors import DomainError, RangeError, SampleSizeError
from app.models.spectrum import ScattererPhase, TailModel
from app.services.lattice import enumerate_norms
from app.services.secular import solve_spectrum
from app.services.stats import (
    analysis_cutoff,
    clumping_fraction,
    gap_bound_profile,
    gap_sequence,
    greedy_approx_3d,
    greedy_bounds_check,
    heat_sums,
    heat_sweep,
    mean_gap_ratio,
    spacing_report,
)


# ============ GAP SEQUENCES ============

def test_toy_gap_sequence(toy_spec):
    pert = solve_spectrum(toy_spec, ScattererPhase(0.0), tail=TailModel.NONE)
    seq = gap_sequence(toy_spec, pert, 0.5)
    assert seq.delta.tolist() == [1.0]
    assert seq.d[0] == pytest.approx((3.0 + math.sqrt(17.0)) / 2.0)
    assert seq.A[-1] == pytest.approx(seq.d[0])


def test_spacing_difference_identity(square_spec, square_pert):
    count = len(square_pert)
    delta = np.diff(square_spec.norms[:count])
    delta_phi = np.diff(square_pert.lambdas)
    d = square_pert.gaps
    np.testing.assert_allclose(delta - delta_phi, d[1:] - d[:-1], atol=1e-9)


def test_gap_sequence_outside_solved_range(square_spec, square_pert):
    with pytest.raises(RangeError):
        gap_sequence(square_spec, square_pert, 1500.0)
    with pytest.raises(DomainError):
        gap_sequence(square_spec, square_pert, -1.0)


def test_mean_gap_ratio_lies_in_unit_interval(square_spec, square_pert):
    ratio = mean_gap_ratio(square_spec, square_pert, 1000.0)
    assert 0.0 < ratio < 1.0


def test_clumping_fraction_is_a_fraction(square_spec, square_pert):
    fraction = clumping_fraction(square_spec, square_pert, 1000.0)
    assert 0.0 <= fraction <= 1.0


# ============ SPACING REPORT ============

def test_spacing_report_normalizations(square_spec, square_pert):
    report = spacing_report(square_spec, square_pert, 1000.0, min_levels=200)
    assert report.N == len(square_pert)
    assert np.mean(report.normalized_spacings) == pytest.approx(1.0, abs=1e-12)
    assert np.mean(report.perturbed_spacings) == pytest.approx(1.0, abs=1e-12)
    assert report.norm_histogram.integral() == pytest.approx(1.0, abs=1e-10)
    assert report.perturbed_histogram.integral() == pytest.approx(1.0, abs=1e-10)
    assert len(report.norm_histogram.densities) == 50
    assert 0.0 < report.ratio < 1.0
    assert report.mean_delta == pytest.approx(square_spec.norms[report.N] / report.N)


def test_spacing_report_omits_raw_spacings_from_json(square_spec, square_pert):
    report = spacing_report(square_spec, square_pert, 1000.0, bins=10, min_levels=200)
    payload = report.model_dump(mode="json", by_alias=True)
    assert "normalized_spacings" not in payload
    assert payload["schema"] == "seba-report v1"
    assert len(payload["norm_histogram"]["edges"]) == 11


def test_spacing_report_needs_enough_levels(square_spec, square_pert):
    with pytest.raises(SampleSizeError):
        spacing_report(square_spec, square_pert, 1000.0)


def test_perturbed_spacings_follow_the_norms(golden_spec, golden_pert):
    report = spacing_report(golden_spec, golden_pert, golden_pert.last_norm, min_levels=200)
    assert report.ks_between <= 2.0 * report.ratio


def test_gap_bound_profile_blocks(square_spec, square_pert):
    profile = gap_bound_profile(square_spec, square_pert, 0.25, x=1000.0)
    assert [block.lower for block in profile] == [2.0**k for k in range(len(profile))]
    assert sum(block.count for block in profile) == len(square_pert) - 1
    assert all(block.max_ratio > 0 for block in profile)


def test_gap_bound_profile_is_bounded_and_shrinks(square_spec, square_pert):
    quarter = gap_bound_profile(square_spec, square_pert, 0.25, x=1000.0)
    assert max(block.max_ratio for block in quarter) <= 4.0
    half = [block.max_ratio for block in gap_bound_profile(square_spec, square_pert, 0.5, x=1000.0)]
    assert max(half[-3:]) < max(half[:3])


def test_perturbed_spacings_start_at_the_ground_state(square_spec, square_pert):
    report = spacing_report(square_spec, square_pert, 1000.0, min_levels=200)
    assert len(report.perturbed_spacings) == report.N - 1
    first = (square_pert.lambdas[1] - square_pert.lambdas[0]) / report.mean_delta_perturbed
    assert report.perturbed_spacings[0] == pytest.approx(first)


def test_analysis_cutoff_defaults_to_the_solved_range(square_pert, caplog):
    with caplog.at_level(logging.WARNING, logger="app.services.stats"):
        assert analysis_cutoff(square_pert) == square_pert.last_norm
        assert analysis_cutoff(square_pert, 500.0) == 500.0
    assert not [record for record in caplog.records if record.levelno >= logging.WARNING]


def test_analysis_cutoff_warns_when_clipping(square_pert, caplog):
    with caplog.at_level(logging.WARNING, logger="app.services.stats"):
        assert analysis_cutoff(square_pert, 1500.0) == square_pert.last_norm
    assert "beyond the last solved norm" in caplog.text


# ============ HEAT SUMS ============

def test_heat_sums_need_enough_spectrum(square_spec, square_pert):
    with pytest.raises(RangeError) as info:
        heat_sums(square_spec, square_pert, 0.01)
    assert info.value.required == pytest.approx(4000.0)


def test_heat_sums_are_positive_and_consistent(square_spec, square_pert):
    points = heat_sweep(square_spec, square_pert, [0.2, 0.1, 0.05])
    for point in points:
        assert point.a_tilde > 0.0
        assert point.difference_form > 0.0
        assert point.discrepancy == pytest.approx(point.a_tilde - point.difference_form)
        assert abs(point.discrepancy) * math.sqrt(point.beta) <= 1.0
        assert point.scaled_2d == pytest.approx(point.beta * point.a_tilde * math.log(1.0 / point.beta))


# ============ GREEDY 3D ============

def test_greedy_exact_square(cubic_form):
    approx = greedy_approx_3d(cubic_form, 1e6)
    assert (approx.m, approx.n, approx.k) == (1000, 0, 0)
    assert approx.final == 0.0


def test_greedy_three_steps(cubic_form):
    approx = greedy_approx_3d(cubic_form, 123456.789)
    assert approx.m == 351
    assert approx.s1 == pytest.approx(255.789, abs=1e-8)
    assert approx.n == 15
    assert approx.s2 == pytest.approx(30.789, abs=1e-8)
    assert approx.k == 5
    assert approx.final == pytest.approx(5.789, abs=1e-8)


def test_greedy_needs_a_3d_form(square_form, cubic_form):
    with pytest.raises(DomainError):
        greedy_approx_3d(square_form, 10.0)
    with pytest.raises(DomainError):
        greedy_approx_3d(cubic_form, -1.0)


def test_greedy_chained_bounds_hold():
    check = greedy_bounds_check(10**6, seed=0)
    assert check.samples == 10**6
    assert check.violations == 0
    assert check.max_ratio_s1 <= 1.0
    assert check.max_ratio_final <= 1.0


# ============ DESK-SCALE TRENDS ============

@pytest.mark.slow
def test_gap_ratio_decreases_in_two_dimensions(square_form):
    spec = enumerate_norms(square_form, 8e4)
    pert = solve_spectrum(spec, ScattererPhase(math.pi / 2), x_max=4e4)

    ratios = [mean_gap_ratio(spec, pert, x) for x in (5e3, 1e4, 2e4, 4e4)]
    assert all(later < earlier for earlier, later in zip(ratios, ratios[1:]))

    fractions = [clumping_fraction(spec, pert, x, threshold=0.2) for x in (1e3, 5e3, 1e4, 2e4, 4e4)]
    assert fractions[0] > 0.0
    assert all(later < earlier for earlier, later in zip(fractions, fractions[1:]))

    for point in heat_sweep(spec, pert, np.geomspace(0.01, 0.2, 8)):
        assert 0.0 < point.scaled_2d <= 1.0
    for point in heat_sweep(spec, pert, [0.1, 0.05, 0.02, 0.01]):
        assert abs(point.discrepancy) * math.sqrt(point.beta) <= 1.0


@pytest.mark.slow
def test_gap_ratio_near_one_half_in_three_dimensions(cubic_form):
    spec = enumerate_norms(cubic_form, 4000.0)
    pert = solve_spectrum(spec, ScattererPhase(math.pi / 2), x_max=2000.0)
    assert 0.4 <= mean_gap_ratio(spec, pert, 2000.0) <= 0.6


@pytest.mark.slow
def test_heat_sum_scaling_in_three_dimensions(cubic_form):
    spec = enumerate_norms(cubic_form, 8000.0)
    pert = solve_spectrum(spec, ScattererPhase(math.pi / 2), x_max=4000.0)
    points = heat_sweep(spec, pert, [0.05, 0.02, 0.01])
    offsets = [abs(point.scaled_3d - 0.5) for point in points]
    assert all(later < earlier for earlier, later in zip(offsets, offsets[1:]))
    assert offsets[-1] <= 0.2
    for point in points:
        assert abs(point.discrepancy) * point.beta**0.75 <= 1.0


@pytest.mark.slow
def test_irrational_spacings_are_poissonian_before_and_after(golden_form):
    spec = enumerate_norms(golden_form, 8.2e4)
    pert = solve_spectrum(spec, ScattererPhase(math.pi / 2), x_max=4.1e4)
    report = spacing_report(spec, pert, 4e4)
    assert report.ks_poisson <= 0.05
    assert sstats.kstest(report.normalized_spacings, "expon").statistic == pytest.approx(report.ks_poisson)
    assert abs(report.ks_poisson_perturbed - report.ks_poisson) <= 2.0 * report.ratio
