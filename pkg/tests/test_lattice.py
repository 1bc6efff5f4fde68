"""
Tests for the diagonal form, the norm spectrum and lattice enumeration.
"""

import math

import numpy as np
import pytest

from app.errors import CapacityError, ConsistencyError, DomainError, RangeError
from app.models.lattice import DiagonalForm, NormSpectrum
from app.services.lattice import (
    brute_force_count,
    component_bound,
    enumerate_norms,
    estimate_memory,
    mean_spacing,
    norm_count,
    periodization_spectrum,
    weyl_count,
)


# ============ FORMS ============

def test_parse_keeps_exact_rationals():
    form = DiagonalForm.parse("1/2,3")
    assert form.is_exact
    assert form.common_denominator == 2
    assert form.integer_coeffs == (1, 6)
    assert form.coeffs == (0.5, 3.0)
    assert form.label() == "1/2,3"


def test_parse_float_coefficients_round_trip():
    form = DiagonalForm((math.sqrt(2.0), 1.0 / math.sqrt(2.0)))
    again = DiagonalForm.parse(form.label())
    assert not again.is_exact
    assert again.coeffs == form.coeffs


@pytest.mark.parametrize("text", ["1", "1,1,1,1", "1,-1", "1,0", "1,abc", "1,"])
def test_parse_rejects_bad_forms(text):
    with pytest.raises(DomainError):
        DiagonalForm.parse(text)


def test_volumes_and_periodization(square_form):
    assert square_form.covolume == 1.0
    assert square_form.torus_volume == pytest.approx(4.0 * math.pi**2)
    images = square_form.periodization()
    assert images.coeffs == pytest.approx((4.0 * math.pi**2, 4.0 * math.pi**2))


# ============ ENUMERATION ============

def test_square_torus_up_to_ten(square_form):
    spec = enumerate_norms(square_form, 10.0)
    assert spec.norms.tolist() == [0, 1, 2, 4, 5, 8, 9, 10]
    assert spec.mults.tolist() == [1, 4, 4, 4, 8, 4, 4, 8]
    assert spec.vector_count() == 37
    spec.check_invariants()


def test_cubic_torus_up_to_three(cubic_form):
    spec = enumerate_norms(cubic_form, 3.0)
    assert spec.norms.tolist() == [0, 1, 2, 3]
    assert spec.mults.tolist() == [1, 6, 12, 8]


def test_cutoff_below_first_norm_leaves_origin():
    spec = enumerate_norms(DiagonalForm.parse("3/4,2"), 0.5)
    assert spec.norms.tolist() == [0.0]
    assert spec.mults.tolist() == [1]


def test_exact_form_matches_brute_force():
    form = DiagonalForm.parse("1/2,3")
    spec = enumerate_norms(form, 60.0)
    for x in (0.0, 0.5, 3.5, 7.25, 20.0, 59.9):
        assert spec.vector_count(x) == brute_force_count(form, x)
    assert spec.numerators is not None
    assert np.array_equal(spec.numerators, np.rint(spec.norms * 2).astype(np.int64))


def test_irrational_form_matches_brute_force():
    form = DiagonalForm((math.sqrt(2.0), 1.0 / math.sqrt(2.0)))
    spec = enumerate_norms(form, 80.0)
    for x in (1.0, 17.3, 50.5, 79.9):
        assert spec.vector_count(x) == brute_force_count(form, x)
    spec.check_invariants()


def test_irrational_3d_form_matches_brute_force():
    form = DiagonalForm((1.0, math.sqrt(2.0), math.sqrt(3.0)))
    spec = enumerate_norms(form, 40.0)
    for x in (2.5, 13.1, 39.7):
        assert spec.vector_count(x) == brute_force_count(form, x)


@pytest.mark.parametrize(
    "form,top",
    [
        (DiagonalForm.parse("1,1"), 1e4),
        (DiagonalForm((math.sqrt(2.0), 1.0 / math.sqrt(2.0))), 1e4),
        (DiagonalForm.parse("1,1,1"), 1e3),
    ],
    ids=["square", "sqrt2", "cubic"],
)
def test_vector_counts_match_brute_force_at_random_x(form, top):
    spec = enumerate_norms(form, top)
    rng = np.random.default_rng(2024)
    for x in rng.uniform(0.0, top, 200):
        assert spec.vector_count(x) == brute_force_count(form, x)


def test_square_multiplicities_are_sums_of_two_squares(square_form):
    top = 10**4
    spec = enumerate_norms(square_form, float(top))
    # r2(n) = 4 * (#divisors = 1 mod 4 - #divisors = 3 mod 4)
    chi = np.zeros(top + 1, dtype=np.int64)
    for d in range(1, top + 1, 2):
        chi[d::d] += 1 if d % 4 == 1 else -1
    r2 = 4 * chi
    expected = np.flatnonzero(r2[1:] > 0) + 1
    assert np.array_equal(spec.numerators[1:], expected)
    assert np.array_equal(spec.mults[1:], r2[expected])


def test_cubic_count_follows_weyl_density(cubic_form):
    spec = enumerate_norms(cubic_form, 1e3)
    assert spec.vector_count(1e3) == pytest.approx(weyl_count(cubic_form, 1e3), rel=0.05)


def test_float_form_enumeration_is_bit_identical(golden_form):
    first = enumerate_norms(golden_form, 3000.0)
    second = enumerate_norms(golden_form, 3000.0)
    assert first.norms.tobytes() == second.norms.tobytes()
    assert first.mults.tobytes() == second.mults.tobytes()
    assert first.fingerprint() == second.fingerprint()


def test_brute_force_counts(square_form, cubic_form):
    assert brute_force_count(square_form, 10.0) == 37
    assert brute_force_count(square_form, 0.0) == 1
    assert brute_force_count(cubic_form, 1.0) == 7


def test_brute_force_respects_visit_limit(square_form):
    with pytest.raises(CapacityError):
        brute_force_count(square_form, 1e6, max_visits=1000)


def test_memory_budget_is_enforced(square_form):
    needed = estimate_memory(square_form, 1e4)
    with pytest.raises(CapacityError) as info:
        enumerate_norms(square_form, 1e4, memory_budget=needed - 1)
    assert info.value.required == needed


@pytest.mark.parametrize("cutoff,merge_tol", [(0.0, 1e-10), (-1.0, 1e-10), (10.0, 1e-5), (10.0, -1.0)])
def test_enumeration_rejects_bad_arguments(square_form, cutoff, merge_tol):
    with pytest.raises(DomainError):
        enumerate_norms(square_form, cutoff, merge_tol=merge_tol)


def test_enumeration_is_deterministic(square_form):
    first = enumerate_norms(square_form, 500.0)
    second = enumerate_norms(square_form, 500.0)
    assert first.fingerprint() == second.fingerprint()


def test_multiplicities_are_even(square_spec):
    assert np.all(square_spec.mults[1:] % 2 == 0)
    square_spec.check_invariants()


def test_weyl_count_tracks_vector_count(square_spec):
    x = square_spec.cutoff
    assert weyl_count(square_spec.form, x) == pytest.approx(math.pi * x)
    assert square_spec.vector_count() == pytest.approx(weyl_count(square_spec.form, x), rel=0.02)


def test_weyl_count_in_three_dimensions(cubic_form):
    assert weyl_count(cubic_form, 100.0) == pytest.approx(4.0 * math.pi / 3.0 * 1000.0)


def test_periodization_spectrum_lengths(square_form):
    spec = enumerate_norms(square_form, 10.0)
    images = periodization_spectrum(spec, 100.0)
    four_pi_sq = 4.0 * math.pi**2
    assert images.norms[1] == pytest.approx(four_pi_sq)
    assert images.mults[1] == 4
    assert images.norms[2] == pytest.approx(2.0 * four_pi_sq)


# ============ COUNTING ============

def test_component_bound_edges():
    assert component_bound(1.0, 1e6) == 1000
    assert component_bound(2.0, 7.99) == 1
    assert component_bound(2.0, 8.0) == 2
    assert component_bound(1.0, -1.0) == -1


def test_norm_count_and_mean_spacing(square_form):
    spec = enumerate_norms(square_form, 10.0)
    assert norm_count(spec, 5.0) == 5
    assert norm_count(spec, 0.0) == 1
    assert mean_spacing(spec, 9.0) == pytest.approx(10.0 / 7.0)


def test_counting_beyond_cutoff_raises(square_form):
    spec = enumerate_norms(square_form, 10.0)
    with pytest.raises(RangeError):
        norm_count(spec, 11.0)
    with pytest.raises(RangeError):
        mean_spacing(spec, 10.0)
    with pytest.raises(DomainError):
        norm_count(spec, -1.0)


# ============ SPECTRUM VALIDATION ============

def test_from_mapping_adds_origin(toy_spec):
    assert toy_spec.norms.tolist() == [0.0, 1.0]
    assert toy_spec.mults.tolist() == [1, 1]
    assert toy_spec.cutoff == 1.0


def test_spectrum_arrays_are_read_only(toy_spec):
    with pytest.raises(ValueError):
        toy_spec.norms[1] = 2.0


@pytest.mark.parametrize(
    "norms,mults,cutoff",
    [
        ([0.0, 2.0, 1.0], [1, 2, 2], 3.0),
        ([1.0, 2.0], [2, 2], 3.0),
        ([0.0, 1.0], [1, 0], 3.0),
        ([0.0, 5.0], [1, 2], 3.0),
    ],
)
def test_spectrum_rejects_inconsistent_arrays(norms, mults, cutoff):
    with pytest.raises(ConsistencyError):
        NormSpectrum(np.array(norms), np.array(mults), cutoff)


def test_odd_multiplicity_fails_lattice_invariants():
    spec = NormSpectrum.from_mapping({1.0: 3})
    with pytest.raises(ConsistencyError):
        spec.check_invariants()
