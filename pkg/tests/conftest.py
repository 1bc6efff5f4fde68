"""
Shared fixtures: toy spectra with closed-form roots and a few cached tori.

The session-scoped spectra are solved once and reused by the secular,
trace and stats tests.
"""

import math

import pytest

from app.models.lattice import DiagonalForm, NormSpectrum
from app.models.spectrum import ScattererPhase, TailModel
from app.services.lattice import enumerate_norms
from app.services.secular import build_secular, solve_spectrum

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0


@pytest.fixture
def toy_spec() -> NormSpectrum:
    """n = {0, 1}, r = {1, 1}."""
    return NormSpectrum.from_mapping({1.0: 1})


@pytest.fixture
def toy_F(toy_spec):
    return build_secular(toy_spec, TailModel.NONE)


@pytest.fixture
def square_form() -> DiagonalForm:
    return DiagonalForm.parse("1,1")


@pytest.fixture
def cubic_form() -> DiagonalForm:
    return DiagonalForm.parse("1,1,1")


@pytest.fixture
def golden_form() -> DiagonalForm:
    """Generic irrational 2D form with covolume 1."""
    return DiagonalForm((GOLDEN, 1.0 / GOLDEN))


# ============ CACHED TORI ============

@pytest.fixture(scope="session")
def square_spec() -> NormSpectrum:
    return enumerate_norms(DiagonalForm.parse("1,1"), 2000.0)


@pytest.fixture(scope="session")
def square_pert(square_spec):
    return solve_spectrum(square_spec, ScattererPhase(math.pi / 2), x_max=1000.0)


@pytest.fixture(scope="session")
def golden_spec() -> NormSpectrum:
    return enumerate_norms(DiagonalForm((GOLDEN, 1.0 / GOLDEN)), 2000.0)


@pytest.fixture(scope="session")
def golden_pert(golden_spec):
    return solve_spectrum(golden_spec, ScattererPhase(math.pi / 2), x_max=1000.0)


@pytest.fixture(scope="session")
def cubic_spec() -> NormSpectrum:
    return enumerate_norms(DiagonalForm.parse("1,1,1"), 600.0)


@pytest.fixture(scope="session")
def cubic_pert(cubic_spec):
    return solve_spectrum(cubic_spec, ScattererPhase(math.pi / 2), x_max=300.0)
