"""
Domain types for the scatterer toolkit.

This package contains:
- DiagonalForm / NormSpectrum: the torus and its unperturbed spectrum
- ScattererPhase / PerturbedSpectrum: the scatterer and its solved spectrum
- Report schemas: trace checks, spacing statistics, heat-trace points
"""

from app.models.lattice import DEFAULT_MERGE_TOL, DiagonalForm, NormSpectrum
from app.models.reports import (
    ErrorBudget,
    GreedyApproximation,
    GreedyCheck,
    HeatTracePoint,
    Histogram,
    SpacingReport,
    TraceCheckReport,
)
from app.models.spectrum import GaussianTest, PerturbedSpectrum, ScattererPhase, TailModel

__all__ = [
    "DEFAULT_MERGE_TOL",
    "DiagonalForm",
    "NormSpectrum",
    "ScattererPhase",
    "PerturbedSpectrum",
    "TailModel",
    "GaussianTest",
    "ErrorBudget",
    "TraceCheckReport",
    "Histogram",
    "SpacingReport",
    "HeatTracePoint",
    "GreedyApproximation",
    "GreedyCheck",
]
