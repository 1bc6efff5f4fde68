"""
Perturbation-side domain types: the scatterer phase, the tail model switch,
the Gaussian test function and the solved perturbed spectrum.
"""

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from app.errors import ConsistencyError, DomainError


class TailModel(str, enum.Enum):
    """How lattice sums are continued beyond the enumeration cutoff."""

    ANALYTIC = "analytic"
    NONE = "none"


@dataclass(frozen=True)
class ScattererPhase:
    """Self-adjoint extension phase phi in (-pi, pi); phi = pi is the plain Laplacian."""

    phi: float

    def __post_init__(self):
        phi = float(self.phi)
        if not math.isfinite(phi):
            raise DomainError(f"phase must be finite, got {phi!r}")
        if phi == math.pi:
            raise DomainError("phi = pi is the unperturbed Laplacian; there is no scatterer to solve for")
        if not -math.pi < phi < math.pi:
            raise DomainError(f"phase must lie in (-pi, pi), got {phi!r}")
        object.__setattr__(self, "phi", phi)

    @property
    def tan_half(self) -> float:
        return math.tan(self.phi / 2.0)

    def rhs(self, c0: float) -> float:
        """Right-hand side c0 * tan(phi/2) of the secular equation."""
        return c0 * self.tan_half


@dataclass(frozen=True)
class GaussianTest:
    """h(rho) = exp(-beta rho^2); h(sqrt(n)) = exp(-beta n)."""

    beta: float

    def __post_init__(self):
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise DomainError(f"beta must be positive, got {self.beta!r}")

    def h(self, rho):
        return np.exp(-self.beta * rho * rho)

    def h_prime(self, rho):
        return -2.0 * self.beta * rho * np.exp(-self.beta * rho * rho)

    @property
    def required_xmax(self) -> float:
        """Spectral range where exp(-beta x) drops below 1e-16."""
        return 37.0 / self.beta


@dataclass(frozen=True, eq=False)
class PerturbedSpectrum:
    """
    Ground state lambda_0 < 0 and one root per gap, lambda_{j+1} in (n_j, n_{j+1}).

    `gaps[j] = n_j - lambda_j`, so `lambdas + gaps` reproduces the norms the
    spectrum was solved against.
    """

    phase: ScattererPhase
    rhs: float
    tol: float
    x_max: float
    lambdas: np.ndarray
    residuals: np.ndarray
    gaps: np.ndarray
    floors: Optional[np.ndarray] = None

    def __post_init__(self):
        lambdas = np.array(self.lambdas, dtype=np.float64)
        residuals = np.array(self.residuals, dtype=np.float64)
        gaps = np.array(self.gaps, dtype=np.float64)
        if lambdas.ndim != 1 or lambdas.shape != residuals.shape or lambdas.shape != gaps.shape:
            raise ConsistencyError("lambdas, residuals and gaps must be equal-length 1D arrays")
        if lambdas.size == 0:
            raise ConsistencyError("a perturbed spectrum holds at least the ground state")
        for arr in (lambdas, residuals, gaps):
            arr.setflags(write=False)
        object.__setattr__(self, "lambdas", lambdas)
        object.__setattr__(self, "residuals", residuals)
        object.__setattr__(self, "gaps", gaps)
        if self.floors is not None:
            floors = np.array(self.floors, dtype=np.float64)
            floors.setflags(write=False)
            object.__setattr__(self, "floors", floors)

    def __len__(self):
        return int(self.lambdas.size)

    @property
    def ground_state(self) -> float:
        return float(self.lambdas[0])

    @property
    def norms(self) -> np.ndarray:
        """Norms reconstructed from lambda_j + d_j."""
        return self.lambdas + self.gaps

    @property
    def last_norm(self) -> float:
        """Largest norm whose perturbed partner is known."""
        return float(self.norms[-1])

    def residual_bounds(self) -> np.ndarray:
        """Accepted residual per root: tol*max(1,|rhs|) plus the rounding floor of the evaluation."""
        bound = self.tol * max(1.0, abs(self.rhs))
        if self.floors is None:
            return np.full(self.lambdas.shape, bound)
        return bound + self.floors

    def to_dict(self) -> dict:
        return {
            "phi": self.phase.phi,
            "rhs": self.rhs,
            "tol": self.tol,
            "x_max": self.x_max,
            "levels": len(self),
            "ground_state": self.ground_state,
        }

    def __repr__(self):
        return f"<PerturbedSpectrum(phi={self.phase.phi}, levels={len(self)}, x_max={self.x_max})>"
