"""
Report schemas written as JSON/CSV by the CLI and the pipeline.
"""

from typing import Any, Dict, List, NamedTuple, Optional

from pydantic import BaseModel, Field

REPORT_SCHEMA = "seba-report v1"


class ErrorBudget(BaseModel):
    """Per-source error estimates of a trace check."""

    quad: float = Field(description="Quadrature error estimate summed over all integrals")
    trunc_m: float = Field(description="Bound on dropped lattice terms in the diffractive sums")
    trunc_s: float = Field(description="Bound on the integrand mass beyond |s| = S")
    spectral: float = Field(description="Root tolerance and x_max truncation in the spectral sum")

    @property
    def combined(self) -> float:
        return self.quad + self.trunc_m + self.trunc_s + self.spectral


class TraceCheckReport(BaseModel):
    """Both sides of a trace identity for one Gaussian test function."""

    schema_version: str = Field(default=REPORT_SCHEMA, alias="schema")
    dim: int
    phi: float
    beta: float
    sigma: float
    lhs: float
    smooth: float = Field(description="2D smooth term; 1/2 h(0) in 3D")
    diffractive: float = Field(description="Contour term carrying the lattice sum")
    rhs: float
    abs_error: float
    budget: ErrorBudget
    smooth_reference: Optional[float] = Field(
        default=None, description="Real-line evaluation of the 2D smooth term"
    )
    condition_max: float = Field(description="Largest admissibility ratio seen on quadrature nodes")
    config: Optional[Dict[str, Any]] = None

    model_config = {"populate_by_name": True}

    def holds(self, rel: float = 1e-4) -> bool:
        return self.abs_error <= rel * max(1.0, abs(self.lhs))


class Histogram(BaseModel):
    edges: List[float]
    densities: List[float]

    def integral(self) -> float:
        return sum(d * (b - a) for d, a, b in zip(self.densities, self.edges[:-1], self.edges[1:]))


class SpacingReport(BaseModel):
    """Spacing statistics of the norms and of the perturbed levels up to x."""

    schema_version: str = Field(default=REPORT_SCHEMA, alias="schema")
    x: float
    N: int = Field(description="Number of norms n_j <= x, counting n_0 = 0")
    mean_delta: float = Field(description="Finite-sum mean spacing of the norms")
    mean_delta_asymptotic: float = Field(description="x / N(x)")
    mean_delta_perturbed: float = Field(
        description="Mean of lambda_{j+1} - lambda_j over the N - 1 spacings from lambda_0 to lambda_{N-1}"
    )
    mean_d: float
    ratio: float = Field(description="<d>_x / <delta>_x")
    ratio_chain: float = Field(description="A(x) / x")
    a_of_x: float = Field(description="Sum of d_j over lambda_j <= x")
    ks_poisson: float = Field(description="KS distance of normalized norm spacings to 1 - exp(-s)")
    ks_poisson_perturbed: float
    ks_between: float = Field(description="Sup distance between the two empirical spacing CDFs")
    clumped_fraction: float = Field(description="Fraction of d_j / <delta> above 1/2")
    norm_histogram: Histogram
    perturbed_histogram: Histogram
    normalized_spacings: List[float] = Field(default_factory=list, exclude=True)
    # N - 1 values; the first is lambda_1 - lambda_0, paired with delta_0 = n_1 - n_0
    perturbed_spacings: List[float] = Field(default_factory=list, exclude=True)
    config: Optional[Dict[str, Any]] = None

    model_config = {"populate_by_name": True}


class HeatTracePoint(BaseModel):
    """Heat-trace sums at one beta."""

    beta: float
    a_tilde: float = Field(description="sum_j d_j exp(-beta lambda_j)")
    difference_form: float = Field(description="(1/beta) sum_j (exp(-beta lambda_j) - exp(-beta n_j))")
    discrepancy: float
    scaled_2d: float = Field(description="beta * a_tilde * log(1/beta)")
    scaled_3d: float = Field(description="beta * a_tilde")

    def to_row(self) -> List[float]:
        return [self.beta, self.a_tilde, self.difference_form, self.discrepancy, self.scaled_2d, self.scaled_3d]


HEAT_COLUMNS = ["beta", "a_tilde", "difference_form", "discrepancy", "scaled_2d", "scaled_3d"]


class GreedyApproximation(NamedTuple):
    """Three floor steps approximating t by a value of a 3D diagonal form."""

    m: int
    n: int
    k: int
    s1: float
    s2: float
    final: float


class GreedyCheck(BaseModel):
    """Outcome of the randomized chained-bound check."""

    samples: int
    seed: int
    violations_s1: int
    violations_s2: int
    violations_final: int
    max_ratio_s1: float = Field(description="max s1 / (2 sqrt(a t))")
    max_ratio_s2: float
    max_ratio_final: float

    @property
    def violations(self) -> int:
        return self.violations_s1 + self.violations_s2 + self.violations_final
