"""
Run configuration.

A plain key=value file (parsed with python-dotenv, never exported to the
process environment) supplies defaults; explicit command-line flags override
it. The resolved RunConfig is echoed into every report.
"""

import hashlib
import json
import math
import os
from typing import Any, Dict, List, Mapping, Optional

from dotenv import dotenv_values
from pydantic import BaseModel, Field, field_validator, model_validator

from app.errors import DomainError
from app.models.lattice import DEFAULT_MERGE_TOL, MAX_MERGE_TOL, DiagonalForm
from app.models.spectrum import TailModel
from app.services.lattice import DEFAULT_MEMORY_BUDGET
from app.services.secular import DEFAULT_EPS_EVAL, DEFAULT_TOL, MIN_EPS_EVAL, MIN_TOL
from app.services.trace import DEFAULT_QUAD_TOL


class RunConfig(BaseModel):
    """Every knob a command or the pipeline reads."""

    model_config = {"extra": "forbid"}

    command: Optional[str] = Field(default=None, description="Subcommand the config was resolved for")
    dim: int = Field(default=2, description="Torus dimension, 2 or 3")
    coeffs: str = Field(default="1,1", description="Diagonal form coefficients, comma separated")
    phi: float = Field(default=math.pi / 2, description="Scatterer phase in (-pi, pi)")
    cutoff: Optional[float] = Field(default=None, description="Enumeration cutoff (default 2 * x_max)")
    x_max: Optional[float] = Field(default=None, description="Largest norm paired with a root")
    stats_x: Optional[float] = Field(default=None, description="Analysis cutoff of the spacing report")
    tol: float = Field(default=DEFAULT_TOL, description="Root residual tolerance")
    merge_tol: float = Field(default=DEFAULT_MERGE_TOL, description="Relative merge tolerance of float norms")
    quad_tol: float = Field(default=DEFAULT_QUAD_TOL, description="Absolute quadrature tolerance")
    eps_eval: float = Field(default=DEFAULT_EPS_EVAL, description="Accuracy budget of the fast evaluator")
    tail: TailModel = Field(default=TailModel.ANALYTIC, description="Continuation of sums past the cutoff")
    beta: float = Field(default=0.1, description="Gaussian width of the trace check")
    betas: List[float] = Field(default_factory=lambda: [0.2, 0.1, 0.05], description="Heat-trace grid")
    sigma: Optional[float] = Field(default=None, description="Contour line; chosen automatically when unset")
    bins: int = Field(default=50, description="Histogram bins over [0, 5]")
    min_levels: int = Field(default=1000, description="Smallest sample accepted by the spacing report")
    workers: int = Field(default=1, description="Processes used for gap solves")
    seed: int = Field(default=0, description="Random seed of the greedy check")
    memory_budget: int = Field(default=DEFAULT_MEMORY_BUDGET, description="Enumeration memory budget in bytes")
    cache_dir: str = Field(default=".seba-cache", description="Directory of cached spectra")
    out_dir: str = Field(default="reports", description="Directory of pipeline reports")

    @model_validator(mode="before")
    @classmethod
    def infer_dim(cls, values: Any) -> Any:
        """A coefficient list without an explicit dim sets the dimension."""
        if isinstance(values, dict) and values.get("coeffs") and values.get("dim") is None:
            values = {**values, "dim": len(str(values["coeffs"]).split(","))}
        return values

    @field_validator("dim")
    @classmethod
    def check_dim(cls, v: int) -> int:
        if v not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        return v

    @field_validator("phi")
    @classmethod
    def check_phi(cls, v: float) -> float:
        if not -math.pi < v < math.pi:
            raise ValueError("phi must lie in (-pi, pi); phi = pi is the unperturbed Laplacian")
        return v

    @field_validator("tol")
    @classmethod
    def check_tol(cls, v: float) -> float:
        if not v >= MIN_TOL:
            raise ValueError(f"tol must be at least {MIN_TOL}")
        return v

    @field_validator("merge_tol")
    @classmethod
    def check_merge_tol(cls, v: float) -> float:
        if not 0.0 <= v <= MAX_MERGE_TOL:
            raise ValueError(f"merge_tol must lie in [0, {MAX_MERGE_TOL}]")
        return v

    @field_validator("eps_eval")
    @classmethod
    def check_eps_eval(cls, v: float) -> float:
        if not v >= MIN_EPS_EVAL:
            raise ValueError(f"eps_eval must be at least {MIN_EPS_EVAL}")
        return v

    @field_validator("quad_tol", "beta", "cutoff", "x_max", "stats_x", "sigma")
    @classmethod
    def check_positive(cls, v: Optional[float]) -> Optional[float]:
        if v is not None and not (math.isfinite(v) and v > 0):
            raise ValueError("must be finite and positive")
        return v

    @field_validator("betas", mode="before")
    @classmethod
    def split_betas(cls, v: Any) -> Any:
        if isinstance(v, str):
            return [float(tok) for tok in v.split(",") if tok.strip()]
        return v

    @field_validator("betas")
    @classmethod
    def check_betas(cls, v: List[float]) -> List[float]:
        if not v or any(not (math.isfinite(b) and b > 0) for b in v):
            raise ValueError("betas must be a non-empty list of positive numbers")
        return v

    @field_validator("workers", "bins", "min_levels")
    @classmethod
    def check_count(cls, v: int) -> int:
        if v < 1:
            raise ValueError("must be at least 1")
        return v

    @model_validator(mode="after")
    def check_form(self) -> "RunConfig":
        try:
            form = DiagonalForm.parse(self.coeffs)
        except DomainError as exc:
            raise ValueError(str(exc)) from exc
        if form.dim != self.dim:
            raise ValueError(f"coeffs '{self.coeffs}' describe a {form.dim}D form, dim is {self.dim}")
        return self

    @property
    def form(self) -> DiagonalForm:
        return DiagonalForm.parse(self.coeffs)

    @property
    def resolved_x_max(self) -> float:
        if self.x_max is not None:
            return self.x_max
        if self.cutoff is not None:
            return self.cutoff / 2.0
        raise DomainError("either x_max or cutoff must be configured")

    @property
    def resolved_cutoff(self) -> float:
        return self.cutoff if self.cutoff is not None else 2.0 * self.resolved_x_max

    def norms_params(self) -> Dict[str, Any]:
        """Parameters the norm enumeration depends on."""
        return {
            "dim": self.dim,
            "coeffs": self.form.label(),
            "cutoff": self.resolved_cutoff,
            "merge_tol": self.merge_tol,
        }

    def solve_params(self) -> Dict[str, Any]:
        """Parameters the perturbed spectrum depends on."""
        return {
            **self.norms_params(),
            "phi": self.phi,
            "tol": self.tol,
            "x_max": self.resolved_x_max,
            "tail": self.tail.value,
            "eps_eval": self.eps_eval,
        }

    def echo(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")


def params_hash(params: Mapping[str, Any]) -> str:
    """Stable digest of a parameter mapping."""
    return hashlib.sha256(json.dumps(params, sort_keys=True).encode()).hexdigest()


def read_config_file(path: str) -> Dict[str, str]:
    """
    Parse a key=value file into lower-case keys.

    Raises:
        FileNotFoundError: path does not exist
    """
    if not os.path.isfile(path):
        raise FileNotFoundError(f"config file not found: {path}")
    values = dotenv_values(path)
    return {key.strip().lower().replace("-", "_"): value for key, value in values.items() if value is not None}


def resolve_config(
    path: Optional[str] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> RunConfig:
    """
    Merge file values and flag overrides into a validated RunConfig.

    Args:
        path: Optional key=value config file
        overrides: Flag values; None means "not given on the command line"

    Returns:
        RunConfig

    Raises:
        pydantic.ValidationError: a value is outside its admissible range
    """
    values: Dict[str, Any] = read_config_file(path) if path else {}
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    return RunConfig(**values)
