"""
Lattice-side domain types: the diagonal form of a flat torus and the
unperturbed spectrum it generates.
"""

import hashlib
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Iterable, Optional, Tuple

import numpy as np

from app.errors import ConsistencyError, DomainError

DEFAULT_MERGE_TOL = 1e-10
MAX_MERGE_TOL = 1e-6


def _parse_coefficient(token: str):
    """Integers and p/q tokens are exact rationals; anything else is a float."""
    token = token.strip()
    if not token:
        raise DomainError("empty coefficient")
    body = token.lstrip("+")
    if body.isdigit() or ("/" in body and all(part.strip().isdigit() for part in body.split("/", 1))):
        return Fraction(body)
    try:
        return float(token)
    except ValueError as exc:
        raise DomainError(f"coefficient '{token}' is not a number") from exc


@dataclass(frozen=True)
class DiagonalForm:
    """
    Positive diagonal quadratic form q(v) = sum c_i v_i^2.

    Its values on integer vectors are the Laplace eigenvalues of the torus.
    When every coefficient is an exact rational the form keeps the
    Fractions in `exact` and enumeration runs in integer arithmetic.
    """

    coeffs: Tuple[float, ...]
    exact: Optional[Tuple[Fraction, ...]] = None

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coeffs)
        if len(coeffs) not in (2, 3):
            raise DomainError(f"dimension must be 2 or 3, got {len(coeffs)}")
        if any(not math.isfinite(c) or c <= 0 for c in coeffs):
            raise DomainError(f"coefficients must be finite and positive, got {coeffs}")
        object.__setattr__(self, "coeffs", coeffs)
        if self.exact is not None:
            exact = tuple(Fraction(c) for c in self.exact)
            if len(exact) != len(coeffs) or any(c <= 0 for c in exact):
                raise DomainError("exact coefficients must match the float coefficients")
            object.__setattr__(self, "exact", exact)

    @classmethod
    def parse(cls, text: str) -> "DiagonalForm":
        """Parse '1,1' or '1/2,3,5' or '1.4142135623730951,0.7071067811865476'."""
        values = [_parse_coefficient(tok) for tok in text.split(",")]
        if all(isinstance(v, Fraction) for v in values):
            return cls.from_rationals(values)
        return cls(tuple(float(v) for v in values))

    @classmethod
    def from_rationals(cls, values: Iterable) -> "DiagonalForm":
        exact = tuple(Fraction(v) for v in values)
        return cls(tuple(float(v) for v in exact), exact)

    @property
    def dim(self) -> int:
        return len(self.coeffs)

    @property
    def is_exact(self) -> bool:
        return self.exact is not None

    @property
    def covolume(self) -> float:
        """Dual covolume V = sqrt(prod c_i)."""
        return math.sqrt(math.prod(self.coeffs))

    @property
    def torus_volume(self) -> float:
        """Volume of R^d / 2*pi*L0, which is (2*pi)^d / V."""
        return (2.0 * math.pi) ** self.dim / self.covolume

    @property
    def common_denominator(self) -> int:
        if self.exact is None:
            raise DomainError("form has floating coefficients")
        return math.lcm(*(c.denominator for c in self.exact))

    @property
    def integer_coeffs(self) -> Tuple[int, ...]:
        """Coefficients scaled by the common denominator."""
        den = self.common_denominator
        return tuple(int(c * den) for c in self.exact)

    def periodization(self) -> "DiagonalForm":
        """Form whose values are squared lengths of the image lattice 2*pi*L0."""
        return DiagonalForm(tuple(4.0 * math.pi**2 / c for c in self.coeffs))

    def label(self) -> str:
        """Round-trippable coefficient list used in file headers."""
        if self.exact is not None:
            return ",".join(str(c) for c in self.exact)
        return ",".join(format(c, ".17g") for c in self.coeffs)

    def __repr__(self):
        return f"<DiagonalForm(dim={self.dim}, coeffs={self.label()})>"


@dataclass(frozen=True, eq=False)
class NormSpectrum:
    """
    Sorted distinct norms n_0 = 0 < n_1 < ... <= cutoff with multiplicities.

    Immutable after construction; the arrays are flagged read-only so the
    spectrum can be shared between workers.
    """

    norms: np.ndarray
    mults: np.ndarray
    cutoff: float
    form: Optional[DiagonalForm] = None
    merge_tol: float = DEFAULT_MERGE_TOL
    numerators: Optional[np.ndarray] = None
    denominator: Optional[int] = None

    def __post_init__(self):
        norms = np.array(self.norms, dtype=np.float64)
        mults = np.array(self.mults, dtype=np.int64)
        if norms.ndim != 1 or norms.shape != mults.shape or norms.size == 0:
            raise ConsistencyError("norms and multiplicities must be equal-length 1D arrays")
        if norms[0] != 0.0 or mults[0] != 1:
            raise ConsistencyError("spectrum must start with n_0 = 0 of multiplicity 1")
        if np.any(np.diff(norms) <= 0):
            raise ConsistencyError("norms must be strictly increasing")
        if np.any(mults <= 0):
            raise ConsistencyError("multiplicities must be positive")
        if not self.cutoff > 0 or norms[-1] > self.cutoff:
            raise ConsistencyError(f"cutoff {self.cutoff!r} must be positive and cover every norm")
        norms.setflags(write=False)
        mults.setflags(write=False)
        object.__setattr__(self, "norms", norms)
        object.__setattr__(self, "mults", mults)
        object.__setattr__(self, "cutoff", float(self.cutoff))
        if self.numerators is not None:
            nums = np.array(self.numerators, dtype=np.int64)
            nums.setflags(write=False)
            object.__setattr__(self, "numerators", nums)

    @classmethod
    def from_mapping(
        cls,
        mapping: Dict[float, int],
        cutoff: Optional[float] = None,
        form: Optional[DiagonalForm] = None,
    ) -> "NormSpectrum":
        """Build a spectrum from {norm: multiplicity}; the origin is added when absent."""
        items = dict(mapping)
        items.setdefault(0.0, 1)
        keys = sorted(items)
        norms = np.array(keys, dtype=np.float64)
        mults = np.array([items[k] for k in keys], dtype=np.int64)
        if cutoff is None:
            cutoff = max(float(norms[-1]), 1.0)
        return cls(norms, mults, cutoff, form=form)

    def __len__(self):
        return int(self.norms.size)

    @property
    def dim(self) -> Optional[int]:
        return None if self.form is None else self.form.dim

    @property
    def nonzero(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.norms[1:], self.mults[1:]

    def vector_count(self, x: Optional[float] = None) -> int:
        """Number of lattice vectors with q(v) <= x (all stored vectors by default)."""
        if x is None:
            return int(self.mults.sum())
        idx = int(np.searchsorted(self.norms, x, side="right"))
        return int(self.mults[:idx].sum())

    def check_invariants(self) -> None:
        """Lattice-only invariants; toy spectra built by hand may violate them."""
        if np.any(self.mults[1:] % 2 != 0):
            bad = int(np.flatnonzero(self.mults[1:] % 2 != 0)[0]) + 1
            raise ConsistencyError(f"odd multiplicity at n_{bad}={self.norms[bad]!r}")
        if self.norms.size > 1 and self.merge_tol > 0 and self.numerators is None:
            gaps = np.diff(self.norms)
            floor = self.merge_tol * np.maximum(1.0, self.norms[:-1])
            if np.any(gaps <= floor):
                raise ConsistencyError("two stored norms lie within the merge tolerance")

    def fingerprint(self) -> str:
        """Content hash identifying this spectrum."""
        digest = hashlib.sha256()
        digest.update(self.norms.tobytes())
        digest.update(self.mults.tobytes())
        digest.update(repr(self.cutoff).encode())
        if self.form is not None:
            digest.update(self.form.label().encode())
        return digest.hexdigest()

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "coeffs": None if self.form is None else self.form.label(),
            "cutoff": self.cutoff,
            "merge_tol": self.merge_tol,
            "distinct_norms": len(self),
            "vectors": self.vector_count(),
        }

    def __repr__(self):
        return f"<NormSpectrum(form={self.form!r}, cutoff={self.cutoff}, norms={len(self)})>"
