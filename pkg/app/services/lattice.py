"""
Lattice enumeration for diagonal flat tori.

Handles:
1. Component bounds |v_i| <= sqrt(cutoff / c_i)
2. Slab-wise evaluation of the form over the integer box, first coordinate outermost
3. Exact integer keys over a common denominator when every coefficient is rational
4. Tolerant merging of floating norms (|n - n'| <= merge_tol * max(1, n))
5. Counting helpers: N(x), mean spacing, Weyl reference counts, brute-force oracle
"""

import logging
import math
from fractions import Fraction
from typing import List, Sequence, Tuple

import numpy as np

from app.errors import CapacityError, DomainError, RangeError
from app.models.lattice import DEFAULT_MERGE_TOL, MAX_MERGE_TOL, DiagonalForm, NormSpectrum

logger = logging.getLogger(__name__)

DEFAULT_MEMORY_BUDGET = 2 * 1024**3
BRUTE_FORCE_MAX_VISITS = 10**6

# bytes per grid point held while one slab is evaluated (value, key, mask)
_SLAB_BYTES = 24
# bytes per distinct norm kept between slabs (key and count)
_ENTRY_BYTES = 16


def component_bound(coeff: float, limit: float) -> int:
    """Largest integer v >= 0 with coeff * v^2 <= limit."""
    if limit < 0:
        return -1
    v = int(math.floor(math.sqrt(limit / coeff)))
    while coeff * (v + 1) * (v + 1) <= limit:
        v += 1
    while v > 0 and coeff * v * v > limit:
        v -= 1
    return v


def _exact_bound(coeff: int, limit: int) -> int:
    if limit < 0:
        return -1
    return math.isqrt(limit // coeff)


def estimate_memory(form: DiagonalForm, cutoff: float) -> int:
    """Peak bytes held by enumerate_norms for this form and cutoff."""
    sides = [2 * component_bound(c, cutoff) + 1 for c in form.coeffs]
    slab = math.prod(sides[1:])
    box = math.prod(sides)
    return _SLAB_BYTES * slab + _ENTRY_BYTES * box // 2 ** (form.dim - 1)


def _slab_grid(coeffs: Sequence, bounds: Sequence[int], base):
    """Form values base + sum c_i v_i^2 over the remaining coordinates, summed left to right."""
    grid = None
    for c, b in zip(coeffs, bounds):
        v = np.arange(-b, b + 1, dtype=np.int64)
        term = c * v * v
        if grid is None:
            grid = base + term
        else:
            grid = grid[..., None] + term
    return grid


def _merge_close(values: np.ndarray, counts: np.ndarray, tol: float) -> Tuple[np.ndarray, np.ndarray]:
    """Merge consecutive sorted values closer than tol * max(1, n); the smallest value represents a group."""
    if tol == 0.0 or values.size < 2:
        return values, counts
    breaks = np.diff(values) > tol * np.maximum(1.0, values[:-1])
    starts = np.flatnonzero(np.concatenate(([True], breaks)))
    return values[starts], np.add.reduceat(counts, starts)


def _combine(keys: List[np.ndarray], counts: List[np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    all_keys = np.concatenate(keys)
    all_counts = np.concatenate(counts)
    unique, inverse = np.unique(all_keys, return_inverse=True)
    merged = np.zeros(unique.size, dtype=np.int64)
    np.add.at(merged, inverse, all_counts)
    return unique, merged


def enumerate_norms(
    form: DiagonalForm,
    cutoff: float,
    merge_tol: float = DEFAULT_MERGE_TOL,
    memory_budget: int = DEFAULT_MEMORY_BUDGET,
) -> NormSpectrum:
    """
    Enumerate distinct form values q(v) <= cutoff with their multiplicities.

    Args:
        form: Diagonal form of the torus (dimension 2 or 3)
        cutoff: Largest norm to keep
        merge_tol: Relative tolerance identifying equal floating norms (ignored for exact forms)
        memory_budget: Bytes the enumeration may hold at once

    Returns:
        NormSpectrum: sorted norms, n_0 = 0 with multiplicity 1

    Raises:
        DomainError: cutoff <= 0 or merge_tol outside [0, 1e-6]
        CapacityError: the memory estimate exceeds memory_budget
    """
    if not (math.isfinite(cutoff) and cutoff > 0):
        raise DomainError(f"cutoff must be positive, got {cutoff!r}")
    if not 0.0 <= merge_tol <= MAX_MERGE_TOL:
        raise DomainError(f"merge_tol must lie in [0, {MAX_MERGE_TOL}], got {merge_tol!r}")

    required = estimate_memory(form, cutoff)
    if required > memory_budget:
        raise CapacityError(
            f"enumeration up to {cutoff:g} needs about {required} bytes; budget is {memory_budget}",
            required=required,
        )

    keys: List[np.ndarray] = []
    counts: List[np.ndarray] = []

    if form.is_exact:
        den = form.common_denominator
        coeffs = form.integer_coeffs
        limit = math.floor(Fraction(cutoff) * den)
        b0 = _exact_bound(coeffs[0], limit)
        for v0 in range(-b0, b0 + 1):
            base = coeffs[0] * v0 * v0
            bounds = [_exact_bound(c, limit - base) for c in coeffs[1:]]
            grid = _slab_grid(coeffs[1:], bounds, base)
            slab_keys, slab_counts = np.unique(grid[grid <= limit], return_counts=True)
            keys.append(slab_keys)
            counts.append(slab_counts.astype(np.int64))
        numerators, mults = _combine(keys, counts)
        norms = numerators.astype(np.float64) / den
        spectrum = NormSpectrum(
            norms, mults, cutoff, form=form, merge_tol=0.0, numerators=numerators, denominator=den
        )
    else:
        coeffs = form.coeffs
        b0 = component_bound(coeffs[0], cutoff)
        for v0 in range(-b0, b0 + 1):
            base = coeffs[0] * v0 * v0
            bounds = [component_bound(c, cutoff - base) + 1 for c in coeffs[1:]]
            grid = _slab_grid(coeffs[1:], bounds, base)
            slab_values, slab_counts = np.unique(grid[grid <= cutoff], return_counts=True)
            keys.append(slab_values)
            counts.append(slab_counts.astype(np.int64))
        values, mults = _combine(keys, counts)
        norms, mults = _merge_close(values, mults, merge_tol)
        spectrum = NormSpectrum(norms, mults, cutoff, form=form, merge_tol=merge_tol)

    logger.info(
        "✅ Enumerated %d distinct norms (%d vectors) for %r up to %g",
        len(spectrum), spectrum.vector_count(), form, cutoff,
    )
    return spectrum


def brute_force_count(form: DiagonalForm, x: float, max_visits: int = BRUTE_FORCE_MAX_VISITS) -> int:
    """Count integer vectors with q(v) <= x by evaluating the form on the whole box."""
    if x < 0:
        raise DomainError(f"x must be non-negative, got {x!r}")
    if form.is_exact:
        den = form.common_denominator
        coeffs = form.integer_coeffs
        limit = math.floor(Fraction(x) * den)
        bounds = [_exact_bound(c, limit) for c in coeffs]
    else:
        coeffs = form.coeffs
        limit = x
        bounds = [component_bound(c, x) for c in coeffs]
    visits = math.prod(2 * b + 1 for b in bounds)
    if visits > max_visits:
        raise CapacityError(f"brute force would visit {visits} vectors (limit {max_visits})", required=visits)
    axes = np.meshgrid(*(np.arange(-b, b + 1, dtype=np.int64) for b in bounds), indexing="ij")
    q = coeffs[0] * axes[0] * axes[0]
    for c, g in zip(coeffs[1:], axes[1:]):
        q = q + c * g * g
    return int(np.count_nonzero(q <= limit))


def norm_count(spec: NormSpectrum, x: float) -> int:
    """N(x) = #{j : n_j <= x}, counting n_0 = 0."""
    if x < 0:
        raise DomainError(f"x must be non-negative, got {x!r}")
    if x > spec.cutoff:
        raise RangeError(f"x={x:g} exceeds the enumeration cutoff {spec.cutoff:g}", required=x)
    return int(np.searchsorted(spec.norms, x, side="right"))


def mean_spacing(spec: NormSpectrum, x: float) -> float:
    """Finite-sum mean spacing (1/N(x)) * sum_{n_j <= x} (n_{j+1} - n_j)."""
    if len(spec) < 2:
        raise DomainError("mean spacing needs at least two norms")
    count = norm_count(spec, x)
    if count >= len(spec):
        raise RangeError(f"the spacing after the last norm <= {x:g} lies beyond the cutoff")
    # the spacings telescope to n_{N(x)} - n_0
    return float(spec.norms[count]) / count


def weyl_count(form: DiagonalForm, x: float) -> float:
    """Leading-order count of lattice vectors with q(v) <= x."""
    if form.dim == 2:
        return math.pi * x / form.covolume
    return 4.0 * math.pi / 3.0 * x**1.5 / form.covolume


def periodization_spectrum(spec: NormSpectrum, cutoff: float) -> NormSpectrum:
    """Squared lengths of the image lattice 2*pi*L0 up to cutoff."""
    if spec.form is None:
        raise DomainError("the image lattice needs the form of the torus")
    return enumerate_norms(spec.form.periodization(), cutoff, merge_tol=spec.merge_tol or DEFAULT_MERGE_TOL)
