"""
Spacing statistics, heat-trace sums and the 3D greedy construction.

Index convention: d_j = n_j - lambda_j^phi for j >= 0 (d_0 = -lambda_0^phi),
delta_j = n_{j+1} - n_j, and averages up to x run over the N(x) indices with
n_j <= x.
"""

import logging
import math
from typing import Any, Dict, List, NamedTuple, Optional, Sequence

import numpy as np
from scipy import stats as sstats

from app.errors import DomainError, RangeError, SampleSizeError
from app.models.lattice import DiagonalForm, NormSpectrum
from app.models.reports import (
    GreedyApproximation,
    GreedyCheck,
    HeatTracePoint,
    Histogram,
    SpacingReport,
)
from app.models.spectrum import PerturbedSpectrum
from app.services.lattice import component_bound, norm_count
from app.services.secular import check_alignment

logger = logging.getLogger(__name__)

DEFAULT_BINS = 50
DEFAULT_MIN_LEVELS = 1000
HISTOGRAM_RANGE = (0.0, 5.0)
HEAT_RANGE_FACTOR = 40.0
CLUMP_THRESHOLD = 0.5


class GapSequence(NamedTuple):
    d: np.ndarray
    delta: np.ndarray
    A: np.ndarray


class BlockMaximum(NamedTuple):
    lower: float
    upper: float
    count: int
    max_ratio: float


def gap_sequence(spec: NormSpectrum, pert: PerturbedSpectrum, x: float) -> GapSequence:
    """
    Gaps d_j, spacings delta_j for n_j <= x, and partial sums of A(x) = sum_{lambda_j <= x} d_j.

    Raises:
        RangeError: x beyond the solved range or the next norm missing
        ConsistencyError: pert was solved against other norms
    """
    if x < 0:
        raise DomainError(f"x must be non-negative, got {x!r}")
    if x > pert.last_norm:
        raise RangeError(f"x={x:g} exceeds the solved range {pert.last_norm:g}", required=x)
    check_alignment(spec, pert)
    count = norm_count(spec, x)
    if count >= len(spec):
        raise RangeError(f"delta_j for n_j <= {x:g} needs a norm beyond the cutoff", required=2.0 * x)
    d = np.array(pert.gaps[:count])
    delta = np.diff(spec.norms[: count + 1])
    levels = int(np.searchsorted(pert.lambdas, x, side="right"))
    A = np.cumsum(pert.gaps[:levels])
    return GapSequence(d=d, delta=delta, A=A)


def analysis_cutoff(pert: PerturbedSpectrum, x: Optional[float] = None) -> float:
    """Requested x clipped to the last norm with a solved partner (the whole solved range by default)."""
    if x is None:
        return pert.last_norm
    if x > pert.last_norm:
        logger.warning(
            "⚠️ x=%g lies beyond the last solved norm; statistics use x=%g instead", x, pert.last_norm
        )
        return pert.last_norm
    return x


def mean_gap_ratio(spec: NormSpectrum, pert: PerturbedSpectrum, x: float) -> float:
    """<d_j>_x / <delta_j>_x through A(x) / sum_{n_j <= x} delta_j."""
    seq = gap_sequence(spec, pert, x)
    return float(seq.A[-1] / math.fsum(seq.delta))


def clumping_fraction(
    spec: NormSpectrum, pert: PerturbedSpectrum, x: float, threshold: float = CLUMP_THRESHOLD
) -> float:
    """Fraction of j with n_j <= x whose gap d_j exceeds threshold * <delta>_x."""
    seq = gap_sequence(spec, pert, x)
    mean_delta = float(seq.delta.mean())
    return float(np.count_nonzero(seq.d / mean_delta > threshold)) / seq.d.size


def _histogram(values: np.ndarray, bins: int) -> Histogram:
    # spacings beyond the support are pooled into the last bin
    clipped = np.minimum(values, HISTOGRAM_RANGE[1])
    densities, edges = np.histogram(clipped, bins=bins, range=HISTOGRAM_RANGE, density=True)
    return Histogram(edges=edges.tolist(), densities=densities.tolist())


def spacing_report(
    spec: NormSpectrum,
    pert: PerturbedSpectrum,
    x: float,
    bins: int = DEFAULT_BINS,
    min_levels: int = DEFAULT_MIN_LEVELS,
    config: Optional[Dict[str, Any]] = None,
) -> SpacingReport:
    """
    Spacing statistics of norms and perturbed levels up to x.

    Args:
        spec: Unperturbed spectrum
        pert: Perturbed spectrum solved against spec
        x: Analysis cutoff
        bins: Equal histogram bins over [0, 5]
        min_levels: Smallest N(x) accepted
        config: Configuration echoed into the report

    Returns:
        SpacingReport

    Raises:
        SampleSizeError: N(x) < min_levels
    """
    if bins < 1:
        raise DomainError(f"bins must be positive, got {bins!r}")
    seq = gap_sequence(spec, pert, x)
    count = seq.d.size
    if count < min_levels:
        raise SampleSizeError(f"N({x:g}) = {count} levels, at least {min_levels} are needed")
    mean_delta = float(seq.delta.mean())
    normalized = seq.delta / mean_delta
    # spacings between the perturbed levels with n_j <= x
    perturbed = np.diff(pert.lambdas[:count])
    mean_perturbed = float(perturbed.mean())
    normalized_perturbed = perturbed / mean_perturbed
    mean_d = float(seq.d.mean())
    a_of_x = float(seq.A[-1])

    report = SpacingReport(
        x=x,
        N=count,
        mean_delta=mean_delta,
        mean_delta_asymptotic=x / count,
        mean_delta_perturbed=mean_perturbed,
        mean_d=mean_d,
        ratio=mean_d / mean_delta,
        ratio_chain=a_of_x / x if x > 0 else 0.0,
        a_of_x=a_of_x,
        ks_poisson=float(sstats.kstest(normalized, "expon").statistic),
        ks_poisson_perturbed=float(sstats.kstest(normalized_perturbed, "expon").statistic),
        ks_between=float(sstats.ks_2samp(normalized, normalized_perturbed).statistic),
        clumped_fraction=float(np.count_nonzero(seq.d / mean_delta > CLUMP_THRESHOLD)) / count,
        norm_histogram=_histogram(normalized, bins),
        perturbed_histogram=_histogram(normalized_perturbed, bins),
        normalized_spacings=normalized.tolist(),
        perturbed_spacings=normalized_perturbed.tolist(),
        config=config,
    )
    logger.info(
        "✅ Spacing report x=%g: N=%d ratio=%.4f ks_poisson=%.4f", x, count, report.ratio, report.ks_poisson
    )
    return report


def heat_sums(spec: NormSpectrum, pert: PerturbedSpectrum, beta: float) -> HeatTracePoint:
    """
    A_tilde = sum_j d_j exp(-beta lambda_j) and (1/beta) sum_j {exp(-beta lambda_j) - exp(-beta n_j)}.

    Raises:
        RangeError: pert.x_max < 40 / beta
    """
    if not (math.isfinite(beta) and beta > 0):
        raise DomainError(f"beta must be positive, got {beta!r}")
    required = HEAT_RANGE_FACTOR / beta
    if pert.x_max < required:
        raise RangeError(
            f"spectra reach {pert.x_max:g}; beta={beta:g} needs x_max >= {required:g}", required=required
        )
    check_alignment(spec, pert)
    weights = np.exp(-beta * pert.lambdas)
    a_tilde = math.fsum(pert.gaps * weights)
    difference = math.fsum(-weights * np.expm1(-beta * pert.gaps)) / beta
    return HeatTracePoint(
        beta=beta,
        a_tilde=a_tilde,
        difference_form=difference,
        discrepancy=a_tilde - difference,
        scaled_2d=beta * a_tilde * math.log(1.0 / beta),
        scaled_3d=beta * a_tilde,
    )


def heat_sweep(spec: NormSpectrum, pert: PerturbedSpectrum, betas: Sequence[float]) -> List[HeatTracePoint]:
    points = [heat_sums(spec, pert, beta) for beta in betas]
    logger.info("✅ Heat sums at %d values of beta", len(points))
    return points


def gap_bound_profile(
    spec: NormSpectrum, pert: PerturbedSpectrum, exponent: float, x: Optional[float] = None
) -> List[BlockMaximum]:
    """Running maxima of d_j / n_j^exponent over dyadic blocks [2^k, 2^(k+1)) of n_j."""
    check_alignment(spec, pert)
    norms = spec.norms[1 : len(pert)]
    gaps = pert.gaps[1:]
    if x is not None:
        keep = norms <= x
        norms, gaps = norms[keep], gaps[keep]
    if norms.size == 0:
        return []
    ratios = gaps / norms**exponent
    blocks = np.floor(np.log2(norms)).astype(np.int64)
    profile = []
    for k in np.unique(blocks):
        mask = blocks == k
        profile.append(
            BlockMaximum(
                lower=float(2.0**k), upper=float(2.0 ** (k + 1)),
                count=int(mask.sum()), max_ratio=float(ratios[mask].max()),
            )
        )
    return profile


# ============ GREEDY 3D ============

def greedy_approx_3d(form: DiagonalForm, t: float) -> GreedyApproximation:
    """
    Three floor steps approximating t from below by a*m^2 + b*n^2 + c*k^2.

    m = floor(sqrt(t/a)), s1 = t - a m^2; n = floor(sqrt(s1/b)), s2 = s1 - b n^2;
    k = floor(sqrt(s2/c)), final = s2 - c k^2.
    """
    if form.dim != 3:
        raise DomainError(f"the greedy construction needs a 3D form, got dim={form.dim}")
    if not (math.isfinite(t) and t >= 0):
        raise DomainError(f"t must be finite and non-negative, got {t!r}")
    a, b, c = form.coeffs
    m = component_bound(a, t)
    s1 = t - a * m * m
    n = component_bound(b, s1)
    s2 = s1 - b * n * n
    k = component_bound(c, s2)
    final = s2 - c * k * k
    return GreedyApproximation(m=m, n=n, k=k, s1=s1, s2=s2, final=final)


def _floor_step(coeff: np.ndarray, target: np.ndarray) -> np.ndarray:
    v = np.floor(np.sqrt(target / coeff))
    v -= coeff * v * v > target
    v += coeff * (v + 1.0) * (v + 1.0) <= target
    return target - coeff * v * v


def _ratio(value: np.ndarray, bound: np.ndarray) -> float:
    out = np.zeros_like(value)
    np.divide(value, bound, out=out, where=bound > 0)
    return float(out.max()) if out.size else 0.0


def greedy_bounds_check(samples: int, seed: int, chunk: int = 1 << 18) -> GreedyCheck:
    """
    Count violations of s1 <= 2 sqrt(a t), s2 <= 2 sqrt(b s1), final <= 2 sqrt(c s2)
    for random coefficients in [0.5, 2] and targets t in [1, 1e8].
    """
    if samples < 1:
        raise DomainError(f"samples must be positive, got {samples!r}")
    rng = np.random.default_rng(seed)
    violations = np.zeros(3, dtype=np.int64)
    worst = np.zeros(3)
    done = 0
    while done < samples:
        size = min(chunk, samples - done)
        coeffs = rng.uniform(0.5, 2.0, size=(3, size))
        t = rng.uniform(1.0, 1e8, size=size)
        s1 = _floor_step(coeffs[0], t)
        s2 = _floor_step(coeffs[1], s1)
        final = _floor_step(coeffs[2], s2)
        bounds = (
            2.0 * np.sqrt(coeffs[0] * t),
            2.0 * np.sqrt(coeffs[1] * s1),
            2.0 * np.sqrt(coeffs[2] * s2),
        )
        for i, (value, bound) in enumerate(zip((s1, s2, final), bounds)):
            violations[i] += int(np.count_nonzero(value > bound))
            worst[i] = max(worst[i], _ratio(value, bound))
        done += size
    check = GreedyCheck(
        samples=samples,
        seed=seed,
        violations_s1=int(violations[0]),
        violations_s2=int(violations[1]),
        violations_final=int(violations[2]),
        max_ratio_s1=float(worst[0]),
        max_ratio_s2=float(worst[1]),
        max_ratio_final=float(worst[2]),
    )
    marker = "✅" if check.violations == 0 else "❌"
    logger.info("%s Greedy bounds: %d samples, %d violations", marker, samples, check.violations)
    return check
