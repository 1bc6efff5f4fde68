"""
Both sides of the exact trace identities for Gaussian test functions.

Handles:
1. Complex K0 and the lattice sums over the image lattice 2*pi*L0
2. The constants c1 and c(phi), and selection of an admissible contour line
3. The spectral side sum_j {h(rho_j^phi) - h(rho_j)}
4. The contour side on rho = s - i*sigma by adaptive quadrature, in 2D and 3D
5. TraceCheckReport assembly with a per-source error budget
"""

import cmath
import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Any, Callable, Dict, NamedTuple, Optional, Tuple

import numpy as np
from scipy import integrate, special

from app.errors import AdmissibilityError, ConsistencyError, DomainError, QuadratureError, RangeError
from app.models.lattice import DEFAULT_MERGE_TOL, NormSpectrum
from app.models.reports import ErrorBudget, TraceCheckReport
from app.models.spectrum import GaussianTest, PerturbedSpectrum, ScattererPhase, TailModel
from app.services.lattice import enumerate_norms
from app.services.secular import c0 as secular_c0
from app.services.secular import check_alignment

logger = logging.getLogger(__name__)

# exp(-45) < 3e-20: lattice terms whose decay exponent passes this are dropped
TRUNCATION = 45.0
IMAGE_CUTOFF = 2.0 * TRUNCATION**2
SIGMA_START = 2.0
SIGMA_MAX = 1e6
SIGMA_MARGIN = 0.9
NODE_MARGIN = 0.95
DEFAULT_QUAD_TOL = 1e-9
QUAD_LIMIT = 200
HALF_WIDTH_EXPONENT = 46.0
RESIDUE_FLOOR = 1e-10
EULER_GAMMA = float(np.euler_gamma)


# ============ BESSEL K0 ============

def k0_complex(z):
    """
    K0(z) for Re z > 0, scalar or array.

    Args:
        z: complex argument(s) with positive real part

    Returns:
        complex (or complex ndarray): K0(z)

    Raises:
        DomainError: some Re z <= 0
    """
    values = np.asarray(z, dtype=np.complex128)
    if np.any(~np.isfinite(values)) or np.any(values.real <= 0):
        raise DomainError("K0 is only evaluated for finite z with Re z > 0")
    result = special.kv(0, values)
    if values.ndim == 0:
        return complex(result)
    return result


# ============ GEOMETRY ============

@dataclass(frozen=True)
class TorusGeometry:
    """
    Eigenvalue norms of the torus paired with the squared lengths of its image lattice.

    `spectrum` feeds the secular function, `images` feeds the Green's function
    sums, `volume` converts between the two scales.
    """

    spectrum: NormSpectrum
    images: NormSpectrum
    volume: float
    c0: float = field(default=1.0)

    @classmethod
    def from_spectrum(cls, spec: NormSpectrum, sigma_min: float = 1.0) -> "TorusGeometry":
        """Build the image lattice long enough for every truncated sum on lines with sigma >= sigma_min."""
        if spec.form is None:
            raise DomainError("the image lattice needs the form of the torus")
        if not sigma_min > 0:
            raise DomainError(f"sigma_min must be positive, got {sigma_min!r}")
        cutoff = max(IMAGE_CUTOFF, (TRUNCATION / sigma_min) ** 2)
        images = enumerate_norms(spec.form.periodization(), cutoff, merge_tol=spec.merge_tol or DEFAULT_MERGE_TOL)
        return cls(spec, images, spec.form.torus_volume, secular_c0(spec, TailModel.ANALYTIC))

    @property
    def dim(self) -> Optional[int]:
        return self.spectrum.dim

    def with_c0(self, value: float) -> "TorusGeometry":
        return replace(self, c0=float(value))

    def phase_term(self, phase: ScattererPhase) -> float:
        """Green-scale phase constant (c0 / volume) * tan(phi/2)."""
        return self.c0 / self.volume * phase.tan_half

    @cached_property
    def lengths(self) -> Tuple[np.ndarray, np.ndarray]:
        m, r = self.images.nonzero
        return np.sqrt(m), r.astype(np.float64)

    @cached_property
    def c1(self) -> float:
        return c1_constant(self.images)

    @cached_property
    def regularization_3d(self) -> float:
        """sum r exp(-l/sqrt2) cos(l/sqrt2) / l over lengths with l/sqrt2 <= 45."""
        ell, r = self.lengths
        u = ell / math.sqrt(2.0)
        keep = u <= TRUNCATION
        return math.fsum(r[keep] * np.exp(-u[keep]) * np.cos(u[keep]) / ell[keep])


# ============ LATTICE SUMS ============

def _check_line(rho: complex) -> float:
    sigma = -complex(rho).imag
    if not sigma > 0:
        raise DomainError(f"the lattice sums need Im rho < 0, got rho={rho!r}")
    return sigma


def _beyond_cutoff(images: NormSpectrum, sigma: float, dim: int) -> float:
    """Weyl-density estimate of the terms lying beyond the enumerated image lattice."""
    if images.form is None:
        return 0.0
    top = math.sqrt(images.cutoff)
    covolume = images.form.covolume
    if dim == 2:
        return 2.0 * math.pi / covolume * top * float(special.k1(sigma * top)) / sigma
    return 4.0 * math.pi / covolume * math.exp(-sigma * top) * (top / sigma + 1.0 / sigma**2)


class _LineSums:
    """Lattice terms kept on the line Im rho = -sigma, with a bound on what was dropped."""

    def __init__(self, images: NormSpectrum, sigma: float, dim: int = 2):
        m, r = images.nonzero
        ell = np.sqrt(m)
        weights = r.astype(np.float64)
        keep = sigma * ell <= TRUNCATION
        self.sigma = sigma
        self.lengths = ell[keep]
        self.weights = weights[keep]
        if dim == 2:
            dropped = math.fsum(weights[~keep] * special.kv(0, sigma * ell[~keep]))
        else:
            dropped = math.fsum(weights[~keep] * np.exp(-sigma * ell[~keep]) / ell[~keep])
        self.dropped = dropped + _beyond_cutoff(images, sigma, dim)

    def bessel(self, rho: complex) -> complex:
        if self.lengths.size == 0:
            return 0j
        return complex(np.dot(self.weights, special.kv(0, 1j * rho * self.lengths)))

    def waves(self, rho: complex) -> complex:
        if self.lengths.size == 0:
            return 0j
        return complex(np.dot(self.weights, np.exp(-1j * rho * self.lengths) / self.lengths))


def diffractive_D(images: NormSpectrum, rho: complex) -> complex:
    """
    D(rho) = sum_{m != 0} r(m) K0(i rho sqrt(m)) over the image lattice.

    Terms with sigma*sqrt(m) > 45 are dropped; see diffractive_bound for the size of the rest.
    """
    sigma = _check_line(rho)
    return _LineSums(images, sigma).bessel(complex(rho))


def diffractive_bound(images: NormSpectrum, sigma: float) -> float:
    """f(sigma) = sum r(m) K0(sigma sqrt(m)), which dominates |D| on the whole line."""
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma!r}")
    ell, r = np.sqrt(images.nonzero[0]), images.nonzero[1].astype(np.float64)
    keep = sigma * ell <= TRUNCATION
    return math.fsum(r[keep] * special.kv(0, sigma * ell[keep])) + _LineSums(images, sigma).dropped


def c1_constant(images: NormSpectrum) -> float:
    """c1 = -(1/2pi) sum_{m != 0} r(m) Re K0(sqrt(m) e^{i pi/4})."""
    m, r = images.nonzero
    ell = np.sqrt(m)
    keep = ell / math.sqrt(2.0) <= TRUNCATION
    z = ell[keep] * cmath.exp(0.25j * math.pi)
    values = special.kv(0, z).real
    return -math.fsum(r[keep] * values) / (2.0 * math.pi)


def c_constants(geometry: TorusGeometry, phase: ScattererPhase) -> Tuple[float, float]:
    """(c1, c(phi)) with c(phi) = c1 - (c0/volume) tan(phi/2)."""
    c1 = geometry.c1
    return c1, c1 - geometry.phase_term(phase)


def d3_diffractive(geometry: TorusGeometry, phase: ScattererPhase, rho: complex) -> complex:
    """
    D3(rho) = -(c0/vol) tan(phi/2) + 1/(4 pi sqrt2)
              + (1/4pi) sum r (exp(-i rho l) - exp(-l/sqrt2) cos(l/sqrt2)) / l
    """
    sigma = _check_line(rho)
    sums = _LineSums(geometry.images, sigma, dim=3)
    return _d3(geometry, phase, sums, complex(rho))


def _d3(geometry: TorusGeometry, phase: ScattererPhase, sums: _LineSums, rho: complex) -> complex:
    lattice = sums.waves(rho) - geometry.regularization_3d
    return -geometry.phase_term(phase) + 1.0 / (4.0 * math.pi * math.sqrt(2.0)) + lattice / (4.0 * math.pi)


def d3_bound(geometry: TorusGeometry, phase: ScattererPhase, sigma: float) -> float:
    """Termwise bound of |D3| on the line Im rho = -sigma."""
    ell, r = geometry.lengths
    if ell.size:
        waves = math.fsum(r * (np.exp(-sigma * ell) + np.exp(-ell / math.sqrt(2.0))) / ell)
    else:
        waves = 0.0
    waves += _beyond_cutoff(geometry.images, sigma, 3)
    return abs(geometry.phase_term(phase)) + 1.0 / (4.0 * math.pi * math.sqrt(2.0)) + waves / (4.0 * math.pi)


def spectral_function_geometric(geometry: TorusGeometry, lam: float) -> float:
    """
    Green-scale spectral function at lambda = -sigma^2 from the image-lattice side.

    Equals F(lambda) / volume, where F is the secular function.
    """
    if not lam < 0:
        raise DomainError(f"the geometric side is evaluated at lambda < 0, got {lam!r}")
    sigma = math.sqrt(-lam)
    rho = complex(0.0, -sigma)
    if geometry.dim == 3:
        d3 = _d3(geometry, ScattererPhase(0.0), _LineSums(geometry.images, sigma, dim=3), rho)
        return -sigma / (4.0 * math.pi) + d3.real
    d = _LineSums(geometry.images, sigma).bessel(rho)
    return (-math.log(sigma) + d.real) / (2.0 * math.pi) + geometry.c1


# ============ CONTOUR SELECTION ============

def find_sigma(geometry: TorusGeometry, phase: ScattererPhase) -> float:
    """
    Smallest sigma of the doubling sequence 2, 4, 8, ... with
    log(sigma) > 2 pi |c(phi)| and f(sigma) / (log(sigma) - 2 pi |c(phi)|) <= 0.9.
    """
    _, c_phi = c_constants(geometry, phase)
    level = 2.0 * math.pi * abs(c_phi)
    sigma = SIGMA_START
    while sigma <= SIGMA_MAX:
        margin = math.log(sigma) - level
        if margin > 0 and diffractive_bound(geometry.images, sigma) / margin <= SIGMA_MARGIN:
            logger.debug("Contour line sigma=%g (c(phi)=%g)", sigma, c_phi)
            return sigma
        sigma *= 2.0
    raise AdmissibilityError(f"no admissible sigma below {SIGMA_MAX:g} for c(phi)={c_phi!r}")


def find_sigma_3d(geometry: TorusGeometry, phase: ScattererPhase) -> float:
    """Smallest sigma of the doubling sequence from 2 with 4 pi sup|D3| / sigma <= 0.9."""
    sigma = SIGMA_START
    while sigma <= SIGMA_MAX:
        if 4.0 * math.pi * d3_bound(geometry, phase, sigma) / sigma <= SIGMA_MARGIN:
            logger.debug("Contour line sigma=%g (3D)", sigma)
            return sigma
        sigma *= 2.0
    raise AdmissibilityError(f"no admissible sigma below {SIGMA_MAX:g} for phi={phase.phi!r}")


# ============ SPECTRAL SIDE ============

def trace_lhs(spec: NormSpectrum, pert: PerturbedSpectrum, test: GaussianTest) -> float:
    """
    sum_j {exp(-beta lambda_j^phi) - exp(-beta n_j)}, ground state included.

    Raises:
        RangeError: pert.x_max < 37/beta
        ConsistencyError: pert was solved against other norms
    """
    required = test.required_xmax
    if pert.x_max < required:
        raise RangeError(
            f"spectra reach {pert.x_max:g}; beta={test.beta:g} needs x_max >= {required:g}",
            required=required,
        )
    check_alignment(spec, pert)
    beta = test.beta
    terms = -np.exp(-beta * pert.lambdas) * np.expm1(-beta * pert.gaps)
    return math.fsum(terms)


def _spectral_error(pert: PerturbedSpectrum, test: GaussianTest) -> float:
    beta = test.beta
    weights = np.exp(-beta * pert.lambdas)
    roots = beta * math.fsum(weights * pert.tol * np.maximum(1.0, np.abs(pert.lambdas)))
    return roots + math.exp(-beta * pert.x_max) * len(pert)


# ============ CONTOUR SIDE ============

class ContourTerms(NamedTuple):
    smooth: float
    diffractive: float
    quad_error: float
    trunc_m: float
    trunc_s: float
    condition_max: float


def _quad(fn: Callable[[float], float], a: float, b: float, quad_tol: float) -> Tuple[float, float]:
    result = integrate.quad(fn, a, b, epsabs=quad_tol, epsrel=0.0, limit=QUAD_LIMIT, full_output=1)
    if len(result) == 3:
        value, error, _ = result
        return value, error
    value, error, info, message = result
    if "roundoff" in message.lower():
        logger.warning("⚠️ Quadrature hit roundoff on [%g, %g]; error estimate %g", a, b, error)
        return value, error
    last = int(info.get("last", 0)) or 1
    worst = int(np.argmax(info["elist"][:last]))
    interval = (float(info["alist"][worst]), float(info["blist"][worst]))
    raise QuadratureError(f"quadrature did not converge: {message.strip()}", interval=interval)


def _line_integral(fn: Callable[[float], complex], half_width: float, quad_tol: float) -> Tuple[complex, float]:
    """Integral of fn(s) over [-half_width, half_width], real and imaginary parts separately."""
    memo: Dict[float, complex] = {}

    def cached(s: float) -> complex:
        value = memo.get(s)
        if value is None:
            value = memo[s] = fn(s)
        return value

    re, err_re = _quad(lambda s: cached(s).real, -half_width, half_width, quad_tol)
    im, err_im = _quad(lambda s: cached(s).imag, -half_width, half_width, quad_tol)
    return complex(re, im), err_re + err_im


def _contour_value(integral: complex, error: float, label: str) -> float:
    """Real part of (1/2 pi i) * integral; the imaginary residue must vanish by s <-> -s symmetry."""
    value = integral.imag / (2.0 * math.pi)
    residue = abs(integral.real) / (2.0 * math.pi)
    if residue > max(RESIDUE_FLOOR, 10.0 * error):
        raise QuadratureError(f"{label} term has imaginary residue {residue:.3g}")
    return value


def _half_width(test: GaussianTest, sigma: float) -> float:
    return math.sqrt(HALF_WIDTH_EXPONENT / test.beta) + sigma


def _tail_mass(test: GaussianTest, sigma: float, half_width: float) -> float:
    """Bound on the Gaussian factor integrated beyond |s| = half_width."""
    beta = test.beta
    return math.exp(beta * sigma * sigma - beta * half_width * half_width) * (1.0 + 2.0 * half_width)


def _hprime_mass(test: GaussianTest, sigma: float) -> float:
    """Integral of |h'(s - i sigma)| over the real line."""
    beta = test.beta
    return math.exp(beta * sigma * sigma) * (2.0 + 2.0 * sigma * math.sqrt(math.pi * beta))


def _rhs_2d(
    geometry: TorusGeometry, phase: ScattererPhase, test: GaussianTest, sigma: float, quad_tol: float
) -> ContourTerms:
    _, c_phi = c_constants(geometry, phase)
    shift = 2.0 * math.pi * c_phi
    beta = test.beta
    sums = _LineSums(geometry.images, sigma)
    worst = [0.0]

    def smooth_integrand(s: float) -> complex:
        rho = complex(s, -sigma)
        return cmath.exp(-beta * rho * rho) / (rho * (cmath.log(1j * rho) - shift))

    def diffractive_integrand(s: float) -> complex:
        rho = complex(s, -sigma)
        ratio = sums.bessel(rho) / (cmath.log(1j * rho) - shift)
        size = abs(ratio)
        if size > worst[0]:
            worst[0] = size
        if size > NODE_MARGIN:
            raise AdmissibilityError(f"|D| / |log(i rho) - 2 pi c| = {size:.3f} at s={s:g}, sigma={sigma:g}")
        h_prime = -2.0 * beta * rho * cmath.exp(-beta * rho * rho)
        return -h_prime * cmath.log(1.0 - ratio)

    half_width = _half_width(test, sigma)
    smooth_int, smooth_err = _line_integral(smooth_integrand, half_width, quad_tol)
    diff_int, diff_err = _line_integral(diffractive_integrand, half_width, quad_tol)
    smooth = _contour_value(smooth_int, smooth_err, "smooth")
    diffractive = _contour_value(diff_int, diff_err, "diffractive")

    gap = math.log(sigma) - abs(shift)
    trunc_m = 0.0
    if gap > 0:
        trunc_m = sums.dropped / (gap * (1.0 - NODE_MARGIN)) * _hprime_mass(test, sigma) / (2.0 * math.pi)
    trunc_s = _tail_mass(test, sigma, half_width) * (1.0 / max(sigma * gap, 1e-300) + 2.0 * beta * half_width)
    return ContourTerms(
        smooth=smooth,
        diffractive=diffractive,
        quad_error=(smooth_err + diff_err) / (2.0 * math.pi),
        trunc_m=trunc_m,
        trunc_s=trunc_s,
        condition_max=worst[0],
    )


def _rhs_3d(
    geometry: TorusGeometry, phase: ScattererPhase, test: GaussianTest, sigma: float, quad_tol: float
) -> ContourTerms:
    beta = test.beta
    sums = _LineSums(geometry.images, sigma, dim=3)
    worst = [0.0]

    def integrand(s: float) -> complex:
        rho = complex(s, -sigma)
        ratio = 4j * math.pi * _d3(geometry, phase, sums, rho) / rho
        size = abs(ratio)
        if size > worst[0]:
            worst[0] = size
        if size > NODE_MARGIN:
            raise AdmissibilityError(f"4 pi |D3| / |rho| = {size:.3f} at s={s:g}, sigma={sigma:g}")
        h_prime = -2.0 * beta * rho * cmath.exp(-beta * rho * rho)
        return h_prime * cmath.log(1.0 + ratio)

    half_width = _half_width(test, sigma)
    contour_int, contour_err = _line_integral(integrand, half_width, quad_tol)
    contour = _contour_value(contour_int, contour_err, "diffractive")
    trunc_m = sums.dropped / (1.0 - NODE_MARGIN) / sigma * _hprime_mass(test, sigma) / (2.0 * math.pi)
    trunc_s = _tail_mass(test, sigma, half_width) * 2.0 * beta * half_width
    return ContourTerms(
        smooth=0.5,
        diffractive=-contour,
        quad_error=contour_err / (2.0 * math.pi),
        trunc_m=trunc_m,
        trunc_s=trunc_s,
        condition_max=worst[0],
    )


def trace_rhs_2d(
    geometry: TorusGeometry,
    phase: ScattererPhase,
    test: GaussianTest,
    sigma: float,
    quad_tol: float = DEFAULT_QUAD_TOL,
) -> Tuple[float, float]:
    """
    (smooth, diffractive) contour terms on rho = s - i*sigma.

    smooth      = (1/2 pi i) int h(rho) / (rho (log(i rho) - 2 pi c(phi))) d rho
    diffractive = -(1/2 pi i) int h'(rho) log(1 - D(rho) / (log(i rho) - 2 pi c(phi))) d rho
    """
    terms = _rhs_2d(geometry, phase, test, sigma, quad_tol)
    return terms.smooth, terms.diffractive


def trace_rhs_3d(
    geometry: TorusGeometry,
    phase: ScattererPhase,
    test: GaussianTest,
    sigma: float,
    quad_tol: float = DEFAULT_QUAD_TOL,
) -> float:
    """1/2 h(0) - (1/2 pi i) int h'(rho) log(1 + 4 pi i D3(rho) / rho) d rho."""
    terms = _rhs_3d(geometry, phase, test, sigma, quad_tol)
    return terms.smooth + terms.diffractive


def smooth_term_reference(c_phi: float, test: GaussianTest) -> float:
    """
    Real-line form of the 2D smooth term:
    e^g - 1 + 1/2 int (1 - exp(-g e^{2t})) / (t^2 + pi^2/4) dt, with g = beta e^{4 pi c}.
    """
    gamma = test.beta * math.exp(4.0 * math.pi * c_phi)

    def integrand(t: float) -> float:
        exponent = 2.0 * t
        if exponent > 700.0:
            return 1.0 / (t * t + 0.25 * math.pi**2)
        return -math.expm1(-gamma * math.exp(exponent)) / (t * t + 0.25 * math.pi**2)

    middle = -0.5 * math.log(gamma)
    left, _ = integrate.quad(integrand, -np.inf, middle, epsabs=1e-13, limit=QUAD_LIMIT)
    right, _ = integrate.quad(integrand, middle, np.inf, epsabs=1e-13, limit=QUAD_LIMIT)
    return math.expm1(gamma) + 0.5 * (left + right)


# ============ REPORT ============

def trace_check(
    spec: NormSpectrum,
    pert: PerturbedSpectrum,
    phase: ScattererPhase,
    test: GaussianTest,
    sigma: Optional[float] = None,
    quad_tol: float = DEFAULT_QUAD_TOL,
    geometry: Optional[TorusGeometry] = None,
    config: Optional[Dict[str, Any]] = None,
) -> TraceCheckReport:
    """
    Evaluate both sides of the trace identity and their error budget.

    Args:
        spec: Unperturbed spectrum with its form
        pert: Perturbed spectrum solved against spec
        phase: Phase the perturbed spectrum was solved for
        test: Gaussian test function
        sigma: Contour line; selected automatically when None
        quad_tol: Absolute quadrature tolerance per integral
        geometry: Prebuilt image lattice (built from spec when None)
        config: Configuration echoed into the report

    Returns:
        TraceCheckReport
    """
    if spec.form is None:
        raise DomainError("a trace check needs the form of the torus")
    if pert.phase.phi != phase.phi:
        raise ConsistencyError(f"perturbed spectrum was solved for phi={pert.phase.phi!r}, not {phase.phi!r}")
    if sigma is not None and not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma!r}")
    if not quad_tol > 0:
        raise DomainError(f"quad_tol must be positive, got {quad_tol!r}")

    if geometry is None:
        geometry = TorusGeometry.from_spectrum(spec, sigma_min=min(1.0, sigma or 1.0))
    if phase.tan_half != 0.0:
        # use exactly the c0 the roots were solved with
        geometry = geometry.with_c0(pert.rhs / phase.tan_half)

    lhs = trace_lhs(spec, pert, test)
    dim = spec.form.dim
    smooth_reference = None
    if dim == 2:
        sigma = sigma or find_sigma(geometry, phase)
        terms = _rhs_2d(geometry, phase, test, sigma, quad_tol)
        _, c_phi = c_constants(geometry, phase)
        smooth_reference = smooth_term_reference(c_phi, test)
    else:
        sigma = sigma or find_sigma_3d(geometry, phase)
        terms = _rhs_3d(geometry, phase, test, sigma, quad_tol)

    rhs = terms.smooth + terms.diffractive
    budget = ErrorBudget(
        quad=terms.quad_error,
        trunc_m=terms.trunc_m,
        trunc_s=terms.trunc_s,
        spectral=_spectral_error(pert, test),
    )
    report = TraceCheckReport(
        dim=dim,
        phi=phase.phi,
        beta=test.beta,
        sigma=sigma,
        lhs=lhs,
        smooth=terms.smooth,
        diffractive=terms.diffractive,
        rhs=rhs,
        abs_error=abs(lhs - rhs),
        budget=budget,
        smooth_reference=smooth_reference,
        condition_max=terms.condition_max,
        config=config,
    )
    marker = "✅" if report.holds() else "⚠️"
    logger.info(
        "%s Trace check dim=%d beta=%g: lhs=%.12g rhs=%.12g |diff|=%.3g",
        marker, dim, test.beta, lhs, rhs, report.abs_error,
    )
    return report
