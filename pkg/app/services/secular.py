"""
Secular function of a point scatterer on a flat torus and its root solver.

F(lambda) = -1/lambda + sum_{j>=1} r_j * (1/(n_j - lambda) - n_j/(n_j^2 + 1)) + tail(lambda)

The perturbed eigenvalues solve F(lambda) = c0 * tan(phi/2): one root in
every gap (n_j, n_{j+1}) and one negative ground state.

Handles:
1. Weyl-density continuation of the sums beyond the enumeration cutoff
2. Fast evaluation: exact near-field window [lambda/2, 2*lambda], far field
   from prefix/suffix moment tables (geometric ratio <= 1/2)
3. Guarded root solves per gap and for the ground state
4. Whole-spectrum solves, optionally split over a process pool
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import integrate

from app.errors import (
    BracketFailureError,
    CapacityError,
    ConsistencyError,
    DegenerateGapError,
    DomainError,
    InterlacingError,
    PoleProximityError,
    RangeError,
)
from app.models.lattice import NormSpectrum
from app.models.spectrum import PerturbedSpectrum, ScattererPhase, TailModel
from app.services.lattice import weyl_count

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-12
MIN_TOL = 1e-13
DEFAULT_EPS_EVAL = 1e-10
MIN_EPS_EVAL = 1e-12
DEFAULT_B_MAX = 1e16

POLE_GUARD = 1e-14
ROOT_GUARD = 1e-13
# fraction of the cutoff kept as headroom when the analytic tail is on
EVAL_GUARD = 0.5
MAX_ITERATIONS = 200
_EPS = np.finfo(np.float64).eps


def root_guard(n: float) -> float:
    """Pole guard eps_b = max(1e-13, 1e-13 * n)."""
    return max(ROOT_GUARD, ROOT_GUARD * abs(n))


def expansion_terms(eps_eval: float) -> int:
    """Number of far-field terms so the geometric remainder 2 * 2^-p stays below eps_eval."""
    return int(math.ceil(math.log2(2.0 / eps_eval)))


# ============ TAIL MODEL ============

class WeylTail:
    """
    Continuation of the lattice sums by the Weyl density beyond the cutoff.

    The integral starts at the radius whose Weyl count equals the number of
    enumerated vectors, so the counting remainder at the junction cancels.
    """

    def __init__(self, spec: NormSpectrum):
        if spec.form is None:
            raise DomainError("the analytic tail needs the form of the torus")
        form = spec.form
        self.dim = form.dim
        covolume = form.covolume
        count = spec.vector_count()
        if self.dim == 2:
            self.density = math.pi / covolume
            self.start = covolume * count / math.pi
        else:
            self.density = 2.0 * math.pi / covolume
            self.start = (3.0 * covolume * count / (4.0 * math.pi)) ** (2.0 / 3.0)
            self._root = math.sqrt(self.start)
            quartic, _ = integrate.quad(lambda u: 2.0 / (u**4 + 1.0), self._root, np.inf, epsrel=1e-12)
            self._quartic = quartic
        self.amplitude = self._remainder_amplitude(spec)

    @staticmethod
    def _remainder_amplitude(spec: NormSpectrum) -> float:
        """Largest |N(x) - Weyl(x)| over the upper half of the enumerated range."""
        lo = int(np.searchsorted(spec.norms, 0.5 * spec.cutoff))
        after = np.cumsum(spec.mults)[lo:]
        before = after - spec.mults[lo:]
        weyl = weyl_count(spec.form, spec.norms[lo:])
        if weyl.size == 0:
            return 0.0
        return float(max(np.abs(after - weyl).max(), np.abs(before - weyl).max()))

    def value(self, lam: float) -> float:
        if self.dim == 2:
            return -self.density * math.log((self.start - lam) / math.hypot(self.start, 1.0))
        a = self._root
        if lam > 0:
            mu = math.sqrt(lam)
            part = mu * math.log1p(2.0 * mu / (a - mu))
        elif lam < 0:
            nu = math.sqrt(-lam)
            part = -2.0 * nu * math.atan(nu / a)
        else:
            part = 0.0
        return self.density * (part + self._quartic)

    def derivative(self, lam: float) -> float:
        if self.dim == 2:
            return self.density / (self.start - lam)
        a = self._root
        if lam > 0:
            mu = math.sqrt(lam)
            if mu < 1e-8 * a:
                return self.density * 2.0 / a
            return self.density * (math.log1p(2.0 * mu / (a - mu)) / (2.0 * mu) + a / (a * a - mu * mu))
        if lam < 0:
            nu = math.sqrt(-lam)
            if nu < 1e-8 * a:
                return self.density * 2.0 / a
            return self.density * (math.atan(nu / a) / nu + a / (a * a + nu * nu))
        return self.density * 2.0 / a

    def c0_tail(self) -> float:
        """Continuation of sum r(n) / (n^2 + 1)."""
        if self.dim == 2:
            return self.density * (0.5 * math.pi - math.atan(self.start))
        tail, _ = integrate.quad(lambda u: 2.0 * u * u / (u**4 + 1.0), self._root, np.inf, epsrel=1e-12)
        return self.density * tail

    def c0_error(self) -> float:
        return self.amplitude / (self.start**2 + 1.0)


def c0(spec: NormSpectrum, tail: TailModel = TailModel.ANALYTIC) -> float:
    """c0 = 1 + sum_{j>=1} r(n_j)/(n_j^2 + 1), continued past the cutoff when the tail is on."""
    n, r = spec.nonzero
    value = 1.0 + math.fsum(r / (n * n + 1.0))
    if TailModel(tail) is TailModel.ANALYTIC:
        value += WeylTail(spec).c0_tail()
    return value


def c0_tail_error(spec: NormSpectrum) -> float:
    return WeylTail(spec).c0_error()


# ============ FAST EVALUATOR ============

class SecularEvaluator:
    """
    Evaluates F and F' at a cost of O(window + p) per call.

    Moment tables:
        low[k, i]  = sum_{l < i}  r_l n_l^k        (norms below lambda/2)
        high[k, i] = sum_{l >= i} r_l n_l^-(k+1)   (norms above 2*lambda)
    """

    def __init__(
        self,
        spec: NormSpectrum,
        tail: TailModel = TailModel.ANALYTIC,
        eps_eval: float = DEFAULT_EPS_EVAL,
    ):
        if not eps_eval >= MIN_EPS_EVAL:
            raise DomainError(f"eps_eval must be at least {MIN_EPS_EVAL}, got {eps_eval!r}")
        self.spec = spec
        self.tail_model = TailModel(tail)
        self.eps_eval = float(eps_eval)
        n, r = spec.nonzero
        self._n = np.ascontiguousarray(n)
        self._r = r.astype(np.float64)
        self.K = math.fsum(self._r * self._n / (self._n * self._n + 1.0))
        self.terms = expansion_terms(self.eps_eval)

        if self.tail_model is TailModel.ANALYTIC:
            self._tail: Optional[WeylTail] = WeylTail(spec)
            self.max_lambda = spec.cutoff * (1.0 - EVAL_GUARD)
        else:
            self._tail = None
            self.max_lambda = math.inf

        self._build_tables()

    def _build_tables(self) -> None:
        p = self.terms
        m = self._n.size
        self._weights = np.arange(1, p + 1, dtype=np.float64)
        self._low = np.zeros((p + 2, m + 1))
        self._high = np.zeros((p + 2, m + 1))
        if m == 0:
            return
        top = math.log10(self._n[-1])
        bottom = math.log10(self._n[0])
        if (p + 1) * max(top, 0.0) > 300 or (p + 2) * max(-bottom, 0.0) > 300:
            raise CapacityError(
                f"moment tables with {p} terms overflow for norms in [{self._n[0]:g}, {self._n[-1]:g}]"
            )
        k = np.arange(p + 2, dtype=np.float64)[:, None]
        self._low[:, 1:] = np.cumsum(self._r * self._n**k, axis=1)
        inverse = self._r * self._n ** -(k + 1.0)
        self._high[:, :m] = np.cumsum(inverse[:, ::-1], axis=1)[:, ::-1]

    def _check(self, lam: float) -> None:
        if not math.isfinite(lam):
            raise DomainError(f"lambda must be finite, got {lam!r}")
        if lam > self.max_lambda:
            raise RangeError(
                f"lambda={lam:g} is beyond the tail-valid range {self.max_lambda:g}",
                required=lam / (1.0 - EVAL_GUARD),
            )
        if abs(lam) <= POLE_GUARD:
            raise PoleProximityError(0, 0.0, lam)
        i = int(np.searchsorted(self._n, lam))
        for idx in (i - 1, i):
            if 0 <= idx < self._n.size:
                pole = float(self._n[idx])
                if abs(lam - pole) <= POLE_GUARD * max(1.0, pole):
                    raise PoleProximityError(idx + 1, pole, lam)

    def evaluate(self, lam: float) -> Tuple[float, float]:
        """Return (F(lambda), F'(lambda))."""
        lam = float(lam)
        self._check(lam)
        n, r = self._n, self._r
        p = self.terms
        m = n.size

        value = -1.0 / lam - self.K
        deriv = 1.0 / (lam * lam)
        if lam > 0:
            lo = int(np.searchsorted(n, 0.5 * lam, side="left"))
            hi = int(np.searchsorted(n, 2.0 * lam, side="right"))
        else:
            lo = 0
            hi = int(np.searchsorted(n, -2.0 * lam, side="right"))

        if hi > lo:
            inv = 1.0 / (n[lo:hi] - lam)
            w = r[lo:hi] * inv
            value += float(w.sum())
            deriv += float((w * inv).sum())
        if lo > 0:
            x = 1.0 / lam
            moments = self._low[:p, lo]
            value -= x * P.polyval(x, moments)
            deriv += x * x * P.polyval(x, self._weights * moments)
        if hi < m:
            value += P.polyval(lam, self._high[:p, hi])
            deriv += P.polyval(lam, self._weights * self._high[1 : p + 1, hi])

        if self._tail is not None:
            value += self._tail.value(lam)
            deriv += self._tail.derivative(lam)
        return float(value), float(deriv)

    def evaluate_naive(self, lam: float) -> Tuple[float, float, float]:
        """Full summation; returns (value, derivative, magnitude of the summed terms)."""
        lam = float(lam)
        self._check(lam)
        n, r = self._n, self._r
        inv = 1.0 / (n - lam)
        terms = r * (inv - n / (n * n + 1.0))
        value = -1.0 / lam + math.fsum(terms)
        deriv = 1.0 / (lam * lam) + math.fsum(r * inv * inv)
        magnitude = 1.0 / abs(lam) + self.K + math.fsum(np.abs(r * inv))
        if self._tail is not None:
            value += self._tail.value(lam)
            deriv += self._tail.derivative(lam)
            magnitude += abs(self._tail.value(lam))
        return value, deriv, magnitude

    def rounding_floor(self, lam: float, deriv: float, rhs: float) -> float:
        """Residual that double precision cannot resolve at lambda."""
        return 4.0 * _EPS * abs(lam) * deriv + self.eps_eval * (1.0 + self.K + abs(rhs))

    def __repr__(self):
        return (
            f"<SecularEvaluator(norms={self._n.size + 1}, tail={self.tail_model.value}, "
            f"terms={self.terms})>"
        )


def build_secular(
    spec: NormSpectrum,
    tail: TailModel = TailModel.ANALYTIC,
    eps_eval: float = DEFAULT_EPS_EVAL,
) -> SecularEvaluator:
    """Precompute K, the moment tables and the tail parameters for spec."""
    evaluator = SecularEvaluator(spec, tail, eps_eval)
    logger.debug("🔄 Built %r", evaluator)
    return evaluator


def eval_secular(F: SecularEvaluator, lam: float) -> Tuple[float, float]:
    return F.evaluate(lam)


# ============ ROOT SOLVES ============

class RootSolution(NamedTuple):
    lam: float
    residual: float
    floor: float


def _two_pole_offset(r_a: float, r_b: float, width: float, level: float) -> float:
    """Solve -r_a/t + r_b/(width - t) = level for t in (0, width)."""
    if level == 0.0:
        return r_a * width / (r_a + r_b)
    b = level * width - r_a - r_b
    disc = b * b + 4.0 * level * r_a * width
    if disc < 0.0:
        return 0.5 * width
    q = -0.5 * (-b + math.copysign(math.sqrt(disc), -b))
    candidates = [q / level] if q != 0.0 else []
    if q != 0.0:
        candidates.append(-r_a * width / q)
    for t in candidates:
        if 0.0 < t < width:
            return t
    return 0.5 * width


def _solve_gap(F: SecularEvaluator, rhs: float, j: int, tol: float) -> RootSolution:
    norms = F.spec.norms
    mults = F.spec.mults
    if not 0 <= j < len(norms) - 1:
        raise RangeError(f"gap index {j} outside 0..{len(norms) - 2}")
    a = float(norms[j])
    b = float(norms[j + 1])
    r_a = float(mults[j])
    r_b = float(mults[j + 1])
    width = b - a
    guard_a = root_guard(a)
    guard_b = root_guard(b)
    if width < 4.0 * max(guard_a, guard_b):
        raise DegenerateGapError(j, width)

    lo = a + guard_a
    hi = b - guard_b
    target = tol * max(1.0, abs(rhs))

    f_lo, _ = F.evaluate(lo)
    if f_lo - rhs > 0:
        raise BracketFailureError(f"root of gap {j} lies inside the pole guard of n_{j}", gap=j, value=f_lo)
    f_hi, _ = F.evaluate(hi)
    if f_hi - rhs < 0:
        raise BracketFailureError(f"root of gap {j} lies inside the pole guard of n_{j + 1}", gap=j, value=f_hi)

    # start from the two-pole model with the rest of F frozen at the midpoint
    mid = 0.5 * (a + b)
    f_mid, _ = F.evaluate(mid)
    smooth = f_mid + r_a / (mid - a) - r_b / (b - mid)
    x = a + _two_pole_offset(r_a, r_b, width, rhs - smooth)
    if not lo < x < hi:
        x = mid

    best = None
    for _ in range(MAX_ITERATIONS):
        value, deriv = F.evaluate(x)
        res = value - rhs
        if best is None or abs(res) < abs(best[1]):
            best = (x, res, deriv)
        if abs(res) <= target:
            break
        if res < 0:
            lo = x
        else:
            hi = x
        if hi - lo <= 4.0 * _EPS * max(1.0, abs(x)):
            break
        # Newton on G(y) = (F(y) - rhs)(y - a)(b - y), which has no poles in the gap
        w = (x - a) * (b - x)
        g = res * w
        dg = deriv * w + res * (a + b - 2.0 * x)
        step = x - g / dg if dg > 0 else math.nan
        if not lo < step < hi:
            step = 0.5 * (lo + hi)
        if step == x:
            break
        x = step

    x, res, deriv = best
    return RootSolution(x, abs(res), F.rounding_floor(x, deriv, rhs))


def _solve_ground(F: SecularEvaluator, rhs: float, tol: float, b_max: float) -> RootSolution:
    hi = -ROOT_GUARD
    f_hi, _ = F.evaluate(hi)
    if f_hi - rhs < 0:
        raise BracketFailureError("ground state lies inside the pole guard of n_0 = 0", gap=-1, value=f_hi)

    bound = 1.0
    while True:
        value, _ = F.evaluate(-bound)
        if value - rhs < 0:
            break
        bound *= 2.0
        if bound > b_max:
            f_max, _ = F.evaluate(-b_max)
            raise BracketFailureError(
                f"no sign change of F - rhs on (-{b_max:g}, 0); F(-B_max) = {f_max!r}", gap=-1, value=f_max
            )
    lo = -bound
    target = tol * max(1.0, abs(rhs))
    x = -math.sqrt(bound * ROOT_GUARD)

    best = None
    for _ in range(MAX_ITERATIONS):
        value, deriv = F.evaluate(x)
        res = value - rhs
        if best is None or abs(res) < abs(best[1]):
            best = (x, res, deriv)
        if abs(res) <= target:
            break
        if res < 0:
            lo = x
        else:
            hi = x
        if hi - lo <= 4.0 * _EPS * max(1.0, abs(x)):
            break
        # Newton on G(y) = (F(y) - rhs) * (-y), which removes the pole at 0
        g = -res * x
        dg = -deriv * x - res
        step = x - g / dg if dg > 0 else math.nan
        if not lo < step < hi:
            step = -math.sqrt(lo * hi) if lo / hi > 4.0 else 0.5 * (lo + hi)
        if step == x:
            break
        x = step

    x, res, deriv = best
    return RootSolution(x, abs(res), F.rounding_floor(x, deriv, rhs))


def solve_in_gap(F: SecularEvaluator, rhs: float, j: int, tol: float = DEFAULT_TOL) -> float:
    """
    Root of F(lambda) = rhs inside the gap (n_j, n_{j+1}).

    Args:
        F: Secular evaluator
        rhs: Right-hand side c0 * tan(phi/2)
        j: Gap index, gap 0 is (0, n_1)
        tol: Residual tolerance relative to max(1, |rhs|)

    Returns:
        float: lambda in (n_j + eps_b, n_{j+1} - eps_b)
    """
    if tol < MIN_TOL:
        raise DomainError(f"tol must be at least {MIN_TOL}, got {tol!r}")
    return _solve_gap(F, rhs, j, tol).lam


def solve_ground_state(
    F: SecularEvaluator, rhs: float, tol: float = DEFAULT_TOL, b_max: float = DEFAULT_B_MAX
) -> float:
    """Negative root of F(lambda) = rhs, bracketed by doubling B in (-B, -eps_b)."""
    if tol < MIN_TOL:
        raise DomainError(f"tol must be at least {MIN_TOL}, got {tol!r}")
    return _solve_ground(F, rhs, tol, b_max).lam


# ============ WHOLE SPECTRUM ============

_WORKER_EVALUATOR: Optional[SecularEvaluator] = None


def _init_worker(spec: NormSpectrum, tail: TailModel, eps_eval: float) -> None:
    global _WORKER_EVALUATOR
    _WORKER_EVALUATOR = SecularEvaluator(spec, tail, eps_eval)


def _solve_chunk(task: Tuple[int, int, float, float]) -> List[RootSolution]:
    start, stop, rhs, tol = task
    return [_solve_gap(_WORKER_EVALUATOR, rhs, j, tol) for j in range(start, stop)]


def _chunks(count: int, workers: int) -> List[Tuple[int, int]]:
    size = max(1, math.ceil(count / (4 * workers)))
    return [(start, min(start + size, count)) for start in range(0, count, size)]


def _check_interlacing(norms: np.ndarray, lambdas: np.ndarray) -> None:
    if not lambdas[0] < 0.0:
        raise InterlacingError(0)
    below = lambdas < norms[: lambdas.size]
    above = lambdas[1:] > norms[: lambdas.size - 1]
    if not below.all():
        raise InterlacingError(int(np.flatnonzero(~below)[0]))
    if not above.all():
        raise InterlacingError(int(np.flatnonzero(~above)[0]) + 1)


def solve_spectrum(
    spec: NormSpectrum,
    phase: ScattererPhase,
    x_max: Optional[float] = None,
    tol: float = DEFAULT_TOL,
    tail: TailModel = TailModel.ANALYTIC,
    eps_eval: float = DEFAULT_EPS_EVAL,
    workers: int = 1,
) -> PerturbedSpectrum:
    """
    Solve the ground state and every gap with n_{j+1} <= x_max.

    Args:
        spec: Unperturbed spectrum
        phase: Scatterer phase
        x_max: Largest norm to pair with a root (default cutoff/2)
        tol: Residual tolerance relative to max(1, |rhs|)
        tail: Tail model of the secular sums
        eps_eval: Accuracy budget of the fast evaluator
        workers: Process count for the gap solves; 1 solves in-process

    Returns:
        PerturbedSpectrum: interlaced roots with residuals and gaps d_j

    Raises:
        RangeError: x_max beyond the tail-valid range
        DegenerateGapError / BracketFailureError: a gap could not be solved
    """
    tail = TailModel(tail)
    limit = spec.cutoff * (1.0 - EVAL_GUARD) if tail is TailModel.ANALYTIC else spec.cutoff
    if x_max is None:
        x_max = limit
    if x_max > limit:
        raise RangeError(f"x_max={x_max:g} exceeds the usable range {limit:g}", required=x_max / (1.0 - EVAL_GUARD))
    if tol < MIN_TOL:
        raise DomainError(f"tol must be at least {MIN_TOL}, got {tol!r}")

    F = build_secular(spec, tail, eps_eval)
    rhs = phase.rhs(c0(spec, tail))
    gap_count = int(np.searchsorted(spec.norms, x_max, side="right")) - 1
    logger.info("🔄 Solving %d gaps up to %g (phi=%g, rhs=%g)", gap_count, x_max, phase.phi, rhs)

    solutions = [_solve_ground(F, rhs, tol, DEFAULT_B_MAX)]
    if workers > 1 and gap_count > 1:
        tasks = [(start, stop, rhs, tol) for start, stop in _chunks(gap_count, workers)]
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_init_worker, initargs=(spec, tail, eps_eval)
        ) as pool:
            for chunk in pool.map(_solve_chunk, tasks):
                solutions.extend(chunk)
    else:
        for j in range(gap_count):
            solutions.append(_solve_gap(F, rhs, j, tol))
            if j and j % 5000 == 0:
                logger.debug("🔄 %d / %d gaps solved", j, gap_count)

    lambdas = np.array([s.lam for s in solutions])
    residuals = np.array([s.residual for s in solutions])
    floors = np.array([s.floor for s in solutions])
    _check_interlacing(spec.norms, lambdas)
    gaps = spec.norms[: lambdas.size] - lambdas

    logger.info("✅ Solved %d levels, ground state %.12g", lambdas.size, lambdas[0])
    return PerturbedSpectrum(
        phase=phase,
        rhs=rhs,
        tol=tol,
        x_max=float(x_max),
        lambdas=lambdas,
        residuals=residuals,
        gaps=gaps,
        floors=floors,
    )


def count_levels(pert: PerturbedSpectrum, x: float) -> int:
    """Number of perturbed levels lambda_j <= x."""
    return int(np.searchsorted(pert.lambdas, x, side="right"))


def root_table(pert: PerturbedSpectrum) -> Sequence[Tuple[int, float, float, float]]:
    """Rows (j, lambda_j, residual_j, d_j) in gap order."""
    return [
        (j, float(lam), float(res), float(d))
        for j, (lam, res, d) in enumerate(zip(pert.lambdas, pert.residuals, pert.gaps))
    ]


def check_alignment(spec: NormSpectrum, pert: PerturbedSpectrum, rel: float = 1e-9) -> None:
    """Raise ConsistencyError unless lambda_j + d_j reproduces the norms of spec."""
    count = len(pert)
    if count > len(spec):
        raise ConsistencyError(f"perturbed spectrum has {count} levels but only {len(spec)} norms exist")
    expected = spec.norms[:count]
    drift = np.abs(pert.norms - expected)
    bad = drift > rel * np.maximum(1.0, expected)
    if bad.any():
        j = int(np.flatnonzero(bad)[0])
        raise ConsistencyError(
            f"level {j} was solved against n={pert.norms[j]!r}, this spectrum has n={expected[j]!r}"
        )
