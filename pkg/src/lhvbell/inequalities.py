"""Data-side statistics and inequality tests on coincidence-rate curves.

All statistics operate on rates measured at the uniform angle grid
phi_j = j*pi/n, j = 1..n, and are invariant under rescaling of the rates,
so raw counts, rates, or normalized curves are all acceptable input.

The central quantity is delta_min: the RMS residual of the normalized
curve after removing its mean and best cos(2*phi) fit.  Quantum mechanics
predicts delta_min = 0, while every model in the local hidden-variable
family of this package satisfies delta_min >= deviation_d(eta, v); a
measured delta_min significantly below the bound therefore rules out the
whole family without invoking quantum theory.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .optimal_model import (
    BRANCH_DEVIATE,
    OptimalModelParams,
    deviation_d,
    v_max as model_v_max,
)
from .periodic_math import PERIOD

VERDICT_CONSISTENT = "CONSISTENT_WITH_LHV_FAMILY"
VERDICT_VIOLATES = "VIOLATES_LHV_FAMILY"
VERDICT_INCONCLUSIVE = "INCONCLUSIVE"

_BOOTSTRAP_SALT = 0x1B5EED


def _angles(n: int) -> np.ndarray:
    return PERIOD * np.arange(1, n + 1) / n


@dataclass(frozen=True)
class RateSeries:
    """Coincidence rates R(phi_j) at the angles phi_j = j*pi/n, j = 1..n.

    Optional per-rate one-sigma uncertainties ride along.  Note phi_n = pi,
    which is the same analyzer setting as 0 by periodicity.
    """

    rates: np.ndarray
    sigma: np.ndarray | None = None

    def __post_init__(self):
        rates = np.asarray(self.rates, dtype=float).copy()
        if rates.ndim != 1 or rates.size < 3:
            raise ValueError("need rates at n >= 3 angles")
        if np.min(rates) < 0:
            raise ValueError("rates must be non-negative")
        if not np.any(rates > 0):
            raise ValueError("empty data")
        rates.flags.writeable = False
        object.__setattr__(self, "rates", rates)
        if self.sigma is not None:
            sigma = np.asarray(self.sigma, dtype=float).copy()
            if sigma.shape != rates.shape or np.min(sigma) < 0:
                raise ValueError("uncertainties must match the rates and be >= 0")
            sigma.flags.writeable = False
            object.__setattr__(self, "sigma", sigma)

    @property
    def n(self) -> int:
        return self.rates.size

    @property
    def angles(self) -> np.ndarray:
        return _angles(self.n)

    @classmethod
    def from_counts(cls, counts) -> "RateSeries":
        """Counts as rates, with Poisson (sqrt-count) uncertainties."""
        counts = np.asarray(counts, dtype=float)
        return cls(counts, np.sqrt(counts))

    def scaled(self, c: float) -> "RateSeries":
        return RateSeries(c * self.rates, None if self.sigma is None else c * self.sigma)

    def index_of(self, phi: float) -> int:
        """Index j-1 of the grid angle equal to phi mod pi; raises if absent.

        Angle 0 maps to j = n (phi_n = pi is the same setting by periodicity).
        """
        step = PERIOD / self.n
        reduced = phi % PERIOD
        j = round(reduced / step)
        if abs(reduced - j * step) > 1e-9:
            raise ValueError(f"angle {phi!r} is not on the pi/{self.n} grid")
        j = j % self.n
        return (self.n if j == 0 else j) - 1

    def at(self, phi: float) -> float:
        return float(self.rates[self.index_of(phi)])


def complete_symmetric(angles, rates, n: int, sigma=None) -> RateSeries:
    """Fill a partially measured series using R(phi) = R(pi - phi).

    Accepts rates at any subset of the grid angles j*pi/n that covers each
    mirror pair {phi, pi - phi} at least once (angle 0 counts as pi).  A
    complete series passes through unchanged, so completion is idempotent.
    """
    angles = np.asarray(angles, dtype=float)
    rates = np.asarray(rates, dtype=float)
    sig = None if sigma is None else np.asarray(sigma, dtype=float)
    filled = np.full(n, np.nan)
    filled_sigma = np.full(n, np.nan)
    for idx, (a, r) in enumerate(zip(angles, rates)):
        j = round((a % PERIOD) / (PERIOD / n)) % n
        if abs((a % PERIOD) - j * PERIOD / n) > 1e-9:
            raise ValueError(f"angle {a!r} is not on the pi/{n} grid")
        j = n if j == 0 else j
        filled[j - 1] = r
        if sig is not None:
            filled_sigma[j - 1] = sig[idx]
    for j in range(1, n + 1):
        if np.isnan(filled[j - 1]):
            mirror = n - j if j != n else n
            if mirror == 0:
                mirror = n
            if np.isnan(filled[mirror - 1]):
                raise ValueError(f"no rate supplied for angle {j}*pi/{n} or its mirror")
            filled[j - 1] = filled[mirror - 1]
            filled_sigma[j - 1] = filled_sigma[mirror - 1]
    has_sigma = sig is not None and not np.any(np.isnan(filled_sigma))
    return RateSeries(filled, filled_sigma if has_sigma else None)


@dataclass(frozen=True)
class TwoChannelRates:
    """The four coincidence series (++, +-, -+, --) on a shared angle grid."""

    pp: RateSeries
    pm: RateSeries
    mp: RateSeries
    mm: RateSeries

    def __post_init__(self):
        if not (self.pp.n == self.pm.n == self.mp.n == self.mm.n):
            raise ValueError("all four channels must share the angle grid")

    @property
    def n(self) -> int:
        return self.pp.n

    @property
    def angles(self) -> np.ndarray:
        return _angles(self.n)


def delta_exp(rates: RateSeries, v: float) -> float:
    """RMS residual of the normalized curve against 1 + v*cos(2*phi).

    Non-negative; zero exactly when the rates are proportional to
    1 + v*cos(2*phi_j).
    """
    r = rates.rates
    total = r.sum()
    if total <= 0:
        raise ValueError("empty data")
    resid = r / r.mean() - 1.0 - v * np.cos(2 * rates.angles)
    return float(np.sqrt(np.mean(resid**2)))


def v_fit(rates: RateSeries) -> float:
    """The visibility minimizing delta_exp: 2 * sum R cos(2phi) / sum R."""
    r = rates.rates
    total = r.sum()
    if total <= 0:
        raise ValueError("empty data")
    return float(2.0 * np.sum(r * np.cos(2 * rates.angles)) / total)


def delta_min(rates: RateSeries) -> float:
    """The fitted residual delta_exp(rates, v_fit(rates)); scale invariant."""
    return delta_exp(rates, v_fit(rates))


def delta_min_from_moments(rates: RateSeries) -> float:
    """delta_min from rate moments directly:

        sqrt( [n*sum R^2 - 2*(sum R cos 2phi)^2] / (sum R)^2 - 1 ).

    Algebraically identical to delta_min; kept as an independent route for
    cross-checking.
    """
    r = rates.rates
    c = np.cos(2 * rates.angles)
    total = r.sum()
    if total <= 0:
        raise ValueError("empty data")
    val = (r.size * np.sum(r**2) - 2.0 * np.sum(r * c) ** 2) / total**2 - 1.0
    return float(np.sqrt(max(val, 0.0)))


def fourier_b(rates: RateSeries) -> np.ndarray:
    """Coefficients b_k, k = 1..n/2, of the cosine interpolation

        R(phi_j)/<R> = 1 + sum_k b_k cos(2 k phi_j).

    Requires an even number of angles.  Returned as an array indexed from
    b_1 at position 0.  On mirror-symmetric data (R(phi) = R(pi - phi),
    which physical coincidence curves obey) the interpolation reproduces
    the data exactly; on noisy data the coefficients are the projection
    onto the symmetric part.  b_1 always equals v_fit.
    """
    n = rates.n
    if n % 2 or n < 4:
        raise ValueError("even n >= 4 required for the interpolating cosine expansion")
    norm = rates.rates / rates.rates.mean()
    phis = rates.angles
    b = np.empty(n // 2)
    for k in range(1, n // 2):
        b[k - 1] = 2.0 / n * np.sum(norm * np.cos(2 * k * phis))
    b[n // 2 - 1] = 1.0 / n * np.sum(norm * np.cos(n * phis))
    return b


def delta_min_from_fourier(rates: RateSeries) -> float:
    """delta_min recomputed from the interpolation coefficients:

        sqrt( (1/2) sum_{k=2}^{n/2-1} b_k^2 + b_{n/2}^2 ).

    Identical to delta_min on mirror-symmetric series; on noisy data it
    omits the antisymmetric noise power that delta_min counts.
    """
    b = fourier_b(rates)
    half = b[-1]
    middle = b[1:-1]
    return float(np.sqrt(0.5 * np.sum(middle**2) + half**2))


class Visibilities(NamedTuple):
    v_a: float
    v_b: float


def visibilities(rates: RateSeries) -> Visibilities:
    """The two standard visibility estimators of the coincidence curve.

    v_a is the 0 / pi/2 contrast; v_b the sqrt(2)-weighted pi/8 / 3pi/8
    combination used in correlation tests.  Quantum mechanics predicts
    both equal the curve visibility; the model family predicts a small
    positive difference v_b - v_a in its deviating regime.
    """
    try:
        r0 = rates.at(0.0)
        r90 = rates.at(PERIOD / 2)
        r22 = rates.at(PERIOD / 8)
        r67 = rates.at(3 * PERIOD / 8)
    except ValueError as exc:
        raise ValueError(f"missing angles for visibilities: {exc}") from exc
    if r0 + r90 <= 0 or r22 + r67 <= 0:
        raise ValueError("degenerate rates")
    return Visibilities(
        v_a=(r0 - r90) / (r0 + r90),
        v_b=math.sqrt(2) * (r22 - r67) / (r22 + r67),
    )


def correlation_e(tc: TwoChannelRates, phi: float) -> float:
    """The polarization correlation E(phi) from the four coincidence rates."""
    i = tc.pp.index_of(phi)
    num = tc.pp.rates[i] + tc.mm.rates[i] - tc.pm.rates[i] - tc.mp.rates[i]
    den = tc.pp.rates[i] + tc.mm.rates[i] + tc.pm.rates[i] + tc.mp.rates[i]
    if den <= 0:
        raise ValueError("degenerate rates")
    return float(num / den)


def s_param(tc: TwoChannelRates) -> float:
    """The correlation combination S = |3 E(pi/8) - E(3 pi/8)|.

    For channel data obeying the quarter-turn relabeling symmetry this
    equals 2*sqrt(2) times v_b of the (++) curve.  Note this is a
    three-to-one weighting of two correlations, not the four-term sum of
    the usual correlation tests; it is implemented exactly as defined.
    """
    return abs(3.0 * correlation_e(tc, PERIOD / 8) - correlation_e(tc, 3 * PERIOD / 8))


def v_a_from_channels(tc: TwoChannelRates) -> float:
    """Recover the 0 / pi/2 contrast from correlations: (E(0) - E(pi/2)) / 2."""
    return 0.5 * (correlation_e(tc, 0.0) - correlation_e(tc, PERIOD / 2))


class NonidealBound(NamedTuple):
    bound: float
    violated: bool
    bound_small_eta: float


def nonideal_bound(eta1: float, eta2: float, v_max_meas: float,
                   v_min_meas: float) -> NonidealBound:
    """Admissibility bound on the maximum visibility without rotational symmetry.

    For experiments whose coincidence visibility oscillates between
    v_min_meas and v_max_meas as one analyzer's absolute orientation turns,
    the model family requires (with s_j = sin(pi*eta_j/2))

        V_M <= (V_M + V_m)(s1^2 + s2^2)/3
               + (4/pi^2) (s1 s2 / (eta1 eta2)) [1 - (2/3)(s1^2 + s2^2)].

    Returns the right-hand side, the violation flag, and the small-eta
    approximation 1 - (pi^2/24)(eta1^2 + eta2^2).
    """
    if not (0 < eta1 <= 1 and 0 < eta2 <= 1):
        raise ValueError("efficiency out of range")
    if not 0 <= v_min_meas <= v_max_meas <= 1:
        raise ValueError("need 0 <= V_m <= V_M <= 1")
    s1 = math.sin(PERIOD * eta1 / 2)
    s2 = math.sin(PERIOD * eta2 / 2)
    ss = s1 * s1 + s2 * s2
    bound = (v_max_meas + v_min_meas) * ss / 3.0 + (4.0 / PERIOD**2) * (
        s1 * s2 / (eta1 * eta2)
    ) * (1.0 - 2.0 * ss / 3.0)
    approx = 1.0 - PERIOD**2 / 24.0 * (eta1**2 + eta2**2)
    return NonidealBound(bound=bound, violated=v_max_meas > bound, bound_small_eta=approx)


def sigma_delta_min(rates: RateSeries) -> float | None:
    """First-order propagated uncertainty of delta_min.

    The mean- and visibility-fit sensitivities cancel against the residual
    orthogonality, leaving sigma^2 = sum (r_j sigma_j)^2 / (n Delta <R>)^2.
    None when the series carries no uncertainties; zero for an exact fit.
    """
    if rates.sigma is None:
        return None
    r = rates.rates
    mean = r.mean()
    resid = r / mean - 1.0 - v_fit(rates) * np.cos(2 * rates.angles)
    dm = float(np.sqrt(np.mean(resid**2)))
    if dm == 0.0:
        return 0.0
    grad = resid / (rates.n * dm * mean)
    return float(np.sqrt(np.sum((grad * rates.sigma) ** 2)))


def bootstrap_sigma_delta_min(rates: RateSeries, reps: int, seed: int) -> float:
    """Bootstrap spread of delta_min under Gaussian rate noise of size sigma.

    Each replica perturbs every rate independently; replicas use
    deterministic substreams of the given seed.
    """
    if rates.sigma is None:
        raise ValueError("bootstrap requires per-rate uncertainties")
    out = np.empty(reps)
    for i in range(reps):
        rng = np.random.Generator(
            np.random.Philox(key=np.array([seed, _BOOTSTRAP_SALT + i], dtype=np.uint64))
        )
        perturbed = np.clip(rates.rates + rng.normal(0.0, rates.sigma), 0.0, None)
        out[i] = delta_min(RateSeries(perturbed))
    return float(np.std(out))


@dataclass
class TestReport:
    """Everything the inequality test produces from one rate curve."""

    delta_min: float
    sigma_delta_min: float | None
    v_fit: float
    b: list
    d_bound: float
    d_series: float
    eps: float
    v_max: float
    verdict: str
    eta: float
    v_used: float
    v_a: float | None = None
    v_b: float | None = None
    s_param: float | None = None
    k_implied: float | None = None
    v_b_minus_v_a: float | None = None
    v_b_minus_v: float | None = None
    warnings: list = field(default_factory=list)
    config_echo: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "delta_min": self.delta_min,
            "sigma_delta_min": self.sigma_delta_min,
            "v_fit": self.v_fit,
            "b": list(self.b),
            "d_bound": self.d_bound,
            "d_series": self.d_series,
            "eps": self.eps,
            "v_max": self.v_max,
            "verdict": self.verdict,
            "eta": self.eta,
            "v_used": self.v_used,
            "v_a": self.v_a,
            "v_b": self.v_b,
            "s_param": self.s_param,
            "k_implied": self.k_implied,
            "v_b_minus_v_a": self.v_b_minus_v_a,
            "v_b_minus_v": self.v_b_minus_v,
            "warnings": list(self.warnings),
            "config_echo": self.config_echo,
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)


def _decide_verdict(dm: float, sigma: float | None, d: float, warnings: list) -> str:
    if d == 0.0:
        warnings.append("deviation bound is zero at these parameters; the test has no power")
        return VERDICT_CONSISTENT
    if sigma is None:
        warnings.append(
            "no uncertainties supplied; verdict compares point values without an inconclusive band"
        )
        return VERDICT_VIOLATES if dm < d else VERDICT_CONSISTENT
    if dm + 2 * sigma < d:
        return VERDICT_VIOLATES
    if dm - 2 * sigma >= d:
        return VERDICT_CONSISTENT
    return VERDICT_INCONCLUSIVE


def analyze(data, eta: float, v_override: float | None = None,
            accidental_rate: float = 0.0, bootstrap: int = 0,
            seed: int = 0, d_method: str = "closed") -> TestReport:
    """Run the full inequality test on a rate curve or four-channel data.

    The visibility entering the bound is the fitted one by default (the
    inequality holds for any choice as long as the same value is used on
    both sides); pass v_override to use an external prediction instead.
    The optional flat accidental rate is subtracted from every rate before
    analysis.  Uncertainties, when present, are propagated to delta_min by
    first-order expansion, or by bootstrap when reps > 0.
    """
    warnings: list = []
    tc = data if isinstance(data, TwoChannelRates) else None
    rates = data.pp if tc is not None else data
    if not isinstance(rates, RateSeries):
        raise TypeError("analyze expects a RateSeries or TwoChannelRates")
    if accidental_rate:
        adjusted = rates.rates - accidental_rate
        if np.min(adjusted) < 0:
            warnings.append("accidental subtraction clipped negative rates to zero")
            adjusted = np.clip(adjusted, 0.0, None)
        rates = RateSeries(adjusted, rates.sigma)
        if tc is not None:
            tc = TwoChannelRates(
                pp=rates,
                pm=RateSeries(np.clip(tc.pm.rates - accidental_rate, 0, None), tc.pm.sigma),
                mp=RateSeries(np.clip(tc.mp.rates - accidental_rate, 0, None), tc.mp.sigma),
                mm=RateSeries(np.clip(tc.mm.rates - accidental_rate, 0, None), tc.mm.sigma),
            )

    dm = delta_min(rates)
    vf = v_fit(rates)
    v_used = vf if v_override is None else v_override
    v_for_bound = min(max(v_used, 0.0), 1.0)
    if v_used != v_for_bound:
        warnings.append(f"fitted visibility {v_used:.6f} clipped into [0, 1] for the bound")
    d = deviation_d(eta, v_for_bound, method=d_method)
    d_series = deviation_d(eta, v_for_bound, method="series")
    params = OptimalModelParams.solve(eta, v_for_bound)

    if bootstrap > 0 and rates.sigma is not None:
        sigma = bootstrap_sigma_delta_min(rates, bootstrap, seed)
    else:
        sigma = sigma_delta_min(rates)
    verdict = _decide_verdict(dm, sigma, d, warnings)

    b = list(fourier_b(rates)) if rates.n % 2 == 0 and rates.n >= 4 else []

    report = TestReport(
        delta_min=dm,
        sigma_delta_min=sigma,
        v_fit=vf,
        b=b,
        d_bound=d,
        d_series=d_series,
        eps=params.eps,
        v_max=model_v_max(eta),
        verdict=verdict,
        eta=eta,
        v_used=v_used,
        warnings=warnings,
    )

    if rates.n % 8 == 0:
        vis = visibilities(rates)
        report.v_a = vis.v_a
        report.v_b = vis.v_b
        report.v_b_minus_v_a = vis.v_b - vis.v_a
        report.v_b_minus_v = vis.v_b - vf
        if params.branch == BRANCH_DEVIATE:
            scale = (20 * math.sqrt(2) / (3 * PERIOD)) * (
                v_for_bound - model_v_max(eta)
            ) ** 1.5
            report.k_implied = report.v_b_minus_v_a / scale if scale > 0 else None
    if tc is not None:
        report.s_param = s_param(tc)
        report.v_a = v_a_from_channels(tc)
        report.v_b = report.s_param / (2 * math.sqrt(2))
    return report
