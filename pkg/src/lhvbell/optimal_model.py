"""The best model of the family for given efficiency and visibility.

For detector efficiency eta the singles constraint pins the detection
moment C_0 = pi*eta/2, and the coincidence curve of any admissible model
reaches the quantum visibility V exactly only while

    V <= v_max(eta) = sin^2(pi eta / 2) / (pi eta / 2)^2 .

Above that threshold the cosine density that would reproduce the curve
turns negative and must be clipped; the best achievable density is the
truncated cosine

    rho(z)  proportional to  (1 + cos 2z / cos 2*eps)_+ ,

whose clipping parameter eps in (0, pi/4) is fixed by matching the fitted
visibility.  The residual deviation delta(phi) of the coincidence curve
from V*cos(2*phi) then contains only fourth and higher harmonics, and its
root-mean-square value admits the closed-form lower bound deviation_d,
the quantity experiments can test against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .lhv_model import DetectionFn, LhvModel, PairDensity, ck_moment
from .periodic_math import PERIOD, PeriodicFn, default_grid_n, grid, wrap_angle

BRANCH_AGREE = "AGREE"
BRANCH_DEVIATE = "DEVIATE"

#: default series length; term n decays like 1/n^4, so the tail beyond 400
#: is below 1e-8 of the leading term for every efficiency of interest
DEFAULT_N_MAX = 400


def v_max(eta: float) -> float:
    """Largest visibility the model family reproduces exactly at efficiency eta.

    Equals sin^2(pi*eta/2)/(pi*eta/2)^2; decreasing in eta, tends to 1 for
    vanishing efficiency and to 4/pi^2 at eta = 1.
    """
    if not 0 < eta <= 1:
        raise ValueError("efficiency out of range")
    x = PERIOD * eta / 2
    return math.sin(x) ** 2 / x**2


def harmonic_damping(n, eta: float):
    """sin^2(n pi eta / 2) / (n pi eta / 2)^2, the hat's harmonic suppression."""
    x = np.asarray(n, dtype=float) * PERIOD * eta / 2
    return np.sin(x) ** 2 / x**2


def _check_eps(eps: float):
    if not 0 <= eps < PERIOD / 4:
        raise ValueError("clipping parameter out of range")


def _clip_norm(eps: float) -> float:
    """Normalization denominator pi + tan(2 eps) - 2 eps of the clipped cosine."""
    return PERIOD + math.tan(2 * eps) - 2 * eps


def a_coeff(eps: float, n: int) -> float:
    """Cosine coefficient a_n of the clipped-cosine density.

    The density is written rho(z) = (1/pi^2) * sum_n a_n cos(2nz); a_0 is 1
    by normalization and all coefficients reduce to the unclipped values
    (a_1 = 1, a_n = 0 for n >= 2) at eps = 0.
    """
    _check_eps(eps)
    if n < 0:
        raise ValueError("harmonic index must be >= 0")
    if n == 0:
        return 1.0
    if eps == 0.0:
        return 1.0 if n == 1 else 0.0
    den = _clip_norm(eps)
    if n == 1:
        return ((PERIOD - 2 * eps) / math.cos(2 * eps) + math.sin(2 * eps)) / den
    num = math.sin(2 * n * eps) - n * math.tan(2 * eps) * math.cos(2 * n * eps)
    return 2.0 / (n * (n * n - 1)) * (-1) ** n * num / den


def a_coeff_cubic(eps: float, n: int) -> float:
    """Third-order small-eps expansion of a_coeff (exact through eps^3)."""
    _check_eps(eps)
    if n < 0:
        raise ValueError("harmonic index must be >= 0")
    if n == 0:
        return 1.0
    if n == 1:
        return 1.0 + 2 * eps**2 - 8 * eps**3 / PERIOD
    return (-1) ** n * 16 * eps**3 / (3 * PERIOD)


def _a_coeff_vec(eps: float, n_max: int) -> np.ndarray:
    """a_coeff for n = 0 .. n_max as a vector."""
    _check_eps(eps)
    out = np.zeros(n_max + 1)
    out[0] = 1.0
    if n_max >= 1:
        out[1] = a_coeff(eps, 1)
    if eps > 0.0 and n_max >= 2:
        n = np.arange(2, n_max + 1, dtype=float)
        num = np.sin(2 * n * eps) - n * math.tan(2 * eps) * np.cos(2 * n * eps)
        out[2:] = 2.0 / (n * (n * n - 1)) * (-1.0) ** n * num / _clip_norm(eps)
    return out


def epsilon_solve(eta: float, v: float) -> float:
    """Clipping parameter for target visibility v at efficiency eta.

    Returns 0 when v <= v_max(eta).  Otherwise solves

        v = v_max(eta) * a_1(eps)

    for the unique root in (0, pi/4); a_1 is strictly increasing there, so
    the root is bracketed and refined to machine precision.  Raises when
    even full clipping cannot reach v (a_1 tops out at pi/2).
    """
    vm = v_max(eta)
    if not 0 <= v <= 1:
        raise ValueError("visibility out of range")
    if v <= vm:
        return 0.0
    target = v / vm
    hi = PERIOD / 4 - 1e-9
    if target >= a_coeff(hi, 1):
        raise ValueError("model family cannot reach V at this efficiency")
    return float(brentq(lambda e: a_coeff(e, 1) - target, 0.0, hi, xtol=1e-15, rtol=8.9e-16))


def epsilon_approx(eta: float, v: float) -> float:
    """Leading-order clipping parameter sqrt((v - v_max)/2), clipped at 0."""
    return math.sqrt(max(v - v_max(eta), 0.0) / 2.0)


@dataclass(frozen=True)
class OptimalModelParams:
    """Parameters (eta, v, eps, branch) of the best model.

    branch is AGREE exactly when eps = 0, i.e. when v <= v_max(eta); in the
    DEVIATE branch eps solves the visibility match to machine precision.
    """

    eta: float
    v: float
    eps: float
    branch: str

    def __post_init__(self):
        if self.branch not in (BRANCH_AGREE, BRANCH_DEVIATE):
            raise ValueError(f"unknown branch {self.branch!r}")
        if (self.branch == BRANCH_AGREE) != (self.eps == 0.0):
            raise ValueError("branch must be AGREE exactly when eps = 0")

    @classmethod
    def solve(cls, eta: float, v: float) -> "OptimalModelParams":
        eps = epsilon_solve(eta, v)
        branch = BRANCH_AGREE if eps == 0.0 else BRANCH_DEVIATE
        return cls(eta=eta, v=v, eps=eps, branch=branch)


def rho_optimal(params: OptimalModelParams, n: int | None = None) -> PairDensity:
    """The best pair density for the given parameters, sampled on the grid.

    AGREE branch: the two-term cosine whose coincidence curve matches the
    quantum prediction exactly.  Its cos(2x) amplitude uses the discrete
    first moment of the matching top-hat detection function, so the grid
    model reproduces the quantum curve to machine precision rather than to
    the hat's sampling error.

    DEVIATE branch: the clipped cosine with the solved eps, renormalized
    exactly on the grid.
    """
    n = default_grid_n() if n is None else n
    x = grid(n)
    if params.branch == BRANCH_AGREE:
        hat = DetectionFn.tophat(params.eta, n=n)
        c1d = ck_moment(hat, 1)
        coeff = params.v * (PERIOD * params.eta / 2) ** 2 / c1d**2
        if coeff > 1.0:
            if params.v <= v_max(params.eta) + 1e-12:
                # v sits within sampling error of the threshold; clamp to the
                # largest admissible amplitude
                coeff = 1.0
            else:
                raise RuntimeError(
                    "internal contradiction: AGREE branch with inadmissible amplitude"
                )
        samples = (1.0 + coeff * np.cos(2 * x)) / PERIOD**2
        return PairDensity(PeriodicFn(samples))
    eps = params.eps
    raw = np.maximum(1.0 + np.cos(2 * x) / math.cos(2 * eps), 0.0)
    return PairDensity.from_samples(raw, normalize=True)


def make_optimal_model(eta: float, v: float, n: int | None = None) -> LhvModel:
    """The best model: optimal density plus the moment-maximizing top-hat."""
    params = OptimalModelParams.solve(eta, v)
    rho = rho_optimal(params, n=n)
    hat = DetectionFn.tophat(eta, n=rho.n)
    return LhvModel(rho, hat)


def fit_clip_parameter(rho: PairDensity, method: str = "l2") -> float:
    """Recover the clipping parameter from a sampled density.

    method="l2" minimizes the L2 distance to the clipped-cosine family
    (robust to small shape perturbations); method="a1" inverts the exact
    first cosine coefficient.  Returns 0 for densities closer to unclipped.
    """
    from scipy.optimize import minimize_scalar

    from .periodic_math import to_series

    if method == "a1":
        a1 = PERIOD**2 * to_series(rho.fn, 1).coeffs[1]
        if a1 <= 1.0:
            return 0.0
        hi = PERIOD / 4 - 1e-9
        if a1 >= a_coeff(hi, 1):
            raise ValueError("first coefficient outside the clipped-cosine range")
        return float(brentq(lambda e: a_coeff(e, 1) - a1, 0.0, hi, xtol=1e-14))
    if method != "l2":
        raise ValueError(f"unknown method {method!r}")

    x = grid(rho.n)

    def distance(eps: float) -> float:
        raw = np.maximum(1.0 + np.cos(2 * x) / math.cos(2 * eps), 0.0)
        raw /= (PERIOD / rho.n) * raw.sum() * PERIOD
        return float(np.sum((raw - rho.samples) ** 2))

    res = minimize_scalar(distance, bounds=(0.0, PERIOD / 4 - 1e-6), method="bounded",
                          options={"xatol": 1e-12})
    return float(res.x)


def delta_closed(phi, eta: float, eps: float):
    """Closed form of the coincidence-curve deviation delta(phi), third order in eps.

    Zero when eps = 0.  The piecewise term switches on for |phi| beyond
    (pi/2)(1 - eta) (closed interval, matching the top-hat convention); the
    constant and cos(2*phi) pieces cancel its projections, so delta carries
    no mean and no first harmonic.
    """
    _check_eps(eps)
    if not 0 < eta <= 1:
        raise ValueError("efficiency out of range")
    scalar = np.ndim(phi) == 0
    phi_arr = np.asarray(phi, dtype=float)
    if eps == 0.0:
        out = np.zeros_like(phi_arr)
        return float(out) if scalar else out
    a = np.abs(wrap_angle(phi_arr))
    ramp = np.where(
        a >= (PERIOD / 2) * (1 - eta),
        (2 / eta**2) * (eta + 2 * a / PERIOD - 1),
        0.0,
    )
    out = (8 * eps**3 / (3 * PERIOD)) * (
        2 * v_max(eta) * np.cos(2 * phi_arr) - 1.0 + ramp
    )
    return float(out) if scalar else out


def delta_series(phi, eta: float, eps: float, n_max: int = DEFAULT_N_MAX):
    """delta(phi) summed from the exact clipped-cosine coefficients.

    delta(phi) = sum_{n>=2} a_n * harmonic_damping(n, eta) * cos(2 n phi).
    Terms fall off like 1/n^4, so the default n_max leaves a tail below
    1e-8 of the leading term.
    """
    if n_max < 2:
        raise ValueError("n_max must be >= 2")
    if not 0 < eta <= 1:
        raise ValueError("efficiency out of range")
    scalar = np.ndim(phi) == 0
    phi_flat = np.atleast_1d(np.asarray(phi, dtype=float)).ravel()
    if eps == 0.0:
        out = np.zeros_like(phi_flat)
    else:
        n = np.arange(2, n_max + 1)
        coeffs = _a_coeff_vec(eps, n_max)[2:] * harmonic_damping(n, eta)
        out = np.cos(2.0 * np.outer(phi_flat, n)) @ coeffs
    return float(out[0]) if scalar else out.reshape(np.shape(phi))


def delta_rms(eta: float, eps: float, n_max: int = DEFAULT_N_MAX) -> float:
    """Root-mean-square of delta over the period, from the exact series.

    Equals sqrt((1/2) sum_{n>=2} a_n^2 damping_n^2), the same value as
    quadrature of delta_series squared.
    """
    if eps == 0.0:
        return 0.0
    n = np.arange(2, n_max + 1)
    terms = _a_coeff_vec(eps, n_max)[2:] * harmonic_damping(n, eta)
    return float(np.sqrt(0.5 * np.sum(terms**2)))


def _deviation_prefactor(eta: float) -> float:
    vm = v_max(eta)
    return (4.0 / (3 * PERIOD)) * math.sqrt(2.0 / (3 * eta) - 0.5 - vm**2)


def deviation_d(eta: float, v: float, method: str = "closed") -> float:
    """The testable lower bound D on the RMS deviation of any model in the family.

    method="closed":  prefactor * (v - v_max)_+^(3/2), which folds in the
    leading-order clipping parameter.  Fast, differentiable in v, and the
    default reported bound.

    method="closed-eps":  the same closed form but written in the exactly
    solved clipping parameter, prefactor * 2*sqrt(2)*eps^3.

    method="series":  the RMS deviation of the actual best grid model,
    summed from the exact coefficients at the exactly solved eps.  Agrees
    with "closed-eps" to a few percent (the neglected eps^2 corrections);
    sits above "closed" because the exact eps exceeds its leading-order
    estimate.

    Zero exactly when v <= v_max(eta); increasing in v at fixed eta.
    """
    vm = v_max(eta)
    if not 0 <= v <= 1:
        raise ValueError("visibility out of range")
    if v <= vm:
        return 0.0
    if method == "closed":
        return _deviation_prefactor(eta) * (v - vm) ** 1.5
    eps = epsilon_solve(eta, v)
    if method == "closed-eps":
        return _deviation_prefactor(eta) * 2.0 * math.sqrt(2.0) * eps**3
    if method == "series":
        return delta_rms(eta, eps)
    raise ValueError(f"unknown method {method!r}")


def deviation_report(eta: float, v: float) -> dict:
    """All deviation quantities side by side, for reports and cross-checks."""
    params = OptimalModelParams.solve(eta, v)
    report = {
        "eta": eta,
        "v": v,
        "v_max": v_max(eta),
        "branch": params.branch,
        "eps": params.eps,
        "eps_approx": epsilon_approx(eta, v),
        "d_closed": deviation_d(eta, v, "closed"),
        "d_closed_eps": deviation_d(eta, v, "closed-eps"),
        "d_series": deviation_d(eta, v, "series"),
    }
    report["d_series_vs_closed_rel"] = (
        report["d_series"] / report["d_closed"] - 1.0 if report["d_closed"] else 0.0
    )
    return report


def predict_rates(params: OptimalModelParams, n_angles: int = 16,
                  two_channel: bool = False):
    """Predicted coincidence rates of the best model at phi_j = j*pi/n.

    Single channel: one series with rates (eta^2/4)(1 + v cos 2phi + delta).
    Two channel: the four coincidence series; the opposite-sign channels are
    the same curve shifted by a quarter turn, (+-) (phi) = (++) (phi + pi/2).
    """
    from .inequalities import RateSeries, TwoChannelRates

    phis = PERIOD * np.arange(1, n_angles + 1) / n_angles
    scale = params.eta**2 / 4.0

    def curve(angles):
        return scale * (1.0 + params.v * np.cos(2 * angles)
                        + delta_series(angles, params.eta, params.eps))

    if not two_channel:
        return RateSeries(curve(phis))
    same = curve(phis)
    cross = curve(phis + PERIOD / 2)
    return TwoChannelRates(
        pp=RateSeries(same), pm=RateSeries(cross),
        mp=RateSeries(cross), mm=RateSeries(same),
    )
