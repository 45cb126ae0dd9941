"""
Closed-form performance analysis of the ratio estimator.

Nakagami moment matching of the noisy peak amplitudes, effective sensing
probability, MSE approximation, its upper bound and the error sandwich between
them. Gamma ratios are evaluated as log-gamma differences throughout.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special

from .frame import OtfsGrid

logger = logging.getLogger(__name__)

CF_EPS = 1e-15
CF_MAX_ITER = 200_000
FPMIN = 1e-300


def ln_gamma(x: float) -> float:
    """Natural log of Gamma(x) for x > 0"""
    if x <= 0:
        raise ValueError(f"ln_gamma requires x > 0, got {x}")
    return float(special.gammaln(x))


def ln_beta(a: float, b: float) -> float:
    return ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)


def _beta_continued_fraction(a: float, b: float, x: float) -> float:
    """Modified Lentz evaluation of the incomplete-beta continued fraction"""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < FPMIN:
        d = FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < FPMIN:
            d = FPMIN
        c = 1.0 + aa / c
        if abs(c) < FPMIN:
            c = FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < FPMIN:
            d = FPMIN
        c = 1.0 + aa / c
        if abs(c) < FPMIN:
            c = FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < CF_EPS:
            return h
    logger.warning(f"incomplete-beta continued fraction did not converge (a={a}, b={b}, x={x})")
    return h


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)"""
    if a <= 0 or b <= 0:
        raise ValueError(f"betainc_reg requires a, b > 0, got a={a}, b={b}")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"betainc_reg requires 0 <= x <= 1, got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    log_front = a * math.log(x) + b * math.log1p(-x) - ln_beta(a, b)
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _beta_continued_fraction(a, b, x) / a
    return 1.0 - math.exp(log_front) * _beta_continued_fraction(b, a, 1.0 - x) / b


def _log_gauss_2f1_pattern(a: float, b: float, x: float) -> float:
    """
    log 2F1(a, b; b+1; -x) for x > 0 and a > b, through

        2F1(a, b; b+1; -x) = b x^-b B(b, a-b) I_w(b, a-b),  w = x / (1 + x)
    """
    w = x / (1.0 + x)
    tail = betainc_reg(b, a - b, w)
    if tail <= 0.0:
        return -math.inf
    return math.log(b) - b * math.log(x) + ln_beta(b, a - b) + math.log(tail)


def gauss_2f1_neg(a: float, b: float, c: float, x: float) -> float:
    """Gauss hypergeometric 2F1(a, b; c; -x) for x >= 0"""
    if c <= 0:
        raise ValueError(f"gauss_2f1_neg requires c > 0, got {c}")
    if x < 0:
        raise ValueError(f"gauss_2f1_neg requires x >= 0, got {x}")
    if x == 0:
        return 1.0
    if math.isclose(c, b, rel_tol=1e-12, abs_tol=0.0):
        return (1.0 + x) ** (-a)
    if math.isclose(c, a, rel_tol=1e-12, abs_tol=0.0):
        return (1.0 + x) ** (-b)
    if math.isclose(c, b + 1.0, rel_tol=1e-12, abs_tol=0.0) and a > b:
        return math.exp(_log_gauss_2f1_pattern(a, b, x))
    if math.isclose(c, a + 1.0, rel_tol=1e-12, abs_tol=0.0) and b > a:
        return math.exp(_log_gauss_2f1_pattern(b, a, x))
    if x >= 1.0:
        raise ValueError(f"2F1({a}, {b}; {c}; -{x}) is outside the convergent series regime")

    # Direct series for |x| < 1
    total = 1.0
    term = 1.0
    for n in range(100_000):
        term *= (a + n) * (b + n) / ((c + n) * (n + 1)) * (-x)
        total += term
        if abs(term) < 1e-17 * abs(total):
            return total
    logger.warning(f"2F1 series truncated before convergence (a={a}, b={b}, c={c}, x={x})")
    return total


@dataclass(frozen=True)
class NakagamiParams:
    """Nakagami-m approximation of a noisy amplitude: Z^2 ~ Gamma(varpi, omega/varpi)"""
    varpi: float
    omega: float
    excess: Optional[float] = None

    def __post_init__(self):
        if self.varpi < 0.5:
            raise ValueError(f"Nakagami shape must be >= 1/2, got {self.varpi}")
        if self.omega <= 0:
            raise ValueError(f"Nakagami spread must be positive, got {self.omega}")

    @property
    def vartheta(self) -> float:
        return self.varpi / self.omega

    @property
    def shape_excess(self) -> float:
        """varpi - 1, exact when built by nakagami_params"""
        return self.varpi - 1.0 if self.excess is None else self.excess


def nakagami_params(z_prime: float, sigma2: float) -> NakagamiParams:
    """Moment-match |Z' + n|, n ~ CN(0, sigma2), to a Nakagami distribution"""
    if sigma2 <= 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    z2 = float(z_prime) ** 2
    omega = z2 + sigma2
    spread = 2.0 * z2 * sigma2 + sigma2 ** 2
    return NakagamiParams(varpi=omega ** 2 / spread, omega=omega, excess=z2 ** 2 / spread)


def _clamp_probability(value: float, label: str) -> float:
    if value < 0.0 or value > 1.0:
        logger.warning(f"{label} = {value!r} clamped to [0, 1]")
        return min(max(value, 0.0), 1.0)
    return value


def p_eff_closed(z2_prime: float, z3_prime: float, sigma2: float) -> float:
    """Probability that the noisy Z_k2 exceeds Z_k3, the correct side when z2' >= z3'"""
    if z2_prime < 0 or z3_prime < 0:
        raise ValueError("side-peak amplitudes must be non-negative")
    if z2_prime == 0 and z3_prime == 0:
        raise ValueError("both side-peak amplitudes are zero")
    if sigma2 < 0:
        raise ValueError(f"sigma2 must be non-negative, got {sigma2}")
    if sigma2 == 0:
        return 0.5 if z2_prime == z3_prime else 1.0

    n2 = nakagami_params(z2_prime, sigma2)
    n3 = nakagami_params(z3_prime, sigma2)
    if z2_prime >= z3_prime:
        big, small = n2, n3
    else:
        big, small = n3, n2

    # Gamma(w_s + w_b) / (Gamma(w_s + 1) Gamma(w_b)) (t_s/t_b)^w_s 2F1(w_b + w_s, w_s; w_s + 1; -t_s/t_b)
    x = small.vartheta / big.vartheta
    log_value = (
        ln_gamma(small.varpi + big.varpi)
        - ln_gamma(small.varpi + 1.0)
        - ln_gamma(big.varpi)
        + small.varpi * math.log(x)
        + _log_gauss_2f1_pattern(big.varpi + small.varpi, small.varpi, x)
    )
    p_big = _clamp_probability(math.exp(log_value), "effective sensing probability")
    return p_big if z2_prime >= z3_prime else 1.0 - p_big


@dataclass(frozen=True)
class KernelAmps:
    """Noiseless Dirichlet amplitudes at the peak and both neighbours"""
    a_k1: float
    a_k2: float
    a_k3: float
    psi_prime: float

    @property
    def side_amp(self) -> float:
        """The larger neighbour, i.e. the correct side peak"""
        return max(self.a_k2, self.a_k3)


def _dirichlet_amp(d: float, n: int, x_p: float) -> float:
    if abs(d) < 1e-12:
        return float(x_p)
    return float(abs(x_p / n * math.sin(math.pi * d) / math.sin(math.pi * d / n)))


def kernel_amps(nu_true: float, grid: OtfsGrid, x_p: float = 1.0) -> KernelAmps:
    N = grid.N
    x = nu_true * N * grid.T_s + grid.k_p
    k1 = math.floor(x + 0.5)
    a1 = _dirichlet_amp(x - k1, N, x_p)
    a2 = _dirichlet_amp(x - (k1 + 1), N, x_p)
    a3 = _dirichlet_amp(x - (k1 - 1), N, x_p)
    s, c = math.sin(math.pi / N), math.cos(math.pi / N)
    if a2 >= a3:
        psi = math.atan(s * a2 / (a1 + a2 * c))
    else:
        psi = -math.atan(s * a3 / (a1 + a3 * c))
    return KernelAmps(a_k1=a1, a_k2=a2, a_k3=a3, psi_prime=psi)


def p_eff_average(gain_abs: float, sigma2: float, grid: OtfsGrid, x_p: float = 1.0,
                  n_points: int = 2000) -> float:
    """Closed-form effective sensing probability averaged over uniform fractional offsets"""
    # P(e) = P(-e), so average over midpoints of (0, 1/2)
    offsets = (np.arange(n_points) + 0.5) / (2.0 * n_points)
    total = 0.0
    for e in offsets:
        amps = kernel_amps(e * grid.doppler_resolution, grid, x_p)
        total += p_eff_closed(gain_abs * amps.a_k2, gain_abs * amps.a_k3, sigma2)
    return total / n_points


def _mse_prefactor(amps: KernelAmps, grid: OtfsGrid) -> float:
    return math.sin(amps.psi_prime) ** 4 / (
        math.sin(math.pi / grid.N) ** 2 * math.pi ** 2 * grid.T_s ** 2
    )


def _check_peaks(z1_prime: float, z2_prime: float):
    if not z1_prime > z2_prime > 0:
        raise ValueError(f"need z1' > z2' > 0, got z1'={z1_prime}, z2'={z2_prime}")


def _gamma_ratio(n1: NakagamiParams, n2: NakagamiParams) -> float:
    """Gamma(w2 - 1/2) Gamma(w1 + 1/2) / (Gamma(w2) Gamma(w1))"""
    return math.exp(
        ln_gamma(n2.varpi - 0.5) + ln_gamma(n1.varpi + 0.5)
        - ln_gamma(n2.varpi) - ln_gamma(n1.varpi)
    )


def _clamp_mse(value: float, label: str) -> float:
    if value < 0:
        logger.warning(f"{label} = {value!r} clamped to 0")
        return 0.0
    return value


def mse_approx(amps: KernelAmps, z1_prime: float, z2_prime: float, sigma2: float,
               grid: OtfsGrid) -> float:
    """Approximate MSE (Hz^2) given correct peak and side-peak selection"""
    _check_peaks(z1_prime, z2_prime)
    n1 = nakagami_params(z1_prime, sigma2)
    n2 = nakagami_params(z2_prime, sigma2)
    if n2.shape_excess <= 0.0:
        raise ValueError(f"side-peak amplitude {z2_prime} too small against sigma2={sigma2}")
    ratio = z1_prime / z2_prime
    theta_ratio = n2.vartheta / n1.vartheta
    first = _gamma_ratio(n1, n2) * math.sqrt(theta_ratio)
    second = n1.varpi / n2.shape_excess * theta_ratio
    value = _mse_prefactor(amps, grid) * (ratio ** 2 - 2.0 * ratio * first + second)
    return _clamp_mse(value, "MSE approximation")


def mse_upper(amps: KernelAmps, z1_prime: float, z2_prime: float, sigma2: float,
              grid: OtfsGrid) -> float:
    """Upper bound of the MSE (Hz^2)"""
    _check_peaks(z1_prime, z2_prime)
    n1 = nakagami_params(z1_prime, sigma2)
    n2 = nakagami_params(z2_prime, sigma2)
    if n2.shape_excess <= 0.0:
        raise ValueError(f"side-peak Nakagami shape {n2.varpi} <= 1: second moment diverges")
    ratio = z1_prime / z2_prime
    theta_ratio = n2.vartheta / n1.vartheta
    first = math.sqrt(n1.varpi * theta_ratio / n2.varpi)
    second = n1.varpi / n2.shape_excess * theta_ratio
    value = _mse_prefactor(amps, grid) * (ratio ** 2 - 2.0 * ratio * first + second)
    return _clamp_mse(value, "MSE upper bound")


def mse_upper_gain(amps: KernelAmps, gain_abs: float, sigma2: float, grid: OtfsGrid) -> float:
    """MSE upper bound as a function of the cascaded LoS gain |h^UIB|"""
    prefactor = _mse_prefactor(amps, grid)
    a1, a2 = amps.a_k1, amps.side_amp
    if prefactor == 0.0 or a2 == 0.0:
        return 0.0
    h2 = gain_abs ** 2
    if h2 * a2 ** 2 == 0.0:
        return math.inf
    p1 = h2 * a1 ** 2 + sigma2
    p2 = h2 * a2 ** 2 + sigma2
    value = (a1 / a2) ** 2 - 2.0 * (a1 / a2) * math.sqrt(p1 / p2) + p1 * p2 / (h2 * a2 ** 2) ** 2
    return _clamp_mse(prefactor * value, "MSE upper bound")


def _stirling_tail(x: float) -> float:
    return 1.0 + 1.0 / (12.0 * x) + 1.0 / (288.0 * x)


def mse_error_sandwich(amps: KernelAmps, z1_prime: float, z2_prime: float, sigma2: float,
                       grid: OtfsGrid):
    """Bounds (delta_lower, delta_upper) on mse_upper - mse_approx"""
    _check_peaks(z1_prime, z2_prime)
    n1 = nakagami_params(z1_prime, sigma2)
    n2 = nakagami_params(z2_prime, sigma2)
    w1, w2 = n1.varpi, n2.varpi
    if n1.shape_excess <= 0.0 or n2.shape_excess <= 0.0:
        raise ValueError(f"error sandwich needs both Nakagami shapes > 1, got {w1}, {w2}")
    core = math.exp(w1 * math.log1p(1.0 / (2.0 * w1)) + n2.shape_excess * math.log1p(-1.0 / (2.0 * w2)))
    alpha_lower = core / (_stirling_tail(w1) * _stirling_tail(w2))
    alpha_upper = core * _stirling_tail(w1 + 0.5) * _stirling_tail(w2 - 0.5)
    scale = (2.0 * _mse_prefactor(amps, grid) * (z1_prime / z2_prime)
             * math.sqrt(w1 / w2) * math.sqrt(n2.vartheta / n1.vartheta))
    return scale * (alpha_lower - 1.0), scale * (alpha_upper - 1.0)


def ratio_density(r, num: NakagamiParams, den: NakagamiParams):
    """Density of Z_num / Z_den for independent Nakagami amplitudes"""
    r = np.asarray(r, dtype=float)
    wn, wd = num.varpi, den.varpi
    tn, td = num.vartheta, den.vartheta
    log_const = (math.log(2.0) + wd * math.log(td) + wn * math.log(tn)
                 + ln_gamma(wn + wd) - ln_gamma(wn) - ln_gamma(wd))
    with np.errstate(divide="ignore"):
        log_f = log_const + (2.0 * wn - 1.0) * np.log(r) - (wn + wd) * np.log(tn * r ** 2 + td)
    return np.where(r > 0, np.exp(log_f), 0.0)


def ratio_mean(num: NakagamiParams, den: NakagamiParams) -> float:
    if den.varpi <= 0.5:
        raise ValueError(f"mean of the ratio needs denominator shape > 1/2, got {den.varpi}")
    return math.exp(
        ln_gamma(den.varpi - 0.5) + ln_gamma(num.varpi + 0.5)
        - ln_gamma(den.varpi) - ln_gamma(num.varpi)
    ) * math.sqrt(den.vartheta / num.vartheta)


def ratio_second_moment(num: NakagamiParams, den: NakagamiParams) -> float:
    if den.shape_excess <= 0.0:
        raise ValueError(f"second moment of the ratio needs denominator shape > 1, got {den.varpi}")
    return num.varpi / den.shape_excess * den.vartheta / num.vartheta
