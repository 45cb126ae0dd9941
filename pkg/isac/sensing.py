"""
Ratio-based Doppler (velocity) estimation from the LoS delay bin, with the
integer-peak baseline and a brute-force profile-fit oracle.
"""

import enum
import logging
from dataclasses import dataclass

import numpy as np

from .channel import SPEED_OF_LIGHT, dirichlet
from .frame import DdFrame, OtfsGrid

logger = logging.getLogger(__name__)


class Side(enum.Enum):
    RIGHT = "right"
    LEFT = "left"


@dataclass(frozen=True)
class SenseReport:
    """Outcome of one ratio estimate"""
    z: np.ndarray
    k1: int
    k2: int
    k3: int
    side: Side
    psi_hat: float
    nu_hat: float
    m: int


def extract_los_bin(y: DdFrame, grid: OtfsGrid, l_los: int) -> np.ndarray:
    """Amplitudes |Y[k, l_los]| over all Doppler bins"""
    if not 0 <= l_los < grid.M:
        raise ValueError(f"LoS delay bin {l_los} outside [0, {grid.M})")
    return np.abs(y.grid[:, l_los])


def find_los_bin(y: DdFrame, grid: OtfsGrid, sigma2: float) -> int:
    """Smallest delay bin in [l_p, l_p + l_max] whose peak amplitude exceeds 6 sigma"""
    threshold = 6.0 * np.sqrt(sigma2)
    for l in range(grid.l_p, grid.l_p + grid.l_max + 1):
        if np.max(np.abs(y.grid[:, l])) > threshold:
            return l
    raise ValueError(f"no delay bin in [{grid.l_p}, {grid.l_p + grid.l_max}] exceeds 6 sigma")


def _check_amplitudes(z, grid: OtfsGrid) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.ndim != 1 or z.size != grid.N:
        raise ValueError(f"expected {grid.N} Doppler amplitudes, got shape {z.shape}")
    if z.size < 3:
        raise ValueError(f"ratio estimation needs N >= 3 Doppler bins, got {z.size}")
    if np.any(z < 0):
        raise ValueError("amplitudes must be non-negative")
    if not np.any(z > 0):
        raise ValueError("no pilot energy in the LoS delay bin")
    return z


def wrap_doppler(nu: float, grid: OtfsGrid):
    """Fold nu into [-1/(2 T_s), 1/(2 T_s)); returns (folded nu, m)"""
    m = int(np.floor(nu * grid.T_s + 0.5))
    return nu - m / grid.T_s, m


def ratio_estimate(z, grid: OtfsGrid) -> SenseReport:
    """Peak/side-peak ratio estimate of the LoS Doppler"""
    z = _check_amplitudes(z, grid)
    N = grid.N
    k1 = int(np.argmax(z))
    k2 = (k1 + 1) % N
    k3 = (k1 - 1) % N
    s, c = np.sin(np.pi / N), np.cos(np.pi / N)

    # Z_k2 == Z_k3 resolves to the right side
    if z[k2] >= z[k3]:
        side = Side.RIGHT
        psi = np.arctan(s * z[k2] / (z[k1] + z[k2] * c))
    else:
        side = Side.LEFT
        psi = -np.arctan(s * z[k3] / (z[k1] + z[k3] * c))

    raw = (k1 - grid.k_p) / (N * grid.T_s) + psi / (np.pi * grid.T_s)
    nu_hat, m = wrap_doppler(raw, grid)
    return SenseReport(z=z, k1=k1, k2=k2, k3=k3, side=side,
                       psi_hat=float(psi), nu_hat=float(nu_hat), m=m)


def integer_peak_estimate(z, grid: OtfsGrid) -> float:
    """On-grid peak without fractional correction"""
    z = _check_amplitudes(z, grid)
    k1 = int(np.argmax(z))
    nu_hat, _ = wrap_doppler((k1 - grid.k_p) / (grid.N * grid.T_s), grid)
    return float(nu_hat)


def oracle_grid_estimate(z, grid: OtfsGrid, oversample: int = 64) -> float:
    """Least-squares fit of the Dirichlet amplitude profile over an oversampled Doppler grid"""
    if oversample < 64:
        raise ValueError(f"oversample must be at least 64, got {oversample}")
    z = np.asarray(z, dtype=float)
    N = grid.N
    steps = np.arange(N * oversample) - (N * oversample) // 2
    candidates = steps / (oversample * N * grid.T_s)
    k = np.arange(N)
    profiles = np.abs(dirichlet(candidates[:, None] * N * grid.T_s + grid.k_p - k[None, :], N))
    # Best non-negative scale per candidate; residual = |z|^2 - (z.a)^2 / |a|^2
    proj = profiles @ z
    energy = np.sum(profiles ** 2, axis=1)
    residual = z @ z - proj ** 2 / energy
    return float(candidates[int(np.argmin(residual))])


def doppler_to_velocity(nu: float, wavelength: float, theta_u: float) -> float:
    """Radial user speed in m/s from the LoS Doppler"""
    cos_theta = np.cos(theta_u)
    if abs(cos_theta) < 1e-12:
        raise ValueError("velocity undefined for cos(theta_u) = 0")
    return float(nu * wavelength / cos_theta)


def max_velocity(grid: OtfsGrid, f_c_hz: float) -> float:
    """Velocity limit lambda / T_s in m/s"""
    return (SPEED_OF_LIGHT / f_c_hz) / grid.T_s
