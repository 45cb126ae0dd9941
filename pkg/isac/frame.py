"""
OTFS frame geometry, pilot/guard/data placement and delay-Doppler transforms.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OtfsGrid:
    """Frame geometry: N Doppler bins by M delay bins with a centred pilot"""
    M: int = 64
    N: int = 16
    delta_f: float = 15e3
    k_p: Optional[int] = None
    l_p: Optional[int] = None
    l_max: int = 8

    def __post_init__(self):
        if self.M < 1 or self.N < 1:
            raise ValueError(f"M and N must be positive, got M={self.M}, N={self.N}")
        if self.delta_f <= 0:
            raise ValueError(f"delta_f must be positive, got {self.delta_f}")
        if self.k_p is None:
            object.__setattr__(self, "k_p", self.N // 2)
        if self.l_p is None:
            object.__setattr__(self, "l_p", self.M // 2)
        if not 0 <= self.k_p < self.N:
            raise ValueError(f"k_p must lie in [0, {self.N}), got {self.k_p}")
        if not 0 <= self.l_p < self.M:
            raise ValueError(f"l_p must lie in [0, {self.M}), got {self.l_p}")
        if self.l_max < 0:
            raise ValueError(f"l_max must be non-negative, got {self.l_max}")
        if self.l_p - self.l_max < 0 or self.l_p + self.l_max >= self.M:
            raise ValueError(
                f"guard band [l_p-l_max, l_p+l_max] = [{self.l_p - self.l_max}, "
                f"{self.l_p + self.l_max}] does not fit in M={self.M} delay bins"
            )

    @property
    def T_s(self) -> float:
        return 1.0 / self.delta_f

    @property
    def T_f(self) -> float:
        return self.N * self.T_s

    @property
    def bandwidth(self) -> float:
        return self.M * self.delta_f

    @property
    def doppler_resolution(self) -> float:
        """Doppler bin width 1/(N T_s) in Hz"""
        return 1.0 / (self.N * self.T_s)

    @property
    def size(self) -> int:
        return self.M * self.N

    @property
    def n_data(self) -> int:
        return self.N * (self.M - 2 * self.l_max - 1)


@dataclass(frozen=True)
class DdFrame:
    """Complex delay-Doppler symbol grid indexed [k, l]; read-only once built"""
    grid: np.ndarray
    otfs: OtfsGrid = field(repr=False)

    def __post_init__(self):
        symbols = np.array(self.grid, dtype=complex)
        if symbols.shape != (self.otfs.N, self.otfs.M):
            raise ValueError(
                f"frame shape {symbols.shape} does not match grid ({self.otfs.N}, {self.otfs.M})"
            )
        symbols.setflags(write=False)
        object.__setattr__(self, "grid", symbols)

    def vec(self) -> np.ndarray:
        """Row-major vectorisation, flat index k*M + l"""
        return self.grid.reshape(-1)


def guard_index_sets(grid: OtfsGrid) -> Tuple[np.ndarray, np.ndarray]:
    """Return the guard Doppler set K_g and guard delay set L_g"""
    doppler_set = np.array([k for k in range(grid.N) if k != grid.k_p], dtype=int)
    delay_set = np.array(
        [l for l in range(grid.l_p - grid.l_max, grid.l_p + grid.l_max + 1) if l != grid.l_p],
        dtype=int,
    )
    return doppler_set, delay_set


def data_mask(grid: OtfsGrid) -> np.ndarray:
    """Boolean N x M mask of the data cells"""
    mask = np.ones((grid.N, grid.M), dtype=bool)
    mask[:, grid.l_p - grid.l_max: grid.l_p + grid.l_max + 1] = False
    return mask


def place_symbols(grid: OtfsGrid, x_p: float, data) -> DdFrame:
    """Build a transmit frame: pilot at (k_p, l_p), zero guard band, data elsewhere"""
    if x_p <= 0:
        raise ValueError(f"pilot amplitude x_p must be positive, got {x_p}")
    data = np.asarray(data, dtype=complex).reshape(-1)
    if data.size != grid.n_data:
        raise ValueError(f"expected {grid.n_data} data symbols, got {data.size}")

    symbols = np.zeros((grid.N, grid.M), dtype=complex)
    # Boolean assignment fills in row-major (k, then l) order
    symbols[data_mask(grid)] = data
    symbols[grid.k_p, grid.l_p] = x_p
    return DdFrame(symbols, grid)


def qpsk_symbols(n: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-power QPSK symbols"""
    bits = rng.integers(0, 2, size=(n, 2))
    return ((1 - 2 * bits[:, 0]) + 1j * (1 - 2 * bits[:, 1])) / np.sqrt(2)


def isfft(dd: DdFrame) -> np.ndarray:
    """X_TF[n, m] = sum_k sum_l X[k, l] exp(j2pi(nk/N - ml/M)), unnormalised"""
    x = dd.grid
    return x.shape[0] * np.fft.fft(np.fft.ifft(x, axis=0), axis=1)


def sfft(tf: np.ndarray, otfs: OtfsGrid) -> DdFrame:
    """Inverse of isfft, carrying the 1/(NM) factor"""
    tf = np.asarray(tf, dtype=complex)
    return DdFrame(np.fft.fft(np.fft.ifft(tf, axis=1), axis=0) / tf.shape[0], otfs)


def vec_index(k: int, l: int, grid: OtfsGrid) -> int:
    if not (0 <= k < grid.N and 0 <= l < grid.M):
        raise ValueError(f"cell ({k}, {l}) outside the {grid.N}x{grid.M} grid")
    return k * grid.M + l


def unvec_index(i: int, grid: OtfsGrid) -> Tuple[int, int]:
    if not 0 <= i < grid.size:
        raise ValueError(f"flat index {i} outside [0, {grid.size})")
    k, l = divmod(i, grid.M)
    return int(k), int(l)
