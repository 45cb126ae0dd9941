"""
Cascaded user-IRS-BS channel model in the delay-Doppler domain.

Path parameters, steering vectors, the per-pair input-output matrices Psi,
effective channel synthesis and noisy received-frame simulation.
"""

import logging
from dataclasses import dataclass
from typing import Iterator, Tuple

import numpy as np
from scipy import sparse

from .frame import DdFrame, OtfsGrid

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299_792_458.0
UNIT_TOL = 1e-9


def _check_angle(name: str, value: float):
    if not -np.pi <= value < np.pi:
        raise ValueError(f"{name} must lie in [-pi, pi), got {value}")


@dataclass(frozen=True)
class PathUI:
    """User-to-IRS path"""
    h: complex
    l_tau: int
    nu: float
    phi: float
    psi: float

    def __post_init__(self):
        if self.l_tau < 0:
            raise ValueError(f"l_tau must be non-negative, got {self.l_tau}")
        _check_angle("phi", self.phi)
        _check_angle("psi", self.psi)


@dataclass(frozen=True)
class PathIB:
    """IRS-to-BS path"""
    h: complex
    l_tau: int
    nu: float
    theta_bs: float
    phi: float
    psi: float

    def __post_init__(self):
        if self.l_tau < 0:
            raise ValueError(f"l_tau must be non-negative, got {self.l_tau}")
        _check_angle("theta_bs", self.theta_bs)
        _check_angle("phi", self.phi)
        _check_angle("psi", self.psi)


def steer_irs(u: float, v: float, n_i1: int, n_i2: int) -> np.ndarray:
    """IRS array response; first panel axis outer, second axis inner"""
    return np.kron(np.exp(1j * u * np.arange(n_i1)), np.exp(1j * v * np.arange(n_i2)))


def steer_bs(theta: float, n_b: int) -> np.ndarray:
    """BS uniform linear array response"""
    return np.exp(1j * theta * np.arange(n_b))


@dataclass(frozen=True)
class Scenario:
    """One physical instance; index 0 of each path list is the LoS path"""
    grid: OtfsGrid
    ui_paths: Tuple[PathUI, ...]
    ib_paths: Tuple[PathIB, ...]
    n_b: int
    n_i1: int
    n_i2: int
    sigma2: float
    x_p: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "ui_paths", tuple(self.ui_paths))
        object.__setattr__(self, "ib_paths", tuple(self.ib_paths))
        if not self.ui_paths or not self.ib_paths:
            raise ValueError("scenario needs at least one UI path and one IB path")
        if min(self.n_b, self.n_i1, self.n_i2) < 1:
            raise ValueError(
                f"array sizes must be positive, got n_b={self.n_b}, n_i1={self.n_i1}, n_i2={self.n_i2}"
            )
        if self.sigma2 < 0:
            raise ValueError(f"sigma2 must be non-negative, got {self.sigma2}")
        if self.x_p <= 0:
            raise ValueError(f"x_p must be positive, got {self.x_p}")
        for name, paths in (("ui_paths", self.ui_paths), ("ib_paths", self.ib_paths)):
            los_delay = paths[0].l_tau
            if any(p.l_tau <= los_delay for p in paths[1:]):
                raise ValueError(f"{name}[0] (LoS) must have strictly minimal delay")
        max_delay = max(p.l_tau for p in self.ui_paths) + max(p.l_tau for p in self.ib_paths)
        if max_delay > self.grid.l_max:
            raise ValueError(f"combined delay {max_delay} exceeds l_max={self.grid.l_max}")
        nu_limit = 1.0 / (2.0 * self.grid.T_s)
        max_nu = max(abs(p1.nu + p2.nu) for p1 in self.ui_paths for p2 in self.ib_paths)
        if max_nu >= nu_limit:
            raise ValueError(f"cascaded Doppler {max_nu:.3f} Hz not representable (limit {nu_limit:.3f} Hz)")

    @property
    def n_i(self) -> int:
        return self.n_i1 * self.n_i2

    @property
    def irs_shape(self) -> Tuple[int, int]:
        return self.n_i1, self.n_i2

    @property
    def snr_db(self) -> float:
        if self.sigma2 == 0:
            return float("inf")
        return float(10 * np.log10(self.x_p ** 2 / self.sigma2))

    @property
    def los_delay(self) -> int:
        return self.ui_paths[0].l_tau + self.ib_paths[0].l_tau

    @property
    def los_bin(self) -> int:
        return self.grid.l_p + self.los_delay

    @property
    def los_nu(self) -> float:
        return self.ui_paths[0].nu + self.ib_paths[0].nu

    @property
    def los_gain_abs(self) -> float:
        """|h_1^IB h_1^UI|"""
        return float(abs(self.ui_paths[0].h * self.ib_paths[0].h))

    @property
    def a_los(self) -> np.ndarray:
        """BS steering vector of the LoS IB path"""
        return steer_bs(self.ib_paths[0].theta_bs, self.n_b)

    @property
    def a_theta(self) -> np.ndarray:
        """Cascaded IRS steering of the LoS pair: conj(a_I^UI) * a_I^IB"""
        return irs_pair_vector(self.ui_paths[0], self.ib_paths[0], self.irs_shape)

    @property
    def n_pairs(self) -> int:
        return len(self.ui_paths) * len(self.ib_paths)

    def pairs(self) -> Iterator[Tuple[PathUI, PathIB]]:
        """Path pairs in fixed order q = i1 * L_IB + i2"""
        for p1 in self.ui_paths:
            for p2 in self.ib_paths:
                yield p1, p2


@dataclass(frozen=True)
class ScenarioParams:
    """Random scenario generation settings"""
    grid: OtfsGrid
    n_b: int = 4
    n_i1: int = 8
    n_i2: int = 8
    l_ui: int = 4
    l_ib: int = 4
    v_max_kmh: float = 120.0
    f_c_hz: float = 28e9
    snr_db: float = 20.0
    x_p: float = 1.0
    ib_doppler: bool = False

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.f_c_hz

    @property
    def nu_max(self) -> float:
        return (self.v_max_kmh / 3.6) / self.wavelength

    @property
    def sigma2(self) -> float:
        return self.x_p ** 2 / 10 ** (self.snr_db / 10)


def irs_pair_vector(p1: PathUI, p2: PathIB, irs_shape: Tuple[int, int]) -> np.ndarray:
    """v such that a_I^H(IB) diag(xi) a_I(UI) = v^H xi"""
    a_ui = steer_irs(p1.phi, p1.psi, *irs_shape)
    a_ib = steer_irs(p2.phi, p2.psi, *irs_shape)
    return np.conj(a_ui) * a_ib


def _check_beams(r: np.ndarray, xi: np.ndarray, n_b: int, n_i: int):
    if r.shape != (n_b,):
        raise ValueError(f"combiner length {r.shape} does not match n_b={n_b}")
    if xi.shape != (n_i,):
        raise ValueError(f"IRS phase vector length {xi.shape} does not match n_i={n_i}")
    if abs(np.linalg.norm(r) - 1.0) > UNIT_TOL:
        raise ValueError(f"combiner must have unit norm, got {np.linalg.norm(r):.12f}")
    if np.max(np.abs(np.abs(xi) - 1.0)) > UNIT_TOL:
        raise ValueError("IRS phase vector entries must have unit modulus")


def beta(r, xi, p1: PathUI, p2: PathIB, irs_shape: Tuple[int, int]) -> complex:
    """r^H a_B(theta) a_I^H(IB) diag(xi) a_I(UI)"""
    r = np.asarray(r, dtype=complex)
    xi = np.asarray(xi, dtype=complex)
    _check_beams(r, xi, r.size, irs_shape[0] * irs_shape[1])
    bs_term = np.vdot(r, steer_bs(p2.theta_bs, r.size))
    irs_term = np.vdot(irs_pair_vector(p1, p2, irs_shape), xi)
    return complex(bs_term * irs_term)


def cascaded_gain(p1: PathUI, p2: PathIB, grid: OtfsGrid, l_rx: int) -> complex:
    """h^IB h^UI with both phase factors of the cascaded gain, beta excluded"""
    l_sum = p1.l_tau + p2.l_tau
    if l_rx < l_sum:
        raise ValueError(f"delay bin {l_rx} precedes the pair delay {l_sum}")
    tau_ui = p1.l_tau / (grid.M * grid.delta_f)
    cross = np.exp(2j * np.pi * p2.nu * tau_ui)
    shift = np.exp(2j * np.pi * (p1.nu + p2.nu) * (l_rx - l_sum) / (grid.M * grid.delta_f))
    return complex(p2.h * p1.h * cross * shift)


def pair_coefficient(p1: PathUI, p2: PathIB, grid: OtfsGrid) -> complex:
    return cascaded_gain(p1, p2, grid, p1.l_tau + p2.l_tau)


def dirichlet(x, n: int) -> np.ndarray:
    """(1/n) sum_{i<n} exp(j 2 pi x i / n), evaluated by direct summation"""
    x = np.asarray(x, dtype=float)
    idx = np.arange(n)
    return np.exp(2j * np.pi * x[..., None] * idx / n).mean(axis=-1)


def psi_blocks(p1: PathUI, p2: PathIB, grid: OtfsGrid, truncated: bool = False):
    """
    Nonzero structure of Psi for one pair.

    Returns (l_tau, values) with values[k, l, k'] the entry at row k*M + l and
    column k'*M + (l - l_tau) mod M.
    """
    l_tau = p1.l_tau + p2.l_tau
    if l_tau > grid.l_max:
        raise ValueError(f"pair delay {l_tau} exceeds l_max={grid.l_max}")
    N, M = grid.N, grid.M
    nu = p1.nu + p2.nu
    k = np.arange(N)
    shift = nu * N * grid.T_s
    kernel = dirichlet(k[None, :] - k[:, None] + shift, N)          # [k, k']
    l = np.arange(M)
    l_src = (l - l_tau) % M
    delay_phase = np.exp(-2j * np.pi * nu * l_src / (M * grid.delta_f))
    wrap_phase = np.exp(-2j * np.pi * (k / N + nu * grid.T_s))      # [k']
    wrapped = l < l_tau
    values = kernel[:, None, :] * delay_phase[None, :, None]
    values = np.where(wrapped[None, :, None], values * wrap_phase[None, None, :], values)
    if truncated:
        band = (l_src >= grid.l_p - grid.l_max) & (l_src <= grid.l_p + grid.l_max)
        values = np.where(band[None, :, None], 0.0, values)
    return l_tau, values


def psi_matrix(p1: PathUI, p2: PathIB, grid: OtfsGrid, truncated: bool = False) -> sparse.csr_matrix:
    """MN x MN delay-Doppler input-output matrix of one path pair"""
    l_tau, values = psi_blocks(p1, p2, grid, truncated)
    N, M = grid.N, grid.M
    k = np.arange(N)
    l = np.arange(M)
    rows = np.broadcast_to((k[:, None] * M + l[None, :])[:, :, None], values.shape)
    cols = np.broadcast_to(k[None, None, :] * M + ((l - l_tau) % M)[None, :, None], values.shape)
    mat = sparse.coo_matrix(
        (values.ravel(), (rows.ravel(), cols.ravel())), shape=(grid.size, grid.size)
    ).tocsr()
    mat.eliminate_zeros()
    return mat


def effective_channel(scenario: Scenario, r, xi, truncated: bool = False) -> sparse.csr_matrix:
    """Sum over pairs of cascaded gain x beta x Psi"""
    grid = scenario.grid
    total = sparse.csr_matrix((grid.size, grid.size), dtype=complex)
    for p1, p2 in scenario.pairs():
        coeff = pair_coefficient(p1, p2, grid) * beta(r, xi, p1, p2, scenario.irs_shape)
        if coeff == 0:
            continue
        total = total + coeff * psi_matrix(p1, p2, grid, truncated)
    return total


def complex_noise(shape, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples with variance sigma2"""
    if sigma2 == 0:
        return np.zeros(shape, dtype=complex)
    scale = np.sqrt(sigma2 / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def simulate_rx(frame: DdFrame, scenario: Scenario, r, xi, rng: np.random.Generator) -> DdFrame:
    """y = H vec(x) + n"""
    grid = scenario.grid
    if frame.otfs.N != grid.N or frame.otfs.M != grid.M:
        raise ValueError("frame geometry does not match the scenario grid")
    h = effective_channel(scenario, r, xi, truncated=False)
    y = h @ frame.vec() + complex_noise(grid.size, scenario.sigma2, rng)
    return DdFrame(y.reshape(grid.N, grid.M), grid)


def simulate_los_bin(grid: OtfsGrid, gain: complex, nu: float, x_p: float, sigma2: float,
                     rng: np.random.Generator) -> np.ndarray:
    """Received pilot over all Doppler bins at the LoS delay bin only"""
    k = np.arange(grid.N)
    clean = x_p * gain * dirichlet(grid.k_p - k + nu * grid.N * grid.T_s, grid.N)
    clean = clean * np.exp(-2j * np.pi * nu * grid.l_p / (grid.M * grid.delta_f))
    return clean + complex_noise(grid.N, sigma2, rng)


def _draw_delays(n_paths: int, budget: int, rng: np.random.Generator) -> np.ndarray:
    if n_paths == 1:
        return np.array([rng.integers(0, budget + 1)])
    if budget < 1:
        raise ValueError(f"delay budget {budget} leaves no room for a strictly minimal LoS tap")
    los = rng.integers(0, budget)
    others = rng.integers(los + 1, budget + 1, size=n_paths - 1)
    return np.concatenate(([los], others))


def random_scenario(params: ScenarioParams, rng: np.random.Generator) -> Scenario:
    """Draw paths: random delays with minimal LoS taps, Dopplers nu_max cos(theta), unit gains"""
    grid = params.grid
    ui_budget = grid.l_max // 2
    ib_budget = grid.l_max - ui_budget
    ui_delays = _draw_delays(params.l_ui, ui_budget, rng)
    ib_delays = _draw_delays(params.l_ib, ib_budget, rng)

    def unit_gain():
        return complex(np.exp(2j * np.pi * rng.random()))

    def angle():
        return float(rng.uniform(-np.pi, np.pi))

    ui_paths = []
    for l_tau in ui_delays:
        nu = params.nu_max * np.cos(rng.uniform(0, 2 * np.pi))
        ui_paths.append(PathUI(unit_gain(), int(l_tau), float(nu), angle(), angle()))

    ib_paths = []
    for l_tau in ib_delays:
        nu = params.nu_max * np.cos(rng.uniform(0, 2 * np.pi)) if params.ib_doppler else 0.0
        ib_paths.append(PathIB(unit_gain(), int(l_tau), float(nu), angle(), angle(), angle()))

    return Scenario(
        grid=grid,
        ui_paths=tuple(ui_paths),
        ib_paths=tuple(ib_paths),
        n_b=params.n_b,
        n_i1=params.n_i1,
        n_i2=params.n_i2,
        sigma2=params.sigma2,
        x_p=params.x_p,
    )
