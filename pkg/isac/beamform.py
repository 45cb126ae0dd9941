"""
Joint BS combiner / IRS phase design.

Alternating maximisation of the truncated-channel energy r^H A r = xi^H B xi
subject to unit norm, unit modulus and a floor on the cascaded LoS gain that
keeps the Doppler MSE upper bound below a target.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy import sparse

from .analysis import kernel_amps, mse_upper_gain
from .channel import (
    Scenario,
    effective_channel,
    irs_pair_vector,
    pair_coefficient,
    psi_blocks,
    steer_bs,
)
from .frame import OtfsGrid

logger = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-8
FEASIBILITY_TOL = 1e-6
RHO_GROWTH = 2.0
RHO_STALL = 0.9
RHO_CAP = 1e12
REFINE_ITERS = 2000
REFINE_TOL = 1e-12


class InfeasibleError(ValueError):
    """The sensing constraint cannot be met"""


@dataclass
class BeamState:
    """Iterate of the alternating optimisation and its ADMM auxiliaries"""
    r: np.ndarray
    xi: np.ndarray
    z1: np.ndarray
    z2: np.ndarray
    mu1: np.ndarray
    mu2: np.ndarray
    rho: float = 0.0
    lambda_r: float = 0.0
    lambda_xi: float = 0.0
    gamma_prime: float = 0.0

    def check(self, tol: float = 1e-12):
        if abs(np.linalg.norm(self.r) - 1.0) > tol:
            raise ValueError(f"combiner norm {np.linalg.norm(self.r)!r} is not 1")
        if np.max(np.abs(np.abs(self.xi) - 1.0)) > tol:
            raise ValueError("IRS phases are not unit modulus")
        if self.lambda_r < 0 or self.lambda_xi < 0:
            raise ValueError("constraint thresholds must be non-negative")


@dataclass
class QuadForms:
    """Pair-level data behind the quadratic forms A(xi) and B(r)"""
    trace_table: np.ndarray
    coefficients: np.ndarray
    bs_steering: np.ndarray
    irs_vectors: np.ndarray

    def matrix_A(self, xi) -> np.ndarray:
        s = self.irs_vectors.conj().T @ np.asarray(xi)           # s_q = v_q^H xi
        w = self._weights(s)
        a = self.bs_steering @ w @ self.bs_steering.conj().T
        return (a + a.conj().T) / 2

    def matrix_B(self, r) -> np.ndarray:
        t = self.bs_steering.T @ np.asarray(r).conj()              # t_q = r^H a_q
        w = self._weights(t)
        b = self.irs_vectors @ w.T @ self.irs_vectors.conj().T
        return (b + b.conj().T) / 2

    def apply_B(self, r, xi) -> np.ndarray:
        """B(r) xi without forming B"""
        t = self.bs_steering.T @ np.asarray(r).conj()
        w = self._weights(t)
        return self.irs_vectors @ (w.T @ (self.irs_vectors.conj().T @ np.asarray(xi)))

    def energy(self, r, xi) -> float:
        """r^H A(xi) r = ||H_truc||_F^2"""
        return float(np.vdot(r, self.matrix_A(xi) @ r).real)

    def _weights(self, scalars: np.ndarray) -> np.ndarray:
        g = self.coefficients * scalars
        return np.outer(g, g.conj()) * self.trace_table


def build_trace_table(scenario: Scenario, grid: Optional[OtfsGrid] = None) -> np.ndarray:
    """Tr{Psi_truc^q (Psi_truc^q')^H} over all path-pair combinations"""
    grid = grid or scenario.grid
    blocks = [psi_blocks(p1, p2, grid, truncated=True) for p1, p2 in scenario.pairs()]
    n = len(blocks)
    table = np.zeros((n, n), dtype=complex)
    for q in range(n):
        l_q, values_q = blocks[q]
        for q2 in range(q, n):
            l_q2, values_q2 = blocks[q2]
            # Different delay taps occupy disjoint columns in every row
            if l_q != l_q2:
                continue
            table[q, q2] = np.sum(values_q * values_q2.conj())
            table[q2, q] = np.conj(table[q, q2])
        table[q, q] = table[q, q].real
    return table


def quad_forms(scenario: Scenario, trace_table: Optional[np.ndarray] = None) -> QuadForms:
    if trace_table is None:
        trace_table = build_trace_table(scenario)
    pairs = list(scenario.pairs())
    return QuadForms(
        trace_table=trace_table,
        coefficients=np.array([pair_coefficient(p1, p2, scenario.grid) for p1, p2 in pairs]),
        bs_steering=np.column_stack([steer_bs(p2.theta_bs, scenario.n_b) for _, p2 in pairs]),
        irs_vectors=np.column_stack([irs_pair_vector(p1, p2, scenario.irs_shape) for p1, p2 in pairs]),
    )


def matrix_A(scenario: Scenario, xi, trace_table: np.ndarray) -> np.ndarray:
    """N_B x N_B form with r^H A r = ||H_truc||_F^2 at fixed xi"""
    return quad_forms(scenario, trace_table).matrix_A(xi)


def matrix_B(scenario: Scenario, r, trace_table: np.ndarray) -> np.ndarray:
    """N_I x N_I form with xi^H B xi = ||H_truc||_F^2 at fixed r"""
    return quad_forms(scenario, trace_table).matrix_B(r)


def _to_dense(h) -> np.ndarray:
    return h.toarray() if sparse.issparse(h) else np.asarray(h)


def rate(h, gamma: float) -> float:
    """(1/MN) log2 det(I + gamma H H^H) in bit/s/Hz"""
    h = _to_dense(h)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"channel must be square, got shape {h.shape}")
    eig = np.linalg.eigvalsh(h @ h.conj().T)
    if np.min(eig, initial=0.0) < -1e-9 * max(1.0, np.max(np.abs(eig), initial=0.0)):
        logger.warning(f"negative eigenvalue {np.min(eig)!r} in H H^H")
    eig = np.clip(eig, 0.0, None)
    return float(np.sum(np.log2(1.0 + gamma * eig)) / h.shape[0])


def rate_lower_bound(frob2: float, gamma: float, n_s: int, mn: int) -> float:
    """(1/MN) log2(1 + (gamma / N_s) ||H||_F^2)"""
    return float(math.log2(1.0 + gamma / n_s * frob2) / mn)


def top_eigvec(h_mat) -> Tuple[float, np.ndarray]:
    """Dominant eigenpair of a Hermitian matrix, first nonzero entry real positive"""
    h_mat = np.asarray(h_mat, dtype=complex)
    scale = max(1.0, np.linalg.norm(h_mat))
    if np.linalg.norm(h_mat - h_mat.conj().T) > HERMITIAN_TOL * scale:
        raise ValueError("matrix is not Hermitian")
    eigvals, eigvecs = np.linalg.eigh((h_mat + h_mat.conj().T) / 2)
    vec = eigvecs[:, -1]
    nonzero = np.flatnonzero(np.abs(vec) > 1e-12 * np.max(np.abs(vec)))
    if nonzero.size:
        pivot = vec[nonzero[0]]
        vec = vec * (abs(pivot) / pivot)
    return float(eigvals[-1]), vec


def solve_r(a_mat, a_los, lambda_r: float) -> np.ndarray:
    """Maximise r^H A r over unit r subject to |r^H a_los|^2 >= lambda_r"""
    a_los = np.asarray(a_los, dtype=complex)
    norm2 = float(np.vdot(a_los, a_los).real)
    if lambda_r > norm2 * (1.0 + 1e-12):
        raise InfeasibleError(f"lambda_r={lambda_r:.6g} exceeds |a_los|^2={norm2:.6g}")
    _, u1 = top_eigvec(a_mat)
    if abs(np.vdot(u1, a_los)) ** 2 >= lambda_r:
        return u1

    alpha = a_los / math.sqrt(norm2)
    proj = np.vdot(alpha, u1)                                   # alpha^H u1
    residual = u1 - proj * alpha
    beta_vec = residual / np.linalg.norm(residual)
    frac = min(lambda_r / norm2, 1.0)
    phase1 = 1.0 if abs(proj) == 0 else np.conj(np.conj(proj) / abs(proj))
    inner2 = np.vdot(u1, beta_vec)                              # u1^H beta
    phase2 = 1.0 if abs(inner2) == 0 else np.conj(inner2 / abs(inner2))
    r = math.sqrt(frac) * phase1 * alpha + math.sqrt(1.0 - frac) * phase2 * beta_vec
    return r / np.linalg.norm(r)


def solve_xi_closed(b_mat) -> np.ndarray:
    """Unit-modulus phases of the dominant eigenvector of B"""
    _, u2 = top_eigvec(b_mat)
    return np.exp(1j * np.angle(u2))


@dataclass
class AdmmResult:
    xi: np.ndarray
    z1: np.ndarray
    z2: np.ndarray
    mu1: np.ndarray
    mu2: np.ndarray
    converged: bool
    iterations: int
    violation: float
    penalized: List[float] = field(default_factory=list)
    rho: float = 0.0


def admm_xi(b_mat, a_theta, lambda_xi: float, rho: Optional[float] = None, eps1: float = 1e-6,
            t_max: int = 100, xi0=None, z0=None, mu0=None) -> AdmmResult:
    """
    Consensus ADMM for max xi^H B xi s.t. |xi_i| = 1 and |xi^H a_theta|^2 >= lambda_xi.

    The copies z1 (unit modulus) and z2 (side constraint) are pulled to xi by the
    scaled duals mu1, mu2. Whenever the consensus violation fails to shrink by
    RHO_STALL, rho grows by RHO_GROWTH and the scaled duals are rescaled to match.
    z2 is projected onto a floor raised by 2 |a_theta| eps1, so a converged exit
    still meets lambda_xi after the final projection onto unit modulus.
    """
    b_mat = np.asarray(b_mat, dtype=complex)
    a_theta = np.asarray(a_theta, dtype=complex)
    n = b_mat.shape[0]
    lam_max = float(np.linalg.eigvalsh(b_mat)[-1])
    if rho is None:
        rho = lam_max
    if rho <= 0:
        rho = 1.0
    rho_cap = RHO_CAP * max(rho, lam_max, 1.0)

    xi = np.exp(1j * np.angle(np.asarray(xi0))) if xi0 is not None else solve_xi_closed(b_mat)
    z1 = np.array(xi) if z0 is None else np.array(z0[0])
    z2 = np.array(xi) if z0 is None else np.array(z0[1])
    mu1 = np.zeros(n, dtype=complex) if mu0 is None else np.array(mu0[0])
    mu2 = np.zeros(n, dtype=complex) if mu0 is None else np.array(mu0[1])
    a_norm2 = float(np.vdot(a_theta, a_theta).real)
    floor = 0.0
    if lambda_xi > 0:
        floor = min(math.sqrt(lambda_xi) + 2.0 * math.sqrt(a_norm2) * eps1, float(np.sum(np.abs(a_theta))))

    def factorize(penalty):
        system = 2.0 * penalty * np.eye(n) - b_mat
        try:
            return system, np.linalg.cholesky(system)
        except np.linalg.LinAlgError:
            ridge = 1e-9 * max(lam_max, 1.0)
            logger.warning(f"ADMM xi-step matrix singular at rho={penalty:.3g}, adding ridge {ridge:.3g}")
            return system + ridge * np.eye(n), None

    system, factor = factorize(rho)

    def xi_step(rhs):
        if factor is None:
            return np.linalg.solve(system, rhs)
        return np.linalg.solve(factor.conj().T, np.linalg.solve(factor, rhs))

    best = (math.inf, xi, z1, z2, mu1, mu2)
    penalized = []
    violation = previous = math.inf
    iterations = 0
    for iterations in range(1, t_max + 1):
        xi = xi_step(rho * (z1 + mu1 + z2 + mu2))
        z1 = np.exp(1j * np.angle(xi - mu1))
        zeta = xi - mu2
        inner = np.vdot(a_theta, zeta)                          # a_theta^H zeta
        if abs(inner) > 1e-300:
            gap = max(floor - abs(inner), 0.0)
            z2 = zeta + gap / (a_norm2 * abs(inner)) * a_theta * inner
        else:
            z2 = zeta + floor * a_theta / math.sqrt(a_norm2)
        mu1 = z1 - xi + mu1
        mu2 = z2 - xi + mu2

        violation = max(np.linalg.norm(xi - z1), np.linalg.norm(xi - z2))
        penalized.append(float(
            -np.vdot(xi, b_mat @ xi).real
            + rho * (np.linalg.norm(z1 - xi + mu1) ** 2 + np.linalg.norm(z2 - xi + mu2) ** 2)
        ))
        if violation < best[0]:
            best = (violation, xi, z1, z2, mu1, mu2)
        if violation < eps1:
            break
        if violation > RHO_STALL * previous and rho < rho_cap:
            rho *= RHO_GROWTH
            mu1 = mu1 / RHO_GROWTH
            mu2 = mu2 / RHO_GROWTH
            system, factor = factorize(rho)
            logger.debug(f"ADMM iteration {iterations}: violation {violation:.3g} stalled, rho -> {rho:.3g}")
        previous = violation

    converged = violation < eps1
    if not converged:
        logger.warning(f"ADMM stopped after {t_max} iterations with violation {violation:.3g}")
        violation, xi, z1, z2, mu1, mu2 = best
    return AdmmResult(
        xi=np.exp(1j * np.angle(xi)), z1=z1, z2=z2, mu1=mu1, mu2=mu2,
        converged=converged, iterations=iterations, violation=float(violation),
        penalized=penalized, rho=float(rho),
    )


def gamma_prime(gamma1: float, nu_true: float, grid: OtfsGrid, sigma2: float,
                x_p: float = 1.0, rel_tol: float = 1e-10) -> float:
    """Smallest |h^UIB| whose MSE upper bound does not exceed gamma1 (Hz^2)"""
    if gamma1 <= 0:
        raise InfeasibleError(f"MSE target must be positive, got {gamma1}")
    amps = kernel_amps(nu_true, grid, x_p)

    def bound(h):
        return mse_upper_gain(amps, h, sigma2, grid)

    if amps.side_amp == 0.0:
        return 0.0
    lo, hi = 1e-12, 1.0
    while bound(hi) > gamma1:
        lo = hi
        hi *= 2.0
        if hi > 1e300:
            raise InfeasibleError(f"MSE target {gamma1:.6g} Hz^2 is not reachable")
    while bound(lo) <= gamma1:
        hi = lo
        lo /= 2.0
        if lo < 1e-150:
            return 0.0
    # Geometric bisection
    while hi - lo > rel_tol * hi:
        mid = math.sqrt(lo * hi)
        if bound(mid) > gamma1:
            lo = mid
        else:
            hi = mid
    return hi


@dataclass
class OptimizeResult:
    r: np.ndarray
    xi: np.ndarray
    objectives: List[float]
    rate_trace: List[float]
    state: BeamState
    converged: bool
    iterations: int


def los_gain(scenario: Scenario, r, xi) -> float:
    """|h_1^IB h_1^UI| |r^H a_B| |a_theta^H xi|"""
    return (scenario.los_gain_abs * abs(np.vdot(r, scenario.a_los))
            * abs(np.vdot(scenario.a_theta, xi)))


def _threshold(gamma_floor: float, partial_gain: float) -> float:
    """(gamma' / partial gain)^2, the squared floor left for the other beamformer"""
    if gamma_floor == 0:
        return 0.0
    if partial_gain == 0:
        return math.inf
    return float((gamma_floor / partial_gain) ** 2)


def baseline_strongest(scenario: Scenario) -> Tuple[np.ndarray, np.ndarray]:
    """Combiner and IRS phases aligned to the LoS cascaded path"""
    r = scenario.a_los / math.sqrt(scenario.n_b)
    return r, np.exp(1j * np.angle(scenario.a_theta))


def baseline_random(scenario: Scenario, rng: np.random.Generator,
                    trace_table: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Uniform random IRS phases with the subspace combiner"""
    forms = quad_forms(scenario, trace_table)
    xi = np.exp(2j * np.pi * rng.random(scenario.n_i))
    return solve_r(forms.matrix_A(xi), scenario.a_los, 0.0), xi


def baseline_no_irs(scenario: Scenario,
                    trace_table: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Surface acting as a plain scatterer: phase pi on every element"""
    forms = quad_forms(scenario, trace_table)
    xi = -np.ones(scenario.n_i, dtype=complex)
    return solve_r(forms.matrix_A(xi), scenario.a_los, 0.0), xi


def refine_phases(forms: QuadForms, scenario: Scenario, r, xi, gamma_floor: float,
                  max_iter: int = REFINE_ITERS, tol: float = REFINE_TOL):
    """
    Monotone ascent xi <- exp(j angle(B(r) xi)), re-solving the combiner after each step.

    B(r) is positive semidefinite, so each phase step cannot lower xi^H B xi. Steps
    that would break the LoS gain floor end the ascent. Returns (r, xi, objective, steps).
    """
    h_los = scenario.los_gain_abs
    value = forms.energy(r, xi)
    steps = 0
    for steps in range(1, max_iter + 1):
        candidate = np.exp(1j * np.angle(forms.apply_B(r, xi)))
        if los_gain(scenario, r, candidate) < gamma_floor - FEASIBILITY_TOL:
            break
        best_r, best_value = r, forms.energy(r, candidate)
        lambda_r = _threshold(gamma_floor, h_los * abs(np.vdot(scenario.a_theta, candidate)))
        try:
            r_new = solve_r(forms.matrix_A(candidate), scenario.a_los, lambda_r)
        except InfeasibleError:
            r_new = None
        if r_new is not None and los_gain(scenario, r_new, candidate) >= gamma_floor - FEASIBILITY_TOL:
            r_value = forms.energy(r_new, candidate)
            if r_value >= best_value:
                best_r, best_value = r_new, r_value
        if best_value < value:
            break
        gain = best_value - value
        r, xi, value = best_r, candidate, best_value
        if gain <= tol * max(value, 1e-300):
            break
    return r, xi, value, steps


def optimize(scenario: Scenario, gamma1: float, t1: int = 10, eps1: float = 1e-6,
             admm_iters: int = 100, tol: float = 1e-8, gamma_floor: Optional[float] = None,
             trace_table: Optional[np.ndarray] = None, exact_rate: bool = False,
             refine_iters: int = REFINE_ITERS) -> OptimizeResult:
    """
    Alternate the combiner and IRS phase updates from the strongest-path start.

    gamma1 is the MSE target in Hz^2; gamma_floor overrides the derived gain floor.
    Candidates that lower the objective or break the gain floor are rejected. Each
    phase step ends with refine_phases (refine_iters=0 keeps the bare candidate).
    """
    grid = scenario.grid
    forms = quad_forms(scenario, trace_table)
    if gamma_floor is None:
        gamma_floor = gamma_prime(gamma1, scenario.los_nu, grid, scenario.sigma2, scenario.x_p)
    h_los = scenario.los_gain_abs
    a_theta = scenario.a_theta
    a_los = scenario.a_los
    max_gain = h_los * math.sqrt(scenario.n_b) * scenario.n_i
    if gamma_floor > max_gain * (1.0 + 1e-12):
        raise InfeasibleError(
            f"required LoS gain {gamma_floor:.6g} exceeds the achievable {max_gain:.6g}"
        )

    r, xi = baseline_strongest(scenario)
    state = BeamState(r=r, xi=xi, z1=xi.copy(), z2=xi.copy(),
                      mu1=np.zeros(scenario.n_i, dtype=complex),
                      mu2=np.zeros(scenario.n_i, dtype=complex),
                      gamma_prime=gamma_floor)
    gamma = 1.0 / scenario.sigma2 if scenario.sigma2 > 0 else 1.0

    objective = forms.energy

    def feasible(r_vec, xi_vec):
        return los_gain(scenario, r_vec, xi_vec) >= gamma_floor - FEASIBILITY_TOL

    def rate_of(r_vec, xi_vec, frob2):
        if exact_rate:
            return rate(effective_channel(scenario, r_vec, xi_vec, truncated=True), gamma)
        return rate_lower_bound(frob2, gamma, grid.n_data, grid.size)

    current = objective(state.r, state.xi)
    objectives = [current]
    rate_trace = [rate_of(state.r, state.xi, current)]
    converged = False
    t = 0
    for t in range(1, t1 + 1):
        previous = current

        # Combiner half-step
        state.lambda_r = _threshold(gamma_floor, h_los * abs(np.vdot(a_theta, state.xi)))
        candidate = solve_r(forms.matrix_A(state.xi), a_los, state.lambda_r)
        value = objective(candidate, state.xi)
        if value >= current and feasible(candidate, state.xi):
            state.r, current = candidate, value
        else:
            logger.debug(f"iteration {t}: combiner candidate rejected ({value:.6g} < {current:.6g})")

        # IRS half-step
        state.lambda_xi = _threshold(gamma_floor, h_los * abs(np.vdot(state.r, a_los)))
        b_mat = forms.matrix_B(state.r)
        candidate = solve_xi_closed(b_mat)
        if abs(np.vdot(a_theta, candidate)) ** 2 < state.lambda_xi:
            result = admm_xi(b_mat, a_theta, state.lambda_xi, eps1=eps1, t_max=admm_iters,
                             xi0=state.xi, z0=(state.z1, state.z2), mu0=(state.mu1, state.mu2))
            state.rho = result.rho
            state.z1, state.z2, state.mu1, state.mu2 = result.z1, result.z2, result.mu1, result.mu2
            candidate = result.xi
        value = objective(state.r, candidate)
        if value >= current and feasible(state.r, candidate):
            state.xi, current = candidate, value
        else:
            logger.debug(f"iteration {t}: phase candidate rejected ({value:.6g} < {current:.6g})")
        if refine_iters > 0:
            state.r, state.xi, current, steps = refine_phases(forms, scenario, state.r, state.xi,
                                                              gamma_floor, max_iter=refine_iters)
            logger.debug(f"iteration {t}: phase ascent took {steps} steps")

        objectives.append(current)
        rate_trace.append(rate_of(state.r, state.xi, current))
        if abs(current - previous) <= tol * max(abs(current), 1e-300):
            converged = True
            break

    state.check(tol=1e-9)
    return OptimizeResult(r=state.r, xi=state.xi, objectives=objectives, rate_trace=rate_trace,
                          state=state, converged=converged, iterations=t)

