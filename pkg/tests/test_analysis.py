#!/usr/bin/env python3
"""
Test suite for the closed-form sensing analysis and its special functions.
"""

import sys
import os
import math

# Add the repository root to the path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

# Conditional imports to handle missing dependencies
try:
    import pytest
    import numpy as np
    from scipy import integrate, special
    from isac import analysis, frame
    DEPENDENCIES_AVAILABLE = True
except ImportError:
    pytest = None
    np = None
    integrate = None
    special = None
    analysis = None
    frame = None
    DEPENDENCIES_AVAILABLE = False


def stirling_ln_gamma(x):
    """Stirling series oracle, shifted to x >= 15 by the recurrence"""
    shift = 0.0
    while x < 15.0:
        shift += math.log(x)
        x += 1.0
    series = (1 / (12 * x) - 1 / (360 * x ** 3) + 1 / (1260 * x ** 5)
              - 1 / (1680 * x ** 7) + 1 / (1188 * x ** 9))
    return (x - 0.5) * math.log(x) - x + 0.5 * math.log(2 * math.pi) + series - shift


def test_ln_gamma_against_stirling():
    """Test ln_gamma against the Stirling series over [0.5, 1e6]"""
    if not DEPENDENCIES_AVAILABLE:
        pytest.skip("Dependencies not available")

    for x in np.geomspace(0.5, 1e6, 60):
        assert analysis.ln_gamma(x) == pytest.approx(stirling_ln_gamma(x), rel=1e-12, abs=1e-12)
    with pytest.raises(ValueError):
        analysis.ln_gamma(0.0)


def test_betainc_against_scipy():
    """Test the continued-fraction incomplete beta against scipy"""
    if not DEPENDENCIES_AVAILABLE:
        pytest.skip("Dependencies not available")

    rng = np.random.default_rng(11)
    for _ in range(100):
        a, b = rng.uniform(0.5, 200.0, size=2)
        x = rng.random()
        assert analysis.betainc_reg(a, b, x) == pytest.approx(special.betainc(a, b, x), rel=1e-9, abs=1e-14)
    assert analysis.betainc_reg(2.0, 3.0, 0.0) == 0.0
    assert analysis.betainc_reg(2.0, 3.0, 1.0) == 1.0
    with pytest.raises(ValueError):
        analysis.betainc_reg(2.0, 3.0, 1.5)


def test_gauss_2f1_power_identity():
    """Test 2F1(a, b; b; -x) = (1 + x)^-a over random arguments"""
    if not DEPENDENCIES_AVAILABLE:
        pytest.skip("Dependencies not available")

    rng = np.random.default_rng(5)
    for _ in range(100):
        a, b = rng.uniform(0.1, 20.0, size=2)
        x = rng.uniform(0.0, 50.0)
        assert analysis.gauss_2f1_neg(a, b, b, x) == pytest.approx((1 + x) ** (-a), rel=1e-10)


def test_gauss_2f1_pattern_against_scipy():
    """Test the incomplete-beta form of 2F1(a, b; b+1; -x) on both sides of x = 1"""
    if not DEPENDENCIES_AVAILABLE:
        pytest.skip("Dependencies not available")

    # Check the closed value 2F1(3, 1; 2; -1) = 3/8
    assert analysis.gauss_2f1_neg(3.0, 1.0, 2.0, 1.0) == pytest.approx(0.375, rel=1e-12)

    for a, b, x in [(5.0, 2.0, 0.3), (12.5, 3.5, 0.9), (7.0, 1.5, 4.0), (30.3, 10.1, 20.0)]:
        expected = special.hyp2f1(a, b, b + 1.0, -x)
        assert analysis.gauss_2f1_neg(a, b, b + 1.0, x) == pytest.approx(expected, rel=1e-9)

    # Check the series branch and its limit
    assert analysis.gauss_2f1_neg(1.5, 2.5, 4.0, 0.4) == pytest.approx(
        special.hyp2f1(1.5, 2.5, 4.0, -0.4), rel=1e-10)
    with pytest.raises(ValueError):
        analysis.gauss_2f1_neg(1.5, 2.5, 4.0, 2.0)


def test_nakagami_moment_matching():
    """Test that the matched parameters reproduce the first two even moments"""
    if not DEPENDENCIES_AVAILABLE:
        pytest.skip("Dependencies not available")

    z_prime, sigma2 = 2.0, 0.5
    params = analysis.nakagami_params(z_prime, sigma2)

    # Check E[Z^2] = z'^2 + sigma2 and E[Z^4] = omega^2 (1 + 1/varpi)
    assert params.omega == pytest.approx(4.5)
    fourth = z_prime ** 4 + 4 * z_prime ** 2 * sigma2 + 2 * sigma2 ** 2
    assert params.omega ** 2 * (1 + 1 / params.varpi) == pytest.approx(fourth)
    assert params.varpi >= 1.0
    with pytest.raises(ValueError):
        analysis.nakagami_params(1.0, 0.0)


def nakagami_grid():
    """Twenty (z2', z3') pairs at unit noise, shapes between about 2 and 22"""
    pairs = []
    for z2 in (2.5, 3.0, 4.0, 5.0, 6.5):
        for scale in (0.7, 0.9):
            pairs.append((z2, scale * z2))
            pairs.append((scale * z2, z2))
    return pairs


def half_line_quad(fn):
    """Integral over (0, inf), split where the ratio densities have their bulk"""
    head, _ = integrate.quad(fn, 0, 10, epsabs=0, epsrel=1e-11, limit=500)
    tail, _ = integrate.quad(fn, 10, np.inf, epsabs=0, epsrel=1e-11, limit=500)
    return head + tail


def test_ratio_density_moments_against_quadrature():
    """Test the closed-form ratio moments and side-peak probability against quadrature"""
    if not DEPENDENCIES_AVAILABLE:
        pytest.skip("Dependencies not available")

    for z2, z3 in nakagami_grid():
        n2 = analysis.nakagami_params(z2, 1.0)
        n3 = analysis.nakagami_params(z3, 1.0)
        assert n2.varpi <= 50 and n3.varpi <= 50

        def density(r):
            return float(analysis.ratio_density(r, n2, n3))

        total = half_line_quad(density)
        mean = half_line_quad(lambda r: r * density(r))
        second = half_line_quad(lambda r: r * r * density(r))

        # Check normalization and both moments to 1e-6
        assert total == pytest.approx(1.0, rel=1e-6)
        assert analysis.ratio_mean(n2, n3) == pytest.approx(mean, rel=1e-6)
        assert analysis.ratio_second_moment(n2, n3) == pytest.approx(second, rel=1e-6)

        # Check P(Z3 < Z2) = P(Z3 / Z2 < 1) against the closed form
        tail, _ = integrate.quad(lambda r: float(analysis.ratio_density(r, n3, n2)), 0, 1,
                                 epsabs=0, epsrel=1e-11, limit=500)
        assert analysis.p_eff_closed(z2, z3, 1.0) == pytest.approx(tail, rel=1e-6)


def test_p_eff_closed_limits():
    """Test symmetry, the noiseless limit and argument errors"""
    if not DEPENDENCIES_AVAILABLE:
        pytest.skip("Dependencies not available")

    assert analysis.p_eff_closed(1.0, 1.0, 0.3) == pytest.approx(0.5, abs=1e-12)
    p = analysis.p_eff_closed(2.0, 1.0, 0.3)
    assert p + analysis.p_eff_closed(1.0, 2.0, 0.3) == pytest.approx(1.0, abs=1e-12)
    assert analysis.p_eff_closed(2.0, 1.0, 0.0) == 1.0
    with pytest.raises(ValueError):
        analysis.p_eff_closed(0.0, 0.0, 0.3)
    with pytest.raises(ValueError):
        analysis.p_eff_closed(-1.0, 0.5, 0.3)


def test_p_eff_average_reference_value():
    """Test the averaged probability at N_B = 16, N_I = 64 and SNR = 10 dB"""
    if not DEPENDENCIES_AVAILABLE:
        pytest.skip("Dependencies not available")

    grid = frame.OtfsGrid()
    gain = math.sqrt(16) * 64
    p = analysis.p_eff_average(gain, 0.1, grid)

    # Check that the value is within 0.5 percentage points of 98.03%
    assert abs(p - 0.9803) < 0.005


def test_kernel_amps():
    """Test the noiseless Dirichlet amplitudes around the peak"""
    if not DEPENDENCIES_AVAILABLE:
        pytest.skip("Dependencies not available")

    grid = frame.OtfsGrid()
    amps = analysis.kernel_amps(0.25 * grid.doppler_resolution, grid)
    n = grid.N

    def amp(d):
        return abs(math.sin(math.pi * d) / (n * math.sin(math.pi * d / n)))

    assert amps.a_k1 == pytest.approx(amp(0.25))
    assert amps.a_k2 == pytest.approx(amp(0.75))
    assert amps.a_k3 == pytest.approx(amp(1.25))
    assert amps.side_amp == amps.a_k2
    # Check that the noiseless correction recovers the fractional offset
    assert amps.psi_prime == pytest.approx(math.pi * 0.25 / n)


def sweep_points():
    for snr_db in np.linspace(5, 30, 10):
        for fraction in (np.arange(10) + 0.5) / 20:
            yield snr_db, fraction


def test_mse_error_sandwich_sweep():
    """Test approx + lower < upper bound < approx + upper over SNR and offset"""
    if not DEPENDENCIES_AVAILABLE:
        pytest.skip("Dependencies not available")

    grid = frame.OtfsGrid()
    for snr_db, fraction in sweep_points():
        sigma2 = 10 ** (-snr_db / 10)
        amps = analysis.kernel_amps(fraction * grid.doppler_resolution, grid)
        z1, z2 = amps.a_k1, amps.side_amp
        approx = analysis.mse_approx(amps, z1, z2, sigma2, grid)
        upper = analysis.mse_upper(amps, z1, z2, sigma2, grid)
        lower_gap, upper_gap = analysis.mse_error_sandwich(amps, z1, z2, sigma2, grid)

        # Check the strict sandwich at every point
        assert approx + lower_gap < upper < approx + upper_gap, (snr_db, fraction)


def test_mse_approx_below_upper_bound():
    """Test that the approximation never exceeds the upper bound"""
    if not DEPENDENCIES_AVAILABLE:
        pytest.skip("Dependencies not available")

    grid = frame.OtfsGrid()
    gain = math.sqrt(4) * 64
    for snr_db in (10, 15, 20, 25, 30):
        sigma2 = 10 ** (-snr_db / 10)
        amps = analysis.kernel_amps(0.25 * grid.doppler_resolution, grid)
        z1, z2 = gain * amps.a_k1, gain * amps.side_amp
        approx = analysis.mse_approx(amps, z1, z2, sigma2, grid)
        upper = analysis.mse_upper(amps, z1, z2, sigma2, grid)
        assert 0 <= approx <= upper
        # Check that the gain form agrees with the amplitude form
        assert analysis.mse_upper_gain(amps, gain, sigma2, grid) == pytest.approx(upper, rel=1e-6)


def test_mse_upper_gain_decreasing():
    """Test that the MSE bound falls as the cascaded gain grows"""
    if not DEPENDENCIES_AVAILABLE:
        pytest.skip("Dependencies not available")

    grid = frame.OtfsGrid()
    amps = analysis.kernel_amps(0.3 * grid.doppler_resolution, grid)
    values = [analysis.mse_upper_gain(amps, g, 0.01, grid) for g in (1.0, 4.0, 16.0, 64.0)]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_mse_tiny_side_amplitude():
    """Test the MSE forms when the side peak is far below the noise floor"""
    if not DEPENDENCIES_AVAILABLE:
        pytest.skip("Dependencies not available")

    grid = frame.OtfsGrid()
    amps = analysis.kernel_amps(0.25 * grid.doppler_resolution, grid)
    params = analysis.nakagami_params(1e-8, 10.0)

    # Check that varpi - 1 keeps its leading term z'^4 / sigma^4
    assert params.shape_excess == pytest.approx(1e-34, rel=1e-12)
    assert analysis.ratio_second_moment(analysis.nakagami_params(1.0, 10.0), params) > 1e30

    approx = analysis.mse_approx(amps, 1.0, 1e-8, 10.0, grid)
    upper = analysis.mse_upper(amps, 1.0, 1e-8, 10.0, grid)
    assert math.isfinite(approx) and 0 < approx <= upper

    # Check that the second-moment term scales as z2'^-4
    coarse = analysis.mse_approx(amps, 1.0, 1e-5, 10.0, grid)
    fine = analysis.mse_approx(amps, 1.0, 1e-7, 10.0, grid)
    assert fine / coarse == pytest.approx(1e8, rel=1e-6)


def test_mse_argument_errors():
    """Test that invalid peak amplitudes raise"""
    if not DEPENDENCIES_AVAILABLE:
        pytest.skip("Dependencies not available")

    grid = frame.OtfsGrid()
    amps = analysis.kernel_amps(0.25 * grid.doppler_resolution, grid)
    with pytest.raises(ValueError):
        analysis.mse_approx(amps, 0.5, 0.9, 0.1, grid)
    with pytest.raises(ValueError):
        analysis.mse_upper(amps, 1.0, 0.0, 0.1, grid)


if __name__ == "__main__":
    pytest.main([__file__])
