import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from raman_upconv.epr import (
    FWHM_PER_SIGMA,
    CavityParams,
    SpinEnsembleCoupling,
    calibrate_coupling,
    cavity_transmission,
    cooperativity,
    dispersive_shift_spectrum,
    lockin_lineshape,
    lockin_trace,
    peak_shift,
    voigt_dispersion,
)

CAV = CavityParams()
HOM = 1.7e6 / (2 * math.pi)


def calibrated():
    return SpinEnsembleCoupling(calibrate_coupling(260e3, 13e6, HOM), 13e6, homogeneous_fwhm=HOM)


def test_cavity_q_cross_check():
    CavityParams(4.9e9, 16e6, 300)
    with pytest.raises(ValueError):
        CavityParams(4.9e9, 16e6, 200)


@pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
@pytest.mark.parametrize("x", [-4e7, -1.3e7, -2e5, 0.0, 1e5, 9e6, 3e7])
def test_voigt_dispersion_matches_quadrature(x):
    sigma, hw = 13e6, 0.5 * HOM

    def integrand(u):
        g = math.exp(-0.5 * ((u - x) / sigma) ** 2) / (math.sqrt(2 * math.pi) * sigma)
        return g * u / (u * u + hw * hw)

    ref = quad(integrand, x - 10 * sigma, x + 10 * sigma, points=[0.0] if abs(x) < 10 * sigma else None,
               limit=500, epsabs=0, epsrel=1e-10)[0]
    assert voigt_dispersion(x, sigma, hw) == pytest.approx(ref, rel=1e-6, abs=1e-6 / sigma)


def test_trace_antisymmetric_about_resonance():
    cp = calibrated()
    B0 = cp.resonance_field(CAV)
    B = B0 + np.linspace(-6e-3, 6e-3, 241)
    s = dispersive_shift_spectrum(CAV, cp, B)
    assert np.abs(s + s[::-1]).max() <= 1e-6 * np.abs(s).max()


def test_far_detuned_shift_negligible():
    cp = calibrated()
    B0 = cp.resonance_field(CAV)
    far = B0 + 1000 * cp.spin_linewidth / cp.slope * np.array([1.0, 1.5])
    assert np.abs(dispersive_shift_spectrum(CAV, cp, far)).max() < 1e-3 * peak_shift(cp)


def test_far_tail_is_algebraic():
    # the pull falls off as g_N^2 / detuning, not exponentially
    cp = calibrated()
    x = 10 * cp.spin_linewidth
    B = np.array([cp.resonance_field(CAV) + x / cp.slope])
    shift = dispersive_shift_spectrum(CAV, cp, B)[0]
    assert shift == pytest.approx(-cp.collective_coupling**2 / x, rel=0.01)


def test_calibrated_peak_shift_and_frozen_coupling():
    cp = calibrated()
    B = cp.resonance_field(CAV) + np.linspace(-3e-3, 3e-3, 20001)
    assert np.abs(dispersive_shift_spectrum(CAV, cp, B)).max() == pytest.approx(260e3, rel=1e-6)
    assert cp.collective_coupling == pytest.approx(2.1117e6, rel=1e-4)


def test_cooperativity_bracket():
    cp = calibrated()
    assert cp.spin_linewidth == pytest.approx(FWHM_PER_SIGMA * 13e6)
    C = cooperativity(cp.collective_coupling, CAV.kappa, cp.spin_linewidth)
    assert 2e-2 <= C <= 2e-1
    assert C == pytest.approx(0.0364, abs=5e-4)


def test_cooperativity_cases():
    assert cooperativity(0.0, 16e6, 30e6) == 0.0
    assert cooperativity(2e6, 16e6, 30e6) == pytest.approx(4 * cooperativity(1e6, 16e6, 30e6))
    with pytest.raises(ValueError):
        cooperativity(1e6, 0.0, 30e6)


@settings(max_examples=30, deadline=None)
@given(g1=st.floats(1e4, 1e7), g2=st.floats(1e4, 1e7))
def test_peak_shift_monotone_in_coupling(g1, g2):
    lo, hi = sorted((g1, g2))
    a = peak_shift(SpinEnsembleCoupling(lo))
    b = peak_shift(SpinEnsembleCoupling(hi))
    assert a <= b
    assert b / a == pytest.approx((hi / lo) ** 2, rel=1e-9)


def test_non_monotone_field_grid_rejected():
    with pytest.raises(ValueError):
        dispersive_shift_spectrum(CAV, calibrated(), [0.17, 0.18, 0.175])


# lock-in

F = np.linspace(4.85e9, 4.95e9, 4001)


def test_lockin_flat_is_zero():
    out = lockin_lineshape(F, np.full(F.shape, 0.3), 1e6)
    assert np.abs(out).max() < 1e-14


def test_lockin_lorentzian_antisymmetric():
    cav = CavityParams(4.9e9, 16e6, 300)
    out = lockin_lineshape(F, cavity_transmission(F, cav), 1e6)
    mid = len(F) // 2
    assert abs(out[mid]) < 1e-9
    inner = slice(200, -200)  # keep the modulation inside the trace
    np.testing.assert_allclose(out[inner], -out[inner][::-1], atol=1e-9)


def test_lockin_zero_at_extremum_of_shifted_line():
    cav = CavityParams(4.9e9, 16e6, 300)
    T = cavity_transmission(F, cav, shift=5e6)
    out = lockin_lineshape(F, T, 2e6)
    k = np.argmax(T)
    assert abs(out[k]) < 1e-3 * np.abs(out).max()


def test_lockin_linear_in_depth():
    cav = CavityParams(4.9e9, 16e6, 300)
    T = cavity_transmission(F, cav)
    a = lockin_lineshape(F, T, 1e6)
    b = lockin_lineshape(F, T, 0.5e6)
    inner = slice(100, -100)
    assert np.abs(b[inner]).max() / np.abs(a[inner]).max() == pytest.approx(0.5, rel=0.01)
    # and tends to depth * dT/df
    dT = np.gradient(T, F)
    assert np.abs(b[inner] - 0.5e6 * dT[inner]).max() < 0.01 * np.abs(b[inner]).max()


def test_lockin_depth_must_be_below_span():
    with pytest.raises(ValueError):
        lockin_lineshape(F, cavity_transmission(F, CAV), F[-1] - F[0])


def test_lockin_trace_follows_shift_sign():
    cp = calibrated()
    B = cp.resonance_field(CAV) + np.linspace(-2e-3, 2e-3, 101)
    shifts, sig = lockin_trace(CAV, cp, B, 1e6)
    # pushing the line up puts the probe on its lower flank: positive slope
    big = np.abs(shifts) > 0.1 * np.abs(shifts).max()
    assert np.all(np.sign(sig[big]) == np.sign(shifts[big]))
