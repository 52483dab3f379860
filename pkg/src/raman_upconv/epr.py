"""Dispersive cavity pull by the spin ensemble and its FM lock-in readout.

Frequencies here are ordinary frequencies in Hz (not rad/s).  The spin line
is a Gaussian of standard deviation ``sigma`` whose centre moves with the
field as ``slope * B``; each spin packet is Lorentzian with FWHM
``homogeneous_fwhm``.  The pull of the cavity is

    df(B) = g_N^2 Re  integral g(x) / (x + i Gamma_h / 2) dx,   x = f0 - f_spin,

which is a Voigt dispersion and is evaluated with the Faddeeva function.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar
from scipy.special import wofz

__all__ = [
    "CavityParams",
    "SpinEnsembleCoupling",
    "FWHM_PER_SIGMA",
    "voigt_dispersion",
    "dispersive_shift_spectrum",
    "cooperativity",
    "calibrate_coupling",
    "peak_shift",
    "cavity_transmission",
    "lockin_lineshape",
    "lockin_trace",
]

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


@dataclass(frozen=True)
class CavityParams:
    f0: float = 4.9e9
    kappa: float = 16e6
    quality_factor: float = 300.0

    def __post_init__(self):
        if not (self.f0 > 0 and self.kappa > 0 and self.quality_factor > 0):
            raise ValueError("cavity parameters must be positive")
        ratio = (self.f0 / self.kappa) / self.quality_factor
        if abs(ratio - 1) > 0.1:
            raise ValueError(f"Q={self.quality_factor} inconsistent with f0/kappa="
                             f"{self.f0 / self.kappa:.1f} (more than 10% apart)")


@dataclass(frozen=True)
class SpinEnsembleCoupling:
    """Collective coupling and line shape of the spins (all Hz, slope in Hz/T).

    ``spin_linewidth`` is the Gamma_mu entering the cooperativity; by default
    it is the FWHM of the inhomogeneous line, ``FWHM_PER_SIGMA * sigma``.
    """

    collective_coupling: float
    sigma: float = 13e6
    slope: float = 4.9e9 / 0.1765
    homogeneous_fwhm: float = 1.7e6 / (2 * math.pi)
    spin_linewidth: float | None = None

    def __post_init__(self):
        if self.collective_coupling < 0:
            raise ValueError("collective coupling must be >= 0")
        for name in ("sigma", "slope", "homogeneous_fwhm"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.spin_linewidth is None:
            object.__setattr__(self, "spin_linewidth", FWHM_PER_SIGMA * self.sigma)
        elif not self.spin_linewidth > 0:
            raise ValueError("spin_linewidth must be positive")

    def resonance_field(self, cavity: CavityParams) -> float:
        return cavity.f0 / self.slope


def voigt_dispersion(x, sigma, half_width):
    """Re of the Gaussian average of 1/(x' + i half_width), x' ~ N(x, sigma^2).

    Equals ``-sqrt(pi/2) Im w(z) / sigma`` with ``z = (-x + i half_width)/(sqrt(2) sigma)``.
    """
    z = (-np.asarray(x, dtype=float) + 1j * half_width) / (math.sqrt(2) * sigma)
    return -math.sqrt(math.pi / 2) * np.imag(wofz(z)) / sigma


def dispersive_shift_spectrum(cavity: CavityParams, coupling: SpinEnsembleCoupling, fields):
    """Cavity frequency shift (Hz) at each field (T); positive means pushed up."""
    B = np.asarray(fields, dtype=float)
    if B.ndim != 1:
        raise ValueError("fields must be one-dimensional")
    d = np.diff(B)
    if len(B) > 1 and not (np.all(d > 0) or np.all(d < 0)):
        raise ValueError("field grid must be strictly monotone")
    x = cavity.f0 - coupling.slope * B
    return coupling.collective_coupling**2 * voigt_dispersion(
        x, coupling.sigma, 0.5 * coupling.homogeneous_fwhm)


def _peak_unit_shift(sigma, homogeneous_fwhm):
    # max over detuning of the Voigt dispersion; the maximum sits within a few sigma
    res = minimize_scalar(lambda x: -voigt_dispersion(x, sigma, 0.5 * homogeneous_fwhm),
                          bounds=(0.0, 5.0 * sigma + 5.0 * homogeneous_fwhm), method="bounded",
                          options={"xatol": 1e-6 * sigma})
    return float(-res.fun)


def peak_shift(coupling: SpinEnsembleCoupling) -> float:
    """Largest |shift| (Hz) of the dispersive trace."""
    return coupling.collective_coupling**2 * _peak_unit_shift(coupling.sigma, coupling.homogeneous_fwhm)


def calibrate_coupling(target_peak_shift: float, sigma: float, homogeneous_fwhm: float) -> float:
    """g_N (Hz) whose dispersive trace peaks at ``target_peak_shift`` Hz."""
    if not target_peak_shift > 0:
        raise ValueError("target shift must be positive")
    return math.sqrt(target_peak_shift / _peak_unit_shift(sigma, homogeneous_fwhm))


def cooperativity(g_N: float, kappa: float, gamma_mu: float) -> float:
    """C = 4 g_N^2 / (kappa Gamma_mu); all three in the same frequency unit."""
    if g_N < 0 or not (kappa > 0 and gamma_mu > 0):
        raise ValueError("need g_N >= 0 and positive kappa, Gamma_mu")
    return 4.0 * g_N**2 / (kappa * gamma_mu)


def cavity_transmission(freqs, cavity: CavityParams, shift: float = 0.0, peak: float = 1.0):
    """Lorentzian |S21|^2 of FWHM kappa centred at f0 + shift."""
    x = 2.0 * (np.asarray(freqs, dtype=float) - cavity.f0 - shift) / cavity.kappa
    return peak / (1.0 + x * x)


def lockin_lineshape(freqs, transmission, fm_depth: float, n_phase: int = 64):
    """First-harmonic lock-in output of a frequency-modulated probe.

    The probe frequency is ``f + fm_depth*cos(phi)``; the output is
    ``(1/pi) integral T(f + fm_depth cos phi) cos phi dphi`` which tends to
    ``fm_depth * dT/df`` for small depths.  The trace is interpolated with a
    cubic spline.
    """
    f = np.asarray(freqs, dtype=float)
    T = np.asarray(transmission, dtype=float)
    if f.shape != T.shape or f.ndim != 1 or len(f) < 4:
        raise ValueError("need matching 1-D frequency and transmission arrays (>= 4 points)")
    if np.any(np.diff(f) <= 0):
        raise ValueError("frequencies must be strictly increasing")
    span = f[-1] - f[0]
    if not 0 < fm_depth < span:
        raise ValueError(f"fm_depth must be in (0, {span}) Hz")
    spline = CubicSpline(f, T)
    phi = 2 * np.pi * (np.arange(n_phase) + 0.5) / n_phase
    c = np.cos(phi)
    samples = spline(f[:, None] + fm_depth * c[None, :])
    return 2.0 * (samples * c[None, :]).mean(axis=1)


def lockin_trace(cavity: CavityParams, coupling: SpinEnsembleCoupling, fields, fm_depth: float):
    """Field-swept lock-in signal with the probe parked at the bare cavity frequency.

    Returns (shift_Hz, lockin) arrays.  The lock-in value is the first
    harmonic of the Lorentzian transmission at ``f0`` after the pull.
    """
    if not fm_depth > 0:
        raise ValueError("fm_depth must be positive")
    shifts = dispersive_shift_spectrum(cavity, coupling, fields)
    phi = 2 * np.pi * (np.arange(64) + 0.5) / 64
    c = np.cos(phi)
    probe = cavity.f0 + fm_depth * c[None, :]
    T = cavity_transmission(probe, cavity, shifts[:, None])
    return shifts, 2.0 * (T * c[None, :]).mean(axis=1)
