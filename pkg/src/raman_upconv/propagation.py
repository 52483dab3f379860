"""From ensemble coherence to sideband field, power and conversion efficiency."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.constants import c, epsilon_0, hbar, mu_0, physical_constants

__all__ = [
    "MU_B",
    "MediumParams",
    "OpticalField",
    "dipole_from_decay_rate",
    "alpha_from_density",
    "density_from_alpha",
    "phase_matching_factor",
    "signal_amplitude",
    "sideband_power",
    "heterodyne_beat",
    "conversion_efficiency",
    "field_from_power",
    "power_from_field",
    "power_to_rabi_optical",
    "power_to_rabi_microwave",
    "source_coefficient",
    "OPTICALLY_THIN_LIMIT",
]

MU_B = physical_constants["Bohr magneton"][0]
OPTICALLY_THIN_LIMIT = 0.5
ER_YSO_WAVELENGTH = 1536.478e-9


def dipole_from_decay_rate(rate: float, omega: float, refractive_index: float = 1.0) -> float:
    """Transition dipole (C m) whose spontaneous emission rate in a medium of index n is ``rate``.

    Inverts ``A = n omega^3 d^2 / (3 pi eps0 hbar c^3)``; local-field
    corrections are ignored.
    """
    if rate < 0 or omega <= 0 or refractive_index <= 0:
        raise ValueError("need rate >= 0, omega > 0, n > 0")
    return math.sqrt(3 * math.pi * epsilon_0 * hbar * c**3 * rate / (refractive_index * omega**3))


def alpha_from_density(density, dipole13, omega31, refractive_index, sigma_o):
    """Line-centre intensity absorption coefficient (1/m) of a Gaussian-broadened line.

    Uses the Rabi convention Omega = d E / (2 hbar) and the homogeneous line
    area pi, giving ``alpha = pi mu0 omega c N d^2 g_o(0) / (n hbar)``.
    """
    g0 = 1.0 / (math.sqrt(2 * math.pi) * sigma_o)
    return math.pi * mu_0 * omega31 * c * density * dipole13**2 * g0 / (refractive_index * hbar)


def density_from_alpha(alpha, dipole13, omega31, refractive_index, sigma_o):
    return alpha / alpha_from_density(1.0, dipole13, omega31, refractive_index, sigma_o)


def _default_omega31():
    return 2 * math.pi * c / ER_YSO_WAVELENGTH


@dataclass(frozen=True)
class MediumParams:
    """Propagation constants of the doped crystal (SI units, angular frequencies in rad/s).

    ``alpha31`` is the measured absorption coefficient of the signal
    transition; the atom density is derived from it, the absolute dipole
    ``dipole13`` and the optical inhomogeneous width ``sigma_o``.
    """

    length: float = 12e-3
    refractive_index: float = 1.8
    alpha31: float = 20.0
    omega31: float = field(default_factory=_default_omega31)
    omega_mu: float = 2 * math.pi * 4.9e9
    dipole_ratio: float = math.sqrt(30.0 / 60.0)
    dipole13: float | None = None
    sigma_o: float = 2 * math.pi * 1e9

    def __post_init__(self):
        for name in ("length", "refractive_index", "alpha31", "omega31", "omega_mu",
                     "dipole_ratio", "sigma_o"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v}")
        if self.dipole13 is None:
            d13 = dipole_from_decay_rate(60.0, self.omega31, self.refractive_index)
            object.__setattr__(self, "dipole13", d13)

    @property
    def k31(self) -> float:
        return self.omega31 / c

    @property
    def k_mu(self) -> float:
        return self.omega_mu / c

    @property
    def k32(self) -> float:
        return self.k31 - self.k_mu

    @property
    def optical_depth(self) -> float:
        return self.alpha31 * self.length

    @property
    def atom_density(self) -> float:
        return density_from_alpha(self.alpha31, self.dipole13, self.omega31,
                                  self.refractive_index, self.sigma_o)

    def with_density(self, density: float) -> "MediumParams":
        alpha = alpha_from_density(density, self.dipole13, self.omega31,
                                   self.refractive_index, self.sigma_o)
        return replace(self, alpha31=alpha)


def field_from_power(power, beam_area, refractive_index):
    """Peak field amplitude (V/m) of a flat-top beam: P = n eps0 c E^2 A / 2."""
    return np.sqrt(2 * np.asarray(power) / (refractive_index * epsilon_0 * c * beam_area))


def power_from_field(amplitude, beam_area, refractive_index):
    return 0.5 * refractive_index * epsilon_0 * c * np.abs(amplitude) ** 2 * beam_area


@dataclass(frozen=True)
class OpticalField:
    amplitude: float
    power: float
    beam_area: float

    @classmethod
    def from_power(cls, power, beam_area, refractive_index):
        if power < 0 or beam_area <= 0:
            raise ValueError("need power >= 0 and beam_area > 0")
        return cls(float(field_from_power(power, beam_area, refractive_index)), power, beam_area)


def phase_matching_factor(n: float, k_mu: float, length: float) -> float:
    """Re[(1/L) int_0^L exp(i n k_mu z) dz] = sin(theta)/theta, theta = n k_mu L."""
    if not length > 0:
        raise ValueError("length must be positive")
    theta = n * k_mu * length
    return float(np.sinc(theta / np.pi))


def source_coefficient(medium: MediumParams) -> float:
    """mu0 omega31 c / (2 n): dE_S/dz = i * coefficient * P(z)."""
    return mu_0 * medium.omega31 * c / (2 * medium.refractive_index)


def signal_amplitude(medium: MediumParams, I: complex, coupling: OpticalField,
                     omega_xi: float) -> complex:
    """Complex sideband amplitude (V/m) at the sample exit, optically thin limit.

    ``|E_S| = (alpha31 L / 2) (d23/d13) (|I| / (pi Omega_xi)) |PM| E_xi``
    with the phase of ``i I``.
    """
    if not omega_xi > 0:
        raise ValueError("coupling Rabi frequency must be positive")
    od = medium.optical_depth
    if od > OPTICALLY_THIN_LIMIT:
        warnings.warn(f"optical depth {od:.3g} exceeds the optically thin limit "
                      f"{OPTICALLY_THIN_LIMIT}", stacklevel=2)
    pm = phase_matching_factor(medium.refractive_index, medium.k_mu, medium.length)
    return complex(1j * I * (od / 2) * medium.dipole_ratio / (math.pi * omega_xi)
                   * pm * coupling.amplitude)


def sideband_power(E_S, beam_area, refractive_index):
    if beam_area < 0:
        raise ValueError("beam_area must be >= 0")
    return float(power_from_field(E_S, beam_area, refractive_index))


def heterodyne_beat(P_S, P_xi):
    """Beat-note amplitude proxy 2 sqrt(P_S P_xi) (W)."""
    if P_S < 0 or P_xi < 0:
        raise ValueError("powers must be >= 0")
    return 2.0 * math.sqrt(P_S * P_xi)


def conversion_efficiency(P_S, P_mu, f_mu, f_xi):
    """Photon-number conversion efficiency (P_S/P_mu)(f_mu/f_xi)."""
    if not P_mu > 0:
        raise ValueError("microwave power must be positive")
    if not (f_mu > 0 and f_xi > 0):
        raise ValueError("frequencies must be positive")
    return (P_S / P_mu) * (f_mu / f_xi)


def power_to_rabi_optical(P, beam_area, d23, refractive_index):
    """Omega_xi = d23 E / (2 hbar), E the field amplitude carrying power P."""
    if P < 0 or beam_area <= 0 or d23 < 0:
        raise ValueError("need P >= 0, beam_area > 0, d23 >= 0")
    return float(d23 * field_from_power(P, beam_area, refractive_index) / (2 * hbar))


def power_to_rabi_microwave(P, quality_factor, mode_volume, filling_factor, g_eff, f):
    """Omega_mu = g_eff mu_B B_ac / (2 hbar).

    The field uses B_ac = sqrt(2 mu0 Q P / (omega V)) * sqrt(filling_factor),
    which is the peak field of the stored energy Q P / omega.
    """
    if P < 0 or quality_factor <= 0 or mode_volume <= 0 or f <= 0:
        raise ValueError("need P >= 0 and positive Q, mode volume, frequency")
    if not 0 < filling_factor <= 1:
        raise ValueError("filling factor must be in (0, 1]")
    omega = 2 * math.pi * f
    b_ac = math.sqrt(2 * mu_0 * quality_factor * P / (omega * mode_volume)) * math.sqrt(filling_factor)
    return g_eff * MU_B * b_ac / (2 * hbar)
