"""Forward models of the up-conversion measurements and the loss/rate fit.

Powers follow the instrument reference planes: microwave powers are given
at the cavity input, optical powers at the detector.  The loss budget maps
them to the sample.  Signal powers are reported detector side as well.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .ensemble import (
    InhomogeneousDistribution,
    _optical_half_window,
    _sinh_rule,
    coherence_profile,
    default_cores,
    ensemble_coherence,
    resonant_grid,
)
from .lindblad import (
    AtomDrive,
    RelaxationRates,
    detuning_generators,
    steady_state_batch,
    thermal_occupation,
)
from .propagation import (
    MediumParams,
    OpticalField,
    conversion_efficiency,
    dipole_from_decay_rate,
    power_to_rabi_microwave,
    power_to_rabi_optical,
    sideband_power,
    signal_amplitude,
)
from .spin_levels import FieldConfig, GTensor, splitting_slope, transition_amplitudes, zeeman_split

__all__ = [
    "LossBudget",
    "ModelParams",
    "SweepSpec",
    "OperatingPoint",
    "SweepResult",
    "RamanMap",
    "FitProblem",
    "FitResult",
    "FitFailure",
    "dbm_to_watt",
    "watt_to_dbm",
    "operating_point",
    "power_sweep_microwave",
    "power_sweep_optical",
    "local_slopes",
    "saturation_knee",
    "raman_map",
    "find_maxima",
    "fit_parameters",
    "read_measured_curve",
    "FIT_PARAMETERS",
]


def dbm_to_watt(p_dbm):
    return 1e-3 * 10.0 ** (np.asarray(p_dbm, dtype=float) / 10.0)


def watt_to_dbm(p_w):
    return 10.0 * np.log10(np.asarray(p_w, dtype=float) / 1e-3)


@dataclass(frozen=True)
class LossBudget:
    """Lumped losses in dB.

    ``zeta_mu_dB`` is lost between the microwave source and the cavity.
    ``zeta_xi_inv_dB`` relates detector and sample optical powers:
    ``P_sample[dBm] = P_detector[dBm] - zeta_xi_inv_dB``.
    """

    zeta_mu_dB: float = 13.1
    zeta_xi_inv_dB: float = -6.4

    def __post_init__(self):
        if not (np.isfinite(self.zeta_mu_dB) and np.isfinite(self.zeta_xi_inv_dB)):
            raise ValueError("loss values must be finite")

    def cavity_power(self, p_input):
        return np.asarray(p_input) * 10.0 ** (-self.zeta_mu_dB / 10.0)

    def input_power(self, p_cavity):
        return np.asarray(p_cavity) * 10.0 ** (self.zeta_mu_dB / 10.0)

    def sample_power(self, p_detector):
        return np.asarray(p_detector) * 10.0 ** (-self.zeta_xi_inv_dB / 10.0)

    def detector_power(self, p_sample):
        return np.asarray(p_sample) * 10.0 ** (self.zeta_xi_inv_dB / 10.0)


# Effective coupling-transition dipole (C m).  The radiative estimate from
# gamma32 is 4.6e-32 C m; with it the microwave saturation knee sits near
# 43 dBm.  This smaller value puts the knee at 20 dBm with the default losses
# and rates, and is the calibrated default.
DEFAULT_DIPOLE23 = 1.43e-33


@dataclass(frozen=True)
class ModelParams:
    """Everything the forward model needs besides the swept powers.

    Rates in 1/s, widths in rad/s (standard deviations), frequencies in Hz,
    lengths in m.  ``n_bath`` follows from ``temperature`` at ``f_mu``.
    """

    gamma31: float = 60.0
    gamma32: float = 30.0
    gamma21: float = 27.4
    gamma2d: float = 1.7e6
    gamma3d: float = 2.8e6
    temperature: float = 4.2
    f_mu: float = 4.9e9
    sigma_mu: float = 2 * math.pi * 13e6
    medium: MediumParams = field(default_factory=MediumParams)
    beam_area: float = 0.5e-6
    dipole23: float | None = DEFAULT_DIPOLE23
    quality_factor: float = 300.0
    mode_volume: float = 0.9e-6
    filling_factor: float = 0.8
    g_eff: float = 7.0
    losses: LossBudget = field(default_factory=LossBudget)
    n_mu: int = 31
    n_o: int = 31
    span: float = 4.0
    workers: int = 1

    def __post_init__(self):
        if not self.beam_area > 0:
            raise ValueError("beam_area must be positive")
        if self.dipole23 is not None and not self.dipole23 > 0:
            raise ValueError("dipole23 must be positive")
        if self.n_mu < 3 or self.n_o < 3:
            raise ValueError("need at least 3 quadrature nodes per axis")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if not (self.quality_factor > 0 and self.mode_volume > 0 and self.g_eff > 0):
            raise ValueError("cavity Q, mode volume and g_eff must be positive")
        if not 0 < self.filling_factor <= 1:
            raise ValueError(f"filling factor must lie in (0, 1], got {self.filling_factor}")
        if not self.sigma_mu > 0:
            raise ValueError("sigma_mu must be positive")
        self.rates()  # validates rates and temperature

    @property
    def sigma_o(self) -> float:
        return self.medium.sigma_o

    @property
    def n_bath(self) -> float:
        return thermal_occupation(self.f_mu, self.temperature)

    def rates(self, **overrides) -> RelaxationRates:
        kw = dict(gamma31=self.gamma31, gamma32=self.gamma32, gamma21=self.gamma21,
                  gamma2d=self.gamma2d, gamma3d=self.gamma3d, n_bath=self.n_bath)
        kw.update(overrides)
        return RelaxationRates(**kw)

    @property
    def radiative_dipole23(self) -> float:
        """Upper bound on d23 if all of gamma32 were radiative on this line."""
        return dipole_from_decay_rate(self.gamma32, self.medium.omega31, self.medium.refractive_index)

    @property
    def coupling_dipole(self) -> float:
        return self.radiative_dipole23 if self.dipole23 is None else self.dipole23

    def omega_mu(self, p_input) -> float:
        p_cav = float(self.losses.cavity_power(p_input))
        return power_to_rabi_microwave(p_cav, self.quality_factor, self.mode_volume,
                                       self.filling_factor, self.g_eff, self.f_mu)

    def omega_xi(self, p_detector) -> float:
        p_s = float(self.losses.sample_power(p_detector))
        return power_to_rabi_optical(p_s, self.beam_area, self.coupling_dipole, self.medium.refractive_index)

    def distribution(self, center_mu=0.0, center_o=0.0) -> InhomogeneousDistribution:
        return InhomogeneousDistribution(self.sigma_mu, self.sigma_o, center_mu, center_o)

    @property
    def f_xi(self) -> float:
        return self.medium.omega31 / (2 * math.pi)


@dataclass(frozen=True)
class SweepSpec:
    """A monotone axis of ``steps`` points from ``start`` to ``stop``.

    A zero-width range (start == stop) yields a single point.
    """

    start: float
    stop: float
    steps: int = 1
    scale: str = "linear"

    def __post_init__(self):
        if not (np.isfinite(self.start) and np.isfinite(self.stop)):
            raise ValueError("sweep bounds must be finite")
        if self.stop < self.start:
            raise ValueError("sweep must be increasing (stop >= start)")
        if self.steps < 1:
            raise ValueError("need at least one step")
        if self.scale not in ("linear", "log"):
            raise ValueError(f"unknown scale {self.scale!r}")
        if self.scale == "log" and self.start <= 0:
            raise ValueError("log sweep needs a positive start")
        if self.start < self.stop and self.steps < 2:
            raise ValueError("a non-empty range needs at least 2 steps")

    def values(self) -> np.ndarray:
        if self.start == self.stop:
            return np.array([float(self.start)])
        if self.scale == "log":
            return np.geomspace(self.start, self.stop, self.steps)
        return np.linspace(self.start, self.stop, self.steps)


@dataclass(frozen=True)
class OperatingPoint:
    p_mu_input: float
    p_mu_cavity: float
    p_xi_detector: float
    p_xi_sample: float
    omega_mu: float
    omega_xi: float
    coherence: complex
    signal_field: complex
    p_s_sample: float
    p_s_detector: float
    efficiency: float
    population_difference: float
    thermal_difference: float


def _addressed_population_difference(model: ModelParams, rates, om_mu, om_xi) -> float:
    """rho11 - rho22 of the atoms whose coupling transition is resonant (delta3 = delta2).

    Averaged over the microwave inhomogeneous line; these are the atoms
    that the coupling laser pumps.
    """
    core_mu, _ = default_cores(AtomDrive(0.0, 0.0, om_mu, om_xi), rates)
    n = 4 * model.n_mu + 1
    x, w = _sinh_rule(n, -model.span * model.sigma_mu, model.span * model.sigma_mu, core_mu)
    w = w * model.distribution().density_mu(x)
    L0, L2, L3 = detuning_generators(om_mu, om_xi, rates)
    rho = steady_state_batch(L0, L2, L3, x, x)
    d = (rho[:, 0, 0] - rho[:, 1, 1]).real
    return math.fsum(w * d) / math.fsum(w)


def operating_point(model: ModelParams, p_mu_input: float, p_xi_detector: float,
                    center_mu: float = 0.0, center_o: float = 0.0) -> OperatingPoint:
    """Signal power and efficiency for instrument-side powers (W)."""
    if p_mu_input < 0 or p_xi_detector < 0:
        raise ValueError("powers must be >= 0")
    rates = model.rates()
    om_mu = model.omega_mu(p_mu_input)
    om_xi = model.omega_xi(p_xi_detector)
    p_cav = float(model.losses.cavity_power(p_mu_input))
    p_samp = float(model.losses.sample_power(p_xi_detector))
    dist = model.distribution(center_mu, center_o)
    if om_mu > 0 and om_xi > 0:
        drive = AtomDrive(0.0, 0.0, om_mu, om_xi)
        core_mu, core_o = default_cores(drive, rates)
        grid = resonant_grid(dist, model.n_mu, model.n_o, core_mu, core_o, model.span,
                             omega_mu=om_mu)
        I = ensemble_coherence(drive, rates, dist, grid, model.workers)
        coupling = OpticalField.from_power(p_samp, model.beam_area, model.medium.refractive_index)
        E_S = signal_amplitude(model.medium, I, coupling, om_xi)
    else:
        I, E_S = 0j, 0j
    p_s = sideband_power(E_S, model.beam_area, model.medium.refractive_index)
    eta = conversion_efficiency(p_s, p_cav, model.f_mu, model.f_xi) if p_cav > 0 else 0.0
    nb = model.n_bath
    return OperatingPoint(
        p_mu_input=float(p_mu_input), p_mu_cavity=p_cav,
        p_xi_detector=float(p_xi_detector), p_xi_sample=p_samp,
        omega_mu=om_mu, omega_xi=om_xi, coherence=complex(I), signal_field=complex(E_S),
        p_s_sample=p_s, p_s_detector=float(model.losses.detector_power(p_s)),
        efficiency=eta,
        population_difference=_addressed_population_difference(model, rates, om_mu, om_xi),
        thermal_difference=1.0 / (2 * nb + 1),
    )


@dataclass(frozen=True, eq=False)
class SweepResult:
    """A power sweep; ``x`` is in the units named by ``x_label``."""

    x: np.ndarray
    x_label: str
    points: tuple

    @property
    def p_s(self) -> np.ndarray:
        return np.array([p.p_s_detector for p in self.points])

    @property
    def population_difference(self) -> np.ndarray:
        return np.array([p.population_difference for p in self.points])


def _map_points(fn, args, workers):
    out = [None] * len(args)

    def work(i):
        out[i] = fn(args[i])

    if workers > 1 and len(args) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, range(len(args))))
    else:
        for i in range(len(args)):
            work(i)
    return out


def power_sweep_microwave(model: ModelParams, p_mu_dbm, p_xi_detector: float) -> SweepResult:
    """P_S against microwave input power (dBm) at fixed detected coupling power (W)."""
    x = np.atleast_1d(np.asarray(p_mu_dbm, dtype=float))
    inner = replace(model, workers=1)
    pts = _map_points(lambda p: operating_point(inner, float(dbm_to_watt(p)), p_xi_detector),
                      list(x), model.workers)
    return SweepResult(x, "p_mu_input_dBm", tuple(pts))


def power_sweep_optical(model: ModelParams, p_xi_detector, p_mu_dbm: float) -> SweepResult:
    """P_S against detected coupling power (W) at fixed microwave input power (dBm)."""
    x = np.atleast_1d(np.asarray(p_xi_detector, dtype=float))
    inner = replace(model, workers=1)
    p_mu = float(dbm_to_watt(p_mu_dbm))
    pts = _map_points(lambda p: operating_point(inner, p_mu, float(p)), list(x), model.workers)
    return SweepResult(x, "p_xi_detector_W", tuple(pts))


def local_slopes(x_log, y):
    """Midpoints and d(log10 y)/d(x_log) between neighbouring samples.

    ``x_log`` is already logarithmic (dBm/10 or log10 W).
    """
    x_log = np.asarray(x_log, dtype=float)
    ly = np.log10(np.asarray(y, dtype=float))
    return 0.5 * (x_log[1:] + x_log[:-1]), np.diff(ly) / np.diff(x_log)


def saturation_knee(p_dbm, p_s, threshold: float = 0.5):
    """Input power (dBm) where the log-log slope of P_S first falls to ``threshold``.

    Linear interpolation between slope midpoints; None if it never does.
    """
    mid, s = local_slopes(np.asarray(p_dbm) / 10.0, p_s)
    for i in range(1, len(s)):
        if s[i - 1] > threshold >= s[i]:
            t = (s[i - 1] - threshold) / (s[i - 1] - s[i])
            return float(10.0 * (mid[i - 1] + t * (mid[i] - mid[i - 1])))
    if len(s) and s[0] <= threshold:
        return float(10.0 * mid[0])
    return None


# ---------------------------------------------------------------- Raman map

@dataclass(frozen=True, eq=False)
class RamanMap:
    """Detected signal power (W), shape (len(fields), len(detunings))."""

    fields: np.ndarray
    detunings: np.ndarray
    power: np.ndarray
    resonance_field: float
    predicted_peaks: tuple  # ((B, detuning_Hz), ...)


def _configurations():
    """Four Delta systems: (excited j, coupling ground c, signal ground s)."""
    return [(j, cg, 1 - cg) for j in range(2) for cg in (1, 0)]


def raman_map(model: ModelParams, g_ground: GTensor, g_excited: GTensor, angle: float,
              fields, detunings, p_mu_input: float, p_xi_detector: float) -> RamanMap:
    """Detected sideband power over magnetic field (T) and laser detuning (Hz).

    Each optical line can act as the coupling transition of its own Delta
    system; the four contributions add in power.  ``model.medium.alpha31``
    is read as the absorption of the unsplit line, and the total excited
    state decay rate ``gamma31 + gamma32`` is shared among the branches in
    proportion to the squared spin overlaps.
    """
    if g_ground is None or g_excited is None:
        raise ValueError("g-tensor data is required for the Raman map")
    fields = np.asarray(fields, dtype=float)
    detunings = np.asarray(detunings, dtype=float)
    if fields.ndim != 1 or detunings.ndim != 1 or len(fields) == 0 or len(detunings) == 0:
        raise ValueError("fields and detunings must be non-empty 1-D arrays")
    amp = np.abs(transition_amplitudes(zeeman_split(g_ground, FieldConfig(1.0, angle)),
                                       zeeman_split(g_excited, FieldConfig(1.0, angle))).amplitude)
    kg = splitting_slope(g_ground, angle)
    ke = splitting_slope(g_excited, angle)
    f_mu = model.f_mu
    medium = model.medium
    n = medium.refractive_index
    gamma_tot = model.gamma31 + model.gamma32
    # full-line dipole, scaled like the coupling dipole
    d0 = model.coupling_dipole * math.sqrt(gamma_tot / model.gamma32)
    p_cav = float(model.losses.cavity_power(p_mu_input))
    p_samp = float(model.losses.sample_power(p_xi_detector))
    om_mu = power_to_rabi_microwave(p_cav, model.quality_factor, model.mode_volume,
                                    model.filling_factor, model.g_eff, f_mu)
    om_line = power_to_rabi_optical(p_samp, model.beam_area, d0, n)
    coupling = OpticalField.from_power(p_samp, model.beam_area, n)
    sig_o = model.sigma_o
    nb = model.n_bath

    power = np.zeros((len(fields), len(detunings)))
    if om_mu > 0 and om_line > 0:
        for j, cg, sg in _configurations():
            a_c, a_s = amp[cg, j], amp[sg, j]
            if a_c * a_s < 1e-9:
                continue
            rates = RelaxationRates(gamma_tot * a_s**2, gamma_tot * a_c**2, model.gamma21,
                                    model.gamma2d, model.gamma3d, nb, inverted_spin=(cg == 0))
            drive = AtomDrive(0.0, 0.0, om_mu, om_line * a_c)
            core_mu, core_o = default_cores(drive, rates)
            med = replace(medium, alpha31=medium.alpha31 * a_s**2, dipole_ratio=a_c / a_s,
                          dipole13=d0 * a_s)
            half = _optical_half_window(model.distribution(), core_o, model.span)
            sign = 1.0 if cg == 1 else -1.0
            for ib, B in enumerate(fields):
                fg, fe = kg * B, ke * B
                eg = np.array([-fg / 2, fg / 2])
                ee = np.array([-fe / 2, fe / 2])
                line_s = ee[j] - eg[sg]
                c_mu = sign * 2 * math.pi * (fg - f_mu)
                c_o = 2 * math.pi * (line_s - sign * f_mu - detunings)
                lo, hi = c_mu - model.span * model.sigma_mu, c_mu + model.span * model.sigma_mu
                x2, w2 = _sinh_rule(model.n_mu, lo, hi, core_mu)
                g_mu = np.exp(-0.5 * ((x2 - c_mu) / model.sigma_mu) ** 2) / (
                    math.sqrt(2 * math.pi) * model.sigma_mu)
                F = coherence_profile(drive, rates, x2, model.n_o, core_o, half, model.workers)
                I0 = math.fsum((w2 * g_mu * F).real) + 1j * math.fsum((w2 * g_mu * F).imag)
                I = np.exp(-0.5 * (c_o / sig_o) ** 2) * I0
                for k in range(len(detunings)):
                    E_S = signal_amplitude(med, complex(I[k]), coupling, drive.omega_xi)
                    power[ib, k] += sideband_power(E_S, model.beam_area, n)
    power = np.asarray(model.losses.detector_power(power))

    b_res = f_mu / kg
    fg, fe = f_mu, ke * b_res
    lines = [(-fe / 2) - (-fg / 2), (fe / 2) - (fg / 2), (fe / 2) + (fg / 2), -(fe / 2) - (fg / 2)]
    peaks = tuple((b_res, float(x)) for x in sorted(lines))
    return RamanMap(fields, detunings, power, b_res, peaks)


def find_maxima(values, rel_threshold: float = 0.1):
    """Indices of strict 8-neighbour local maxima above ``rel_threshold`` of the global max."""
    v = np.asarray(values, dtype=float)
    top = v.max()
    if not top > 0:
        return []
    padded = np.pad(v, 1, constant_values=-np.inf)
    out = []
    for i in range(v.shape[0]):
        for j in range(v.shape[1]):
            x = v[i, j]
            if x < rel_threshold * top:
                continue
            nb = padded[i:i + 3, j:j + 3].copy()
            nb[1, 1] = -np.inf
            if x > nb.max():
                out.append((i, j))
    return out


# ---------------------------------------------------------------- fitting

FIT_PARAMETERS = ("gamma2d", "gamma3d", "gamma21", "zeta_mu_dB", "zeta_xi_inv_dB")
_LOG_PARAMS = {"gamma2d", "gamma3d", "gamma21"}
DEFAULT_BOUNDS = {
    "gamma2d": (1e4, 1e8),
    "gamma3d": (1e4, 1e8),
    "gamma21": (1e-1, 1e4),
    "zeta_mu_dB": (-10.0, 40.0),
    "zeta_xi_inv_dB": (-30.0, 10.0),
}


class FitFailure(RuntimeError):
    def __init__(self, message, best):
        super().__init__(message)
        self.best = best


@dataclass
class FitProblem:
    """Two measured curves and the parameters to adjust.

    ``mu_curve`` is (P_mu input in dBm, P_S detected in W) measured at
    ``p_xi_for_mu`` W detected coupling power; ``xi_curve`` is (P_xi detected
    in W, P_S detected in W) at ``p_mu_for_xi_dBm``.
    """

    model: ModelParams
    mu_curve: tuple = ((), ())
    xi_curve: tuple = ((), ())
    p_xi_for_mu: float = 1.8e-3
    p_mu_for_xi_dBm: float = 0.0
    free: tuple = FIT_PARAMETERS
    initial: dict = field(default_factory=dict)
    bounds: dict = field(default_factory=dict)

    def __post_init__(self):
        self.mu_curve = tuple(np.asarray(a, dtype=float) for a in self.mu_curve)
        self.xi_curve = tuple(np.asarray(a, dtype=float) for a in self.xi_curve)
        for name, (x, y) in (("mu_curve", self.mu_curve), ("xi_curve", self.xi_curve)):
            if x.shape != y.shape or x.ndim != 1:
                raise ValueError(f"{name}: x and y must be 1-D of equal length")
            if np.any(y <= 0):
                raise ValueError(f"{name}: signal powers must be positive for log residuals")
        if self.n_points == 0:
            raise ValueError("no data points to fit")
        unknown = set(self.free) - set(FIT_PARAMETERS)
        if unknown:
            raise ValueError(f"unknown fit parameters {sorted(unknown)}")
        if self.n_points < len(self.free):
            raise ValueError("fewer data points than free parameters")
        for name in self.free:
            lo, hi = self.bounds.get(name, DEFAULT_BOUNDS[name])
            if not lo < hi:
                raise ValueError(f"empty bounds for {name}")
            if name in _LOG_PARAMS and lo <= 0:
                raise ValueError(f"bounds for {name} must be positive")

    @property
    def n_points(self) -> int:
        return len(self.mu_curve[0]) + len(self.xi_curve[0])

    def value(self, name):
        if name in self.initial:
            return float(self.initial[name])
        if name.startswith("zeta"):
            return float(getattr(self.model.losses, name))
        return float(getattr(self.model, name))

    def with_values(self, values: dict) -> ModelParams:
        losses = replace(self.model.losses, **{k: v for k, v in values.items() if k.startswith("zeta")})
        rates = {k: v for k, v in values.items() if not k.startswith("zeta")}
        return replace(self.model, losses=losses, **rates)

    def predict(self, model: ModelParams) -> np.ndarray:
        a = power_sweep_microwave(model, self.mu_curve[0], self.p_xi_for_mu).p_s if len(self.mu_curve[0]) else []
        b = power_sweep_optical(model, self.xi_curve[0], self.p_mu_for_xi_dBm).p_s if len(self.xi_curve[0]) else []
        return np.concatenate([np.asarray(a, dtype=float), np.asarray(b, dtype=float)])

    def observed(self) -> np.ndarray:
        return np.concatenate([self.mu_curve[1], self.xi_curve[1]])

    def residuals(self, model: ModelParams) -> np.ndarray:
        """log10(model) - log10(data), both curves concatenated."""
        pred = self.predict(model)
        with np.errstate(divide="ignore"):
            r = np.log10(pred) - np.log10(self.observed())
        # a vanishing prediction is a large but finite miss
        return np.where(np.isfinite(r), r, -30.0)


@dataclass
class FitResult:
    values: dict
    residuals: np.ndarray
    cost: float
    covariance: np.ndarray | None
    parameters: tuple
    history: list
    iterations: int
    converged: bool

    def standard_errors(self) -> dict:
        if self.covariance is None:
            return {}
        return {p: float(math.sqrt(max(self.covariance[i, i], 0.0)))
                for i, p in enumerate(self.parameters)}


def _to_internal(name, v):
    return math.log(v) if name in _LOG_PARAMS else v


def _to_external(name, u):
    return math.exp(u) if name in _LOG_PARAMS else u


def fit_parameters(problem: FitProblem, max_iter: int = 50, ftol: float = 1e-10,
                   xtol: float = 1e-8, lambda0: float = 1e-2) -> FitResult:
    """Bounded Levenberg-Marquardt on the joint log-power residuals.

    Rates are fitted in log space and dB losses linearly; steps are clipped
    into the bounds.  The covariance proxy is ``s^2 (J^T J)^-1`` in the
    internal coordinates (log for rates) from forward-difference Jacobians.
    """
    names = tuple(problem.free)
    fixed = {}
    x = np.array([_to_internal(p, problem.value(p)) for p in names], dtype=float)
    lo = np.array([_to_internal(p, problem.bounds.get(p, DEFAULT_BOUNDS[p])[0]) for p in names])
    hi = np.array([_to_internal(p, problem.bounds.get(p, DEFAULT_BOUNDS[p])[1]) for p in names])
    x = np.clip(x, lo, hi)

    def values_of(u):
        vals = dict(fixed)
        vals.update({p: _to_external(p, ui) for p, ui in zip(names, u)})
        return vals

    def resid(u):
        return problem.residuals(problem.with_values(values_of(u)))

    r = resid(x)
    cost = 0.5 * float(r @ r)
    history = [cost]
    if not names:
        return FitResult({}, r, cost, None, names, history, 0, True)

    def jacobian(u, r0):
        J = np.empty((len(r0), len(u)))
        for k in range(len(u)):
            h = 1e-4 * max(1.0, abs(u[k]))
            up = u.copy()
            up[k] = u[k] + h if u[k] + h <= hi[k] else u[k] - h
            J[:, k] = (resid(up) - r0) / (up[k] - u[k])
        return J

    lam = lambda0
    converged = False
    it = 0
    J = jacobian(x, r)
    while it < max_iter:
        it += 1
        g = J.T @ r
        A = J.T @ J
        accepted = False
        for _ in range(20):
            step = np.linalg.solve(A + lam * np.diag(np.diag(A) + 1e-12), -g)
            x_new = np.clip(x + step, lo, hi)
            r_new = resid(x_new)
            c_new = 0.5 * float(r_new @ r_new)
            if c_new < cost:
                accepted = True
                break
            lam *= 4.0
        if not accepted:
            converged = True  # no downhill step left
            break
        dx = np.abs(x_new - x).max()
        rel = (cost - c_new) / max(cost, 1e-300)
        x, r, cost = x_new, r_new, c_new
        history.append(cost)
        lam = max(lam / 3.0, 1e-12)
        if rel < ftol or dx < xtol:
            converged = True
            break
        J = jacobian(x, r)

    J = jacobian(x, r)
    dof = max(len(r) - len(names), 1)
    try:
        cov = np.linalg.inv(J.T @ J) * (float(r @ r) / dof)
    except np.linalg.LinAlgError:
        cov = None
    result = FitResult(values_of(x), r, cost, cov, names, history, it, converged)
    if not converged:
        raise FitFailure(f"no convergence after {max_iter} iterations", result)
    return result


def read_measured_curve(path):
    """Read a measured curve from CSV.

    The first non-comment row is a header; the independent variable is the
    first column and the signal power the second.  Units come from the column
    names: ``_dBm``, ``_W``, ``_mW`` suffixes are recognised and values are
    returned as (x, P_S in W, x_unit).
    """
    rows = []
    with open(Path(path), newline="") as fh:
        lines = [ln for ln in fh if not ln.lstrip().startswith("#") and ln.strip()]
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None or len(header) < 2:
        raise ValueError(f"{path}: need a header with at least two columns")
    for row in reader:
        rows.append((float(row[0]), float(row[1])))
    if not rows:
        raise ValueError(f"{path}: no data rows")
    x = np.array([r[0] for r in rows])
    y = np.array([r[1] for r in rows])
    x_name, y_name = header[0].strip(), header[1].strip()

    def unit(name):
        for suffix in ("dBm", "mW", "W"):
            if name.endswith("_" + suffix):
                return suffix
        raise ValueError(f"{path}: column {name!r} has no unit suffix (_dBm, _mW, _W)")

    xu, yu = unit(x_name), unit(y_name)
    if yu == "dBm":
        y = dbm_to_watt(y)
    elif yu == "mW":
        y = y * 1e-3
    if xu == "mW":
        x, xu = x * 1e-3, "W"
    return x, y, xu
