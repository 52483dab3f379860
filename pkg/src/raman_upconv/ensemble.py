"""Inhomogeneous averaging of the single-atom coherence rho_31.

Two kinds of grid are provided.  :func:`quadrature_grid` is a plain
tensor-product Gauss-Legendre rule over the Gaussian distribution.  Its
nodes are spaced on the scale of the inhomogeneous widths, so it cannot
resolve the homogeneous response when that is much narrower.  The usual
case here has a homogeneous width of about 1e6 rad/s against inhomogeneous
widths of 8e7 and 6e9 rad/s, so :func:`resonant_grid` is the one the
simulations use.  It maps Gauss-Legendre nodes through ``x = w*sinh(s)``,
which puts them densely inside the homogeneous core (width ``w``) and
log-uniformly across the wings.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .lindblad import AtomDrive, RelaxationRates, detuning_generators, steady_state_batch

__all__ = [
    "InhomogeneousDistribution",
    "QuadratureGrid",
    "quadrature_grid",
    "resonant_grid",
    "default_cores",
    "dressed_poles",
    "optical_rule",
    "coherences",
    "ensemble_coherence",
    "ensemble_average",
    "coherence_profile",
    "polarization",
]

_SQRT2PI = math.sqrt(2 * math.pi)
CHUNK = 4096


@dataclass(frozen=True)
class InhomogeneousDistribution:
    """Uncorrelated 2D Gaussian over (delta2, delta3); widths are std devs in rad/s."""

    sigma_mu: float
    sigma_o: float
    center_mu: float = 0.0
    center_o: float = 0.0

    def __post_init__(self):
        if not (self.sigma_mu > 0 and self.sigma_o > 0):
            raise ValueError("distribution widths must be positive")

    def density_mu(self, d2):
        x = (np.asarray(d2) - self.center_mu) / self.sigma_mu
        return np.exp(-0.5 * x * x) / (_SQRT2PI * self.sigma_mu)

    def density_o(self, d3):
        x = (np.asarray(d3) - self.center_o) / self.sigma_o
        return np.exp(-0.5 * x * x) / (_SQRT2PI * self.sigma_o)

    def density(self, d2, d3):
        return self.density_mu(d2) * self.density_o(d3)

    def optical_line_factor(self) -> float:
        """sqrt(2 pi) sigma_o g_o(0): the optical density seen by sideband-resonant atoms."""
        return math.exp(-0.5 * (self.center_o / self.sigma_o) ** 2)


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Nodes (delta2, delta3) and weights for integrals over the distribution.

    ``optical_weighting`` is "gaussian" when the weights contain the full
    density g(delta2, delta3), or "flat" when they contain g_mu(delta2) only
    (uniform measure in delta3).
    """

    delta2: np.ndarray
    delta3: np.ndarray
    weights: np.ndarray
    span: float
    dist: InhomogeneousDistribution
    optical_weighting: str = "gaussian"

    def __len__(self):
        return len(self.weights)

    @property
    def nodes(self):
        return np.column_stack([self.delta2, self.delta3])


def _gauss_legendre(n, a, b):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


def _sinh_rule(n, lo, hi, width, center=0.0):
    """Gauss-Legendre on [lo, hi] after the substitution x = center + width*sinh(s)."""
    s, ws = _gauss_legendre(n, math.asinh((lo - center) / width), math.asinh((hi - center) / width))
    return center + width * np.sinh(s), ws * width * np.cosh(s)


def _double_sinh_rule(n, lo, hi, width, center=0.0):
    """Gauss-Legendre after x = center + width*sinh(sinh(t)).

    The first map turns a Lorentzian of half-width ``width`` into a sech in
    s; the second keeps the nodes on that sech instead of on its long,
    exponentially small tail.
    """
    a, b = math.asinh((lo - center) / width), math.asinh((hi - center) / width)
    t, wt = _gauss_legendre(n, math.asinh(a), math.asinh(b))
    s = np.sinh(t)
    return center + width * np.sinh(s), wt * np.cosh(t) * width * np.cosh(s)


def quadrature_grid(dist: InhomogeneousDistribution, n_mu: int, n_o: int,
                    span: float = 4.0) -> QuadratureGrid:
    """Tensor-product Gauss-Legendre grid over center +- span*sigma on each axis."""
    if n_mu < 3 or n_o < 3:
        raise ValueError(f"need at least 3 nodes per axis, got ({n_mu}, {n_o})")
    if not span > 0:
        raise ValueError("span must be positive")
    x2, w2 = _gauss_legendre(n_mu, dist.center_mu - span * dist.sigma_mu,
                             dist.center_mu + span * dist.sigma_mu)
    x3, w3 = _gauss_legendre(n_o, dist.center_o - span * dist.sigma_o,
                             dist.center_o + span * dist.sigma_o)
    D2, D3 = np.meshgrid(x2, x3, indexing="ij")
    W = np.outer(w2 * dist.density_mu(x2), w3 * dist.density_o(x3))
    return QuadratureGrid(D2.ravel(), D3.ravel(), W.ravel(), span, dist, "gaussian")


def default_cores(drive: AtomDrive, rates: RelaxationRates) -> tuple[float, float]:
    """Homogeneous half-widths (rad/s) used to place resonant-grid nodes."""
    core_mu = max(0.5 * rates.gamma2d, drive.omega_mu, drive.omega_xi, 1.0)
    core_o = max(0.5 * (rates.gamma3d + rates.gamma2d), drive.omega_xi, 1.0)
    return core_mu, core_o


def dressed_poles(delta2: float, omega_mu: float) -> tuple[float, float]:
    """Energies of the microwave-dressed ground states, where rho_31 peaks in delta3.

    For a weak drive they tend to delta3 = 0 (sideband resonance) and
    delta3 = delta2 (coupling resonance).
    """
    r = math.hypot(0.5 * delta2, omega_mu)
    return 0.5 * delta2 - r, 0.5 * delta2 + r


def optical_rule(delta2: float, n_o: int, core_o: float, half_window: float,
                 omega_mu: float = 0.0):
    """delta3 nodes for one delta2 value: one double-sinh-mapped piece per pole.

    The line is split midway between the two dressed-state poles.
    """
    lo, hi = dressed_poles(delta2, omega_mu)
    W = half_window + (hi - lo)
    mid = 0.5 * (lo + hi)
    xa, wa = _double_sinh_rule(n_o, mid - W, mid, core_o, lo)
    xb, wb = _double_sinh_rule(n_o, mid, mid + W, core_o, hi)
    return np.concatenate([xa, xb]), np.concatenate([wa, wb])


def _optical_half_window(dist, core_o, span):
    return max(6.0 * core_o, span * dist.sigma_o)


def resonant_grid(dist: InhomogeneousDistribution, n_mu: int, n_o: int,
                  core_mu: float, core_o: float, span: float = 4.0,
                  optical_weighting: str = "flat", omega_mu: float = 0.0) -> QuadratureGrid:
    """Grid resolving the homogeneous response inside the inhomogeneous line.

    delta2 spans center_mu +- span*sigma_mu with ``n_mu`` nodes clustered
    around delta2 = 0.  Each delta2 node carries ``2*n_o`` delta3 nodes over
    +-max(6*core_o, span*sigma_o), clustered on the two poles of rho_31
    (see :func:`dressed_poles`; pass the microwave Rabi frequency as
    ``omega_mu``).  With ``optical_weighting="flat"`` the optical Gaussian is
    left out of the weights.
    """
    if n_mu < 3 or n_o < 3:
        raise ValueError(f"need at least 3 nodes per axis, got ({n_mu}, {n_o})")
    if not (core_mu > 0 and core_o > 0 and span > 0):
        raise ValueError("core widths and span must be positive")
    if optical_weighting not in ("flat", "gaussian"):
        raise ValueError(f"unknown optical weighting {optical_weighting!r}")
    x2, w2 = _sinh_rule(n_mu, dist.center_mu - span * dist.sigma_mu,
                        dist.center_mu + span * dist.sigma_mu, core_mu)
    w2 = w2 * dist.density_mu(x2)
    half = _optical_half_window(dist, core_o, span)
    if optical_weighting == "gaussian":
        half = max(half, abs(dist.center_o) + span * dist.sigma_o)
    d2s, d3s, ws = [], [], []
    for d2, wt in zip(x2, w2):
        x3, w3 = optical_rule(d2, n_o, core_o, half, omega_mu)
        if optical_weighting == "gaussian":
            w3 = w3 * dist.density_o(x3)
        d2s.append(np.full(len(x3), d2))
        d3s.append(x3)
        ws.append(w3 * wt)
    return QuadratureGrid(np.concatenate(d2s), np.concatenate(d3s), np.concatenate(ws),
                          span, dist, optical_weighting)


def coherences(drive: AtomDrive, rates: RelaxationRates, delta2, delta3,
               workers: int = 1) -> np.ndarray:
    """Steady-state rho_31 at each (delta2, delta3) pair.

    Chunks are solved independently and written back by index, so the result
    does not depend on ``workers``.
    """
    L0, L2, L3 = detuning_generators(drive.omega_mu, drive.omega_xi, rates)
    delta2 = np.asarray(delta2, dtype=float)
    delta3 = np.asarray(delta3, dtype=float)
    out = np.empty(len(delta2), dtype=complex)
    bounds = [(i, min(i + CHUNK, len(delta2))) for i in range(0, len(delta2), CHUNK)]

    def work(b):
        lo, hi = b
        out[lo:hi] = steady_state_batch(L0, L2, L3, delta2[lo:hi], delta3[lo:hi])[:, 2, 0]

    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, bounds))
    else:
        for b in bounds:
            work(b)
    return out


def _fsum_complex(values) -> complex:
    # correctly rounded, hence independent of summation order
    return complex(math.fsum(values.real), math.fsum(values.imag))


def ensemble_coherence(drive: AtomDrive, rates: RelaxationRates,
                       dist: InhomogeneousDistribution, grid: QuadratureGrid,
                       workers: int = 1) -> complex:
    """The ensemble coherence ``I`` (units of rad/s) under the flat-optical-line reading.

    ``I = sqrt(2 pi) sigma_o g_o(0) * integral g_mu(delta2) rho_31 d(delta2) d(delta3)``.
    The optical density is evaluated once, for atoms resonant with the
    sideband (delta3 = 0), because it is effectively constant over the
    homogeneous support of rho_31.  ``drive.delta2`` and ``drive.delta3``
    are ignored; the grid supplies the detunings.
    """
    if grid.dist != dist:
        raise ValueError("grid was built for a different distribution")
    if grid.span < 3:
        raise ValueError(f"grid must cover at least 3 sigma per axis, got span={grid.span}")
    rho31 = coherences(drive, rates, grid.delta2, grid.delta3, workers)
    if grid.optical_weighting == "flat":
        factor = dist.optical_line_factor()
        return factor * _fsum_complex(grid.weights * rho31)
    # divide the optical Gaussian back out of the weights
    g0 = dist.density_o(0.0)
    ratio = g0 / dist.density_o(grid.delta3)
    return _SQRT2PI * dist.sigma_o * _fsum_complex(grid.weights * ratio * rho31)


def ensemble_average(drive: AtomDrive, rates: RelaxationRates, grid: QuadratureGrid,
                     workers: int = 1) -> complex:
    """The density-weighted average of rho_31 over both detunings (dimensionless)."""
    if grid.optical_weighting != "gaussian":
        raise ValueError("ensemble_average needs a grid whose weights include g_o")
    rho31 = coherences(drive, rates, grid.delta2, grid.delta3, workers)
    return _fsum_complex(grid.weights * rho31)


def coherence_profile(drive: AtomDrive, rates: RelaxationRates, delta2, n_o: int,
                      core_o: float, half_window: float, workers: int = 1) -> np.ndarray:
    """F(delta2) = integral of rho_31 over delta3 with uniform measure, per delta2.

    The profile does not depend on the distribution centres, so sweeps that
    only move the centres can reuse it.
    """
    delta2 = np.asarray(delta2, dtype=float)
    pieces = [optical_rule(d2, n_o, core_o, half_window, drive.omega_mu) for d2 in delta2]
    d3 = np.concatenate([p[0] for p in pieces])
    w3 = np.concatenate([p[1] for p in pieces])
    d2 = np.repeat(delta2, [len(p[0]) for p in pieces])
    rho31 = coherences(drive, rates, d2, d3, workers)
    prods = (w3 * rho31).reshape(len(delta2), -1)
    return np.array([_fsum_complex(row) for row in prods])


def polarization(z: float, medium, coherence: complex) -> float:
    """Real polarisation density (C/m^2) at depth ``z`` for an averaged coherence.

    ``P(z) = N d13 <rho31> exp(i n k_mu z) + c.c.``
    """
    if not 0 <= z <= medium.length:
        raise ValueError(f"z={z} outside the sample [0, {medium.length}]")
    phase = np.exp(1j * medium.refractive_index * medium.k_mu * z)
    return float(2.0 * medium.atom_density * medium.dipole13 * np.real(coherence * phase))
