"""Zeeman structure of the ground and excited Kramers doublets.

Both manifolds are treated as effective spins 1/2 with anisotropic g-tensors
written in the (D1, D2, b) frame.  Level labels follow the usual convention:
|1>, |2> are the lower and upper ground states and |3>, |4> the lower and
upper excited states.  Optical line positions are quoted relative to the
zero-field line centre, in Hz.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.constants import h
from scipy.optimize import minimize_scalar

from .propagation import MU_B

__all__ = [
    "GTensor",
    "FieldConfig",
    "ZeemanLevels",
    "LevelDiagram",
    "TransitionTable",
    "DegenerateOptimumError",
    "OptimumReport",
    "zeeman_split",
    "level_diagram",
    "transition_amplitudes",
    "overlap_23",
    "optimal_angle",
    "line_positions",
    "absorption_spectrum",
    "load_g_tensors",
    "bundled_g_tensors",
    "splitting_slope",
]

# Pauli matrices / 2
_S = 0.5 * np.array([
    [[0, 1], [1, 0]],
    [[0, -1j], [1j, 0]],
    [[1, 0], [0, -1]],
], dtype=complex)


class DegenerateOptimumError(ValueError):
    """The overlap objective is flat, so no angle is preferred."""


@dataclass(frozen=True, eq=False)
class GTensor:
    matrix: np.ndarray
    label: str = ""

    def __post_init__(self):
        g = np.asarray(self.matrix, dtype=float)
        if g.shape != (3, 3):
            raise ValueError(f"g-tensor must be 3x3, got {g.shape}")
        if not np.all(np.isfinite(g)):
            raise ValueError("g-tensor has non-finite entries")
        scale = max(np.abs(g).max(), 1.0)
        if np.abs(g - g.T).max() > 1e-12 * scale:
            raise ValueError("g-tensor must be symmetric")
        if np.linalg.eigvalsh(g).min() < -1e-12 * scale:
            raise ValueError("g-tensor must be positive semidefinite")
        object.__setattr__(self, "matrix", g)

    @classmethod
    def isotropic(cls, g: float, label: str = "") -> "GTensor":
        return cls(g * np.eye(3), label)

    def principal_values(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)


@dataclass(frozen=True)
class FieldConfig:
    """Static field of ``magnitude`` tesla at ``angle`` degrees from D1 in the D1-D2 plane."""

    magnitude: float
    angle: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.magnitude) and self.magnitude >= 0):
            raise ValueError(f"field magnitude must be >= 0, got {self.magnitude}")
        if not np.isfinite(self.angle):
            raise ValueError("angle must be finite")
        object.__setattr__(self, "angle", float(self.angle) % 360.0)

    @property
    def direction(self) -> np.ndarray:
        a = math.radians(self.angle)
        return np.array([math.cos(a), math.sin(a), 0.0])

    @property
    def vector(self) -> np.ndarray:
        return self.magnitude * self.direction


@dataclass(frozen=True, eq=False)
class ZeemanLevels:
    """Splitting (Hz) and eigenvectors (columns: lower, upper) of one doublet."""

    splitting: float
    vectors: np.ndarray


@dataclass(frozen=True, eq=False)
class LevelDiagram:
    fg: float
    fe: float
    ground: np.ndarray
    excited: np.ndarray
    field: FieldConfig


@dataclass(frozen=True, eq=False)
class TransitionTable:
    """Optical lines between ground state i and excited state j.

    ``amplitude[i, j]`` is the spin overlap <g_i|e_j> and ``detuning[i, j]``
    the line position in Hz; index 0 is the lower state of each doublet.
    """

    amplitude: np.ndarray
    detuning: np.ndarray

    @property
    def strength(self) -> np.ndarray:
        return np.abs(self.amplitude) ** 2

    def lines(self):
        """(ground, excited, detuning_Hz, strength) with 1-based level labels."""
        out = []
        for i in range(2):
            for j in range(2):
                out.append((i + 1, j + 3, float(self.detuning[i, j]), float(self.strength[i, j])))
        return out


def _hamiltonian(g: GTensor, bvec) -> np.ndarray:
    # H = mu_B B . g . S, in joules
    heff = MU_B * (np.asarray(bvec) @ g.matrix)
    return np.einsum("k,kij->ij", heff, _S)


def zeeman_split(g: GTensor, field: FieldConfig) -> ZeemanLevels:
    """Diagonalise the effective spin Hamiltonian; splitting is the eigenvalue gap over h."""
    if field.magnitude == 0:
        return ZeemanLevels(0.0, np.eye(2, dtype=complex))
    w, v = np.linalg.eigh(_hamiltonian(g, field.vector))
    return ZeemanLevels(float((w[1] - w[0]) / h), v)


def splitting_slope(g: GTensor, angle: float) -> float:
    """Splitting per tesla (Hz/T) at a given angle; the splitting is linear in |B|."""
    return float(MU_B * np.linalg.norm(FieldConfig(1.0, angle).direction @ g.matrix) / h)


def level_diagram(g_ground: GTensor, g_excited: GTensor, field: FieldConfig) -> LevelDiagram:
    zg = zeeman_split(g_ground, field)
    ze = zeeman_split(g_excited, field)
    return LevelDiagram(zg.splitting, ze.splitting, zg.vectors, ze.vectors, field)


def _check_orthonormal(v, name, tol=1e-10):
    v = np.asarray(v)
    if v.shape != (2, 2):
        raise ValueError(f"{name} eigenvectors must be a 2x2 array")
    if np.abs(v.conj().T @ v - np.eye(2)).max() > tol:
        raise ValueError(f"{name} eigenvectors are not orthonormal")


def transition_amplitudes(ground, excited=None) -> TransitionTable:
    """Overlaps between ground and excited spin states, with line positions.

    Accepts a LevelDiagram, or two ZeemanLevels (ground, excited).
    """
    if isinstance(ground, LevelDiagram):
        vg, ve, fg, fe = ground.ground, ground.excited, ground.fg, ground.fe
    else:
        if excited is None:
            raise ValueError("need both ground and excited levels")
        vg, ve, fg, fe = ground.vectors, excited.vectors, ground.splitting, excited.splitting
    _check_orthonormal(vg, "ground")
    _check_orthonormal(ve, "excited")
    amp = vg.conj().T @ ve
    eg = np.array([-fg / 2, fg / 2])
    ee = np.array([-fe / 2, fe / 2])
    return TransitionTable(amp, ee[None, :] - eg[:, None])


def overlap_23(g_ground: GTensor, g_excited: GTensor, angle: float) -> float:
    """|<2|3>|: upper ground state against lower excited state at ``angle`` degrees."""
    f = FieldConfig(1.0, angle)
    vg = zeeman_split(g_ground, f).vectors
    ve = zeeman_split(g_excited, f).vectors
    return float(abs(np.vdot(vg[:, 1], ve[:, 0])))


@dataclass(frozen=True)
class OptimumReport:
    angle: float
    overlap: float
    local_maxima: tuple  # ((angle, overlap), ...) sorted by overlap, descending


def optimal_angle(g_ground: GTensor, g_excited: GTensor, step: float = 0.5,
                  xtol: float = 1e-6) -> OptimumReport:
    """Angle in [0, 180) maximising |<2|3>| for fields in the D1-D2 plane.

    A ``step``-degree grid seeds every local maximum; each is refined by
    golden-section search.  All local maxima are reported.
    """
    if not 0 < step <= 10:
        raise ValueError("step must be in (0, 10] degrees")
    n = int(round(180.0 / step))
    grid = np.arange(n) * (180.0 / n)
    vals = np.array([overlap_23(g_ground, g_excited, a) for a in grid])
    if vals.max() - vals.min() <= 1e-9:
        raise DegenerateOptimumError("overlap is independent of angle (proportional g-tensors?)")
    found = []
    for i in range(n):
        left, right = vals[i - 1], vals[(i + 1) % n]
        if vals[i] > left and vals[i] >= right:
            a0 = grid[i]
            res = minimize_scalar(lambda a: -overlap_23(g_ground, g_excited, a),
                                  bracket=(a0 - step, a0, a0 + step), method="golden",
                                  options={"xtol": xtol})
            found.append((float(res.x % 180.0), float(-res.fun)))
    found.sort(key=lambda t: -t[1])
    return OptimumReport(found[0][0], found[0][1], tuple(found))


def line_positions(fg: float, fe: float) -> dict:
    """Detunings (Hz) of the spin-preserving and spin-flip optical lines."""
    if fg < 0 or fe < 0:
        raise ValueError("splittings must be >= 0")
    strong = abs(fg - fe) / 2
    weak = (fg + fe) / 2
    return {"strong": (-strong, strong), "weak": (-weak, weak)}


def absorption_spectrum(table: TransitionTable, sigma_o: float, alpha31_peak: float,
                        detunings) -> np.ndarray:
    """alpha(detuning) for four Gaussian lines of common std ``sigma_o`` (Hz).

    The two ground states are taken as equally populated, so line (i, j) has
    height ``alpha31_peak * |a_ij|^2 / 2``.  At zero field the lines merge
    into one of height ``alpha31_peak``.
    """
    if not sigma_o > 0:
        raise ValueError("sigma_o must be positive")
    x = np.asarray(detunings, dtype=float)
    out = np.zeros_like(x)
    for i in range(2):
        for j in range(2):
            s = table.strength[i, j]
            out = out + 0.5 * s * np.exp(-0.5 * ((x - table.detuning[i, j]) / sigma_o) ** 2)
    return alpha31_peak * out


_HEADER = re.compile(r"^\[\s*site\s+(\d+)\s+(ground|excited)\s*\]$", re.IGNORECASE)


def load_g_tensors(path) -> dict:
    """Read labelled 3x3 blocks into ``{(site, manifold): GTensor}``.

    Blocks start with ``[site <n> <ground|excited>]`` followed by three rows;
    ``#`` starts a comment.
    """
    text = Path(path).read_text()
    out, key, rows = {}, None, []

    def close():
        if key is None:
            return
        if len(rows) != 3:
            raise ValueError(f"{path}: block {key} has {len(rows)} rows, expected 3")
        out[key] = GTensor(np.array(rows), f"site {key[0]} {key[1]}")

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _HEADER.match(line)
        if m:
            close()
            key, rows = (int(m.group(1)), m.group(2).lower()), []
            continue
        if key is None:
            raise ValueError(f"{path}:{lineno}: data before the first block header")
        try:
            row = [float(t) for t in line.split()]
        except ValueError as err:
            raise ValueError(f"{path}:{lineno}: {err}") from None
        if len(row) != 3:
            raise ValueError(f"{path}:{lineno}: expected 3 numbers, got {len(row)}")
        rows.append(row)
    close()
    if not out:
        raise ValueError(f"{path}: no g-tensor blocks found")
    return out


def bundled_g_tensors():
    """Path to the bundled Er:YSO example tensors (external literature values)."""
    return resources.files("raman_upconv").joinpath("data/er_yso_g_tensors.txt")
