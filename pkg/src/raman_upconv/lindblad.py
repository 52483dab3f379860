"""Single-atom three-level model: Hamiltonian, Lindblad generator, steady state.

Superoperators act on the column-major (Fortran order) vectorisation of the
3x3 density matrix, so ``vec(A @ X @ B) == kron(B.T, A) @ vec(X)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.constants import h, k as k_B
from scipy.integrate import solve_ivp
from scipy.linalg import expm

__all__ = [
    "AtomDrive",
    "RelaxationRates",
    "NonUniqueSteadyStateError",
    "IntegrationError",
    "thermal_occupation",
    "build_hamiltonian",
    "build_liouvillian",
    "detuning_generators",
    "steady_state",
    "steady_state_batch",
    "evolve",
    "vec",
    "unvec",
    "check_density_matrix",
]

DIM = 3
_EYE = np.eye(DIM)
TRACE_ROW = _EYE.reshape(-1, order="F").astype(complex)


class NonUniqueSteadyStateError(RuntimeError):
    """The generator's null space is not one-dimensional."""


class IntegrationError(RuntimeError):
    """Time integration of the master equation failed."""


@dataclass(frozen=True)
class AtomDrive:
    """Detunings and Rabi frequencies of one atom, all in rad/s."""

    delta2: float = 0.0
    delta3: float = 0.0
    omega_mu: float = 0.0
    omega_xi: float = 0.0

    def __post_init__(self):
        vals = (self.delta2, self.delta3, self.omega_mu, self.omega_xi)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError(f"non-finite drive parameter in {self}")
        if self.omega_mu < 0 or self.omega_xi < 0:
            raise ValueError("Rabi frequencies must be >= 0")

    def detuned(self, delta2: float, delta3: float) -> "AtomDrive":
        return AtomDrive(delta2, delta3, self.omega_mu, self.omega_xi)


@dataclass(frozen=True)
class RelaxationRates:
    """Dissipation of the three-level atom (rates in 1/s).

    ``inverted_spin`` swaps the direction of the thermal spin flips, for
    Delta configurations in which model level 2 is the *lower* Zeeman state.
    """

    gamma31: float = 60.0
    gamma32: float = 30.0
    gamma21: float = 27.4
    gamma2d: float = 1.7e6
    gamma3d: float = 2.8e6
    n_bath: float = 0.0
    inverted_spin: bool = False

    def __post_init__(self):
        for name in ("gamma31", "gamma32", "gamma21", "gamma2d", "gamma3d", "n_bath"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")

    def collapse_operators(self) -> list[np.ndarray]:
        def sigma(i, j):
            m = np.zeros((DIM, DIM), dtype=complex)
            m[i - 1, j - 1] = 1.0
            return m

        down, up = self.gamma21 * (self.n_bath + 1), self.gamma21 * self.n_bath
        if self.inverted_spin:
            down, up = up, down
        terms = [
            (self.gamma31, sigma(1, 3)),
            (self.gamma32, sigma(2, 3)),
            (down, sigma(1, 2)),
            (up, sigma(2, 1)),
            (self.gamma2d, sigma(2, 2)),
            (self.gamma3d, sigma(3, 3)),
        ]
        return [np.sqrt(rate) * op for rate, op in terms if rate > 0]

    def nonzero(self) -> list[float]:
        vals = [self.gamma31, self.gamma32, self.gamma2d, self.gamma3d,
                self.gamma21 * (self.n_bath + 1), self.gamma21 * self.n_bath]
        return [v for v in vals if v > 0]


def thermal_occupation(frequency: float, temperature: float) -> float:
    """Bose-Einstein occupation ``1/(exp(hf/kT) - 1)`` of a mode at ``frequency`` Hz."""
    if not frequency > 0:
        raise ValueError(f"frequency must be positive, got {frequency}")
    if temperature < 0:
        raise ValueError(f"temperature must be >= 0, got {temperature}")
    if temperature == 0:
        return 0.0
    return float(1.0 / np.expm1(h * frequency / (k_B * temperature)))


def build_hamiltonian(drive: AtomDrive) -> np.ndarray:
    H = np.zeros((DIM, DIM), dtype=complex)
    H[1, 1] = drive.delta2
    H[2, 2] = drive.delta3
    H[0, 1] = H[1, 0] = drive.omega_mu
    H[1, 2] = H[2, 1] = drive.omega_xi
    return H


def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v: np.ndarray) -> np.ndarray:
    """Inverse of :func:`vec`; accepts a trailing axis of length 9."""
    v = np.asarray(v)
    return np.swapaxes(v.reshape(v.shape[:-1] + (DIM, DIM)), -1, -2)


def _spre(A):
    return np.kron(_EYE, A)


def _spost(B):
    return np.kron(B.T, _EYE)


def _commutator_super(H):
    # -i [rho, H] = -i (rho H - H rho)
    return -1j * (_spost(H) - _spre(H))


def _dissipator(c):
    cdc = c.conj().T @ c
    return np.kron(c.conj(), c) - 0.5 * _spre(cdc) - 0.5 * _spost(cdc)


def build_liouvillian(H: np.ndarray, rates: RelaxationRates) -> np.ndarray:
    """Generator of ``drho/dt = -i[rho, H] + sum_k D[c_k] rho`` as a 9x9 matrix."""
    H = np.asarray(H, dtype=complex)
    if H.shape != (DIM, DIM):
        raise ValueError(f"Hamiltonian must be {DIM}x{DIM}, got {H.shape}")
    scale = max(np.abs(H).max(), 1.0)
    if np.abs(H - H.conj().T).max() > 1e-12 * scale:
        raise ValueError("Hamiltonian is not Hermitian")
    L = _commutator_super(H)
    for c in rates.collapse_operators():
        L = L + _dissipator(c)
    return L


def detuning_generators(omega_mu: float, omega_xi: float, rates: RelaxationRates):
    """Split the generator as ``L0 + delta2*L2 + delta3*L3``.

    Used by the ensemble code to assemble many detuned generators at once.
    """
    L0 = build_liouvillian(build_hamiltonian(AtomDrive(0.0, 0.0, omega_mu, omega_xi)), rates)
    s22 = np.zeros((DIM, DIM), dtype=complex)
    s22[1, 1] = 1.0
    s33 = np.zeros((DIM, DIM), dtype=complex)
    s33[2, 2] = 1.0
    return L0, _commutator_super(s22), _commutator_super(s33)


def _check_null_space(L: np.ndarray, tol: float = 1e-8) -> None:
    s = np.linalg.svd(L, compute_uv=False)
    if s[-2] <= tol * s[0]:
        raise NonUniqueSteadyStateError(
            f"generator null space is degenerate: singular values {s[-3:]} "
            f"vs largest {s[0]:.3e}")


def _solve_with_trace(L: np.ndarray) -> np.ndarray:
    """Replace the rho_11 equation by the trace constraint and solve (batched)."""
    scale = np.abs(L).max(axis=(-2, -1), keepdims=True)
    scale[scale == 0] = 1.0
    A = L / scale
    A[..., 0, :] = TRACE_ROW
    b = np.zeros(A.shape[:-1], dtype=complex)
    b[..., 0] = 1.0
    x = np.linalg.solve(A, b[..., None])[..., 0]
    rho = unvec(x)
    return 0.5 * (rho + np.swapaxes(rho.conj(), -1, -2))


def steady_state(gen: np.ndarray, check: bool = True) -> np.ndarray:
    """Unique steady state of a 9x9 generator as a 3x3 density matrix.

    Raises NonUniqueSteadyStateError when the second-smallest singular value
    of the generator is below 1e-8 of the largest.
    """
    gen = np.asarray(gen, dtype=complex)
    if check:
        _check_null_space(gen)
    return _solve_with_trace(gen.copy())


def steady_state_batch(L0, L2, L3, delta2, delta3) -> np.ndarray:
    """Steady states for arrays of detunings; returns shape (N, 3, 3)."""
    d2 = np.asarray(delta2, dtype=float)[:, None, None]
    d3 = np.asarray(delta3, dtype=float)[:, None, None]
    return _solve_with_trace(L0[None] + d2 * L2[None] + d3 * L3[None])


def check_density_matrix(rho: np.ndarray, trace_tol=1e-10, herm_tol=1e-12, psd_tol=1e-10) -> None:
    rho = np.asarray(rho)
    if rho.shape != (DIM, DIM):
        raise ValueError(f"density matrix must be {DIM}x{DIM}")
    norm = max(np.abs(rho).max(), 1e-300)
    if np.abs(rho - rho.conj().T).max() > herm_tol * norm:
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > trace_tol:
        raise ValueError(f"trace {np.trace(rho)} != 1")
    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() < -psd_tol:
        raise ValueError("density matrix has negative eigenvalues")


def evolve(rho0: np.ndarray, gen: np.ndarray, t: float, method: str = "rk",
           rtol: float = 1e-10, atol: float = 1e-13) -> np.ndarray:
    """Propagate ``rho0`` for a time ``t`` under the generator.

    ``method="rk"`` uses adaptive explicit Runge-Kutta (DOP853).  For stiff
    generators integrated to long times use ``method="expm"``, which applies
    the propagator ``exp(gen*t)`` by scaling and squaring.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    rho0 = np.asarray(rho0, dtype=complex)
    if t == 0:
        return rho0.copy()
    gen = np.asarray(gen, dtype=complex)
    if method == "expm":
        out = unvec(expm(gen * t) @ vec(rho0))
    elif method == "rk":
        sol = solve_ivp(lambda _t, y: gen @ y, (0.0, t), vec(rho0), method="DOP853",
                        rtol=rtol, atol=atol)
        if sol.status != 0:
            raise IntegrationError(f"integration failed at t={sol.t[-1]:.3e}: {sol.message}")
        out = unvec(sol.y[:, -1])
    else:
        raise ValueError(f"unknown method {method!r}")
    return out
