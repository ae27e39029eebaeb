"""Weak order-2 midpoint step and its two-qubit weak-measurement realization."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..numerics import expm_skew
from .weak1 import realify

Array = np.ndarray
SQRT2 = np.sqrt(2.0)
SQRT3 = np.sqrt(3.0)

# ancilla block order of the two-qubit register
BLOCKS = ("00", "10", "01", "11")


@dataclass
class Weak2Midpoint:
    """Midpoint coefficients of one weak-2 step.

    Attributes
    ----------
    A, V, Vdot : ndarray
        Drift, noise and noise derivative at ``t_n + dt/2``.
    B, C : ndarray
        The packaged ``dt^{3/2}`` operators.
    G1, G2, G3 : ndarray
        Couplings of the blocks ``10``, ``01`` and ``11`` to ``00``.
    """

    t: float
    dt: float
    A: Array
    V: Array
    Vdot: Array
    B: Array
    C: Array
    G1: Array
    G2: Array
    G3: Array
    noise_block: bool

    @classmethod
    def from_model(cls, model, t_n: float, dt: float, *, noise_block: bool = False, fd_step: Optional[float] = None):
        if model.n_channels != 1:
            raise ValueError("weak-2 steps support a single noise channel only")
        tm = t_n + 0.5 * dt
        V = model.noise(tm)[0]
        step = min(1e-6, dt / 100.0) if fd_step is None else fd_step
        Vdot = model.noise_dot(tm, step)[0]
        A = -0.5 * V.conj().T @ V if noise_block else model.drift(tm)
        return cls.from_operators(A, V, Vdot, dt, t=tm, noise_block=noise_block)

    @classmethod
    def from_operators(cls, A, V, Vdot, dt: float, *, t: float = 0.0, noise_block: bool = False):
        A = np.asarray(A, dtype=np.complex128)
        V = np.asarray(V, dtype=np.complex128)
        Vdot = np.asarray(Vdot, dtype=np.complex128)
        AV, VA = A @ V, V @ A
        B = 0.5 * (AV + Vdot + VA)
        C = (AV - Vdot - VA) / (2.0 * SQRT3)
        G1 = np.sqrt(dt) * V + dt**1.5 * (B + V @ V.conj().T @ V / 6.0)
        G2 = dt / SQRT2 * (V @ V)
        G3 = dt**1.5 * C
        return cls(t, dt, A, V, Vdot, B, C, G1, G2, G3, noise_block)

    @property
    def is_noise_block(self) -> bool:
        ref = -0.5 * self.V.conj().T @ self.V
        return bool(np.linalg.norm(self.A - ref) <= 1e-12 * max(1.0, np.linalg.norm(ref)))

    def omega(self) -> Array:
        """Anti-Hermitian generator on ``(2 qubits) (x) system``."""
        n = self.V.shape[0]
        om = np.zeros((4 * n, 4 * n), dtype=np.complex128)
        for a, G in enumerate((self.G1, self.G2, self.G3), start=1):
            om[a * n:(a + 1) * n, :n] = G
            om[:n, a * n:(a + 1) * n] = -G.conj().T
        return om

    def terms(self) -> tuple[Array, Array, Array, Array]:
        """``F = P0 + xi1 P1 + xi2 P2 + xi1^2 P3``."""
        n = self.V.shape[0]
        dt = self.dt
        I = np.eye(n, dtype=np.complex128)
        V2 = self.V @ self.V
        P0 = I + dt * self.A + 0.5 * dt**2 * (self.A @ self.A) - 0.5 * dt * V2
        P1 = np.sqrt(dt) * (self.V + dt * self.B)
        P2 = dt**1.5 * self.C
        P3 = 0.5 * dt * V2
        return P0, P1, P2, P3

    def circuit_blocks(self) -> tuple[Array, Array, Array, Array]:
        """Blocks ``<alpha|U|00>`` in the order 00, 10, 01, 11."""
        n = self.V.shape[0]
        U = expm_skew(self.omega())
        return tuple(U[a * n:(a + 1) * n, :n] for a in range(4))


def f2_matrix(mid: Weak2Midpoint, xi1: float, xi2: float) -> Array:
    P0, P1, P2, P3 = mid.terms()
    return P0 + xi1 * P1 + xi2 * P2 + xi1**2 * P3


def measurement_map(mid: Weak2Midpoint, xi1: float, xi2: float, blocks=None) -> Array:
    """Post-selected map ``<m|U|00> / <m|00>``; the normalization of ``m`` cancels."""
    U00, U10, U01, U11 = mid.circuit_blocks() if blocks is None else blocks
    xi3 = xi1**2 - 1.0
    return U00 + xi1 * U10 + (xi3 / SQRT2) * U01 + xi2 * U11


def _combine(mats, coeffs, psi: Array) -> Array:
    out = psi @ mats[0].T
    for m, c in zip(mats[1:], coeffs):
        out = out + np.asarray(c)[..., None] * (psi @ m.T)
    return out


def weak2_matrix_step(psi, mid: Weak2Midpoint, xi1, xi2) -> Array:
    psi = np.asarray(psi, dtype=np.complex128)
    xi1 = np.asarray(xi1, dtype=float)
    return _combine(mid.terms(), (xi1, xi2, xi1**2), psi)


def weak2_measurement_step(psi, mid: Weak2Midpoint, xi1, xi2, *, blocks=None, check: bool = True) -> Array:
    if check and not mid.is_noise_block:
        raise ValueError("the weak-measurement step needs A_mid = -V^dagger V / 2")
    psi = np.asarray(psi, dtype=np.complex128)
    xi1 = np.asarray(xi1, dtype=float)
    U = mid.circuit_blocks() if blocks is None else blocks
    return _combine(U, (xi1, (xi1**2 - 1.0) / SQRT2, xi2), psi)


class Weak2Integrator:
    """Weak-2 stepping in matrix form or through the emulated two-qubit circuit."""

    def __init__(self, model, dt: float, *, circuit: bool = False, noise_block: Optional[bool] = None,
                 real: bool = False):
        if model.n_channels != 1:
            raise ValueError("weak-2 supports a single noise channel only")
        self.model = model
        self.dt = float(dt)
        self.circuit = circuit
        self.noise_block = circuit if noise_block is None else noise_block
        self.real = real
        self._cache = None

    def _mats(self, t_n: float):
        if self.model.autonomous and self._cache is not None:
            return self._cache
        mid = Weak2Midpoint.from_model(self.model, t_n, self.dt, noise_block=self.noise_block)
        if self.circuit:
            if not self.noise_block and not mid.is_noise_block:
                raise ValueError("the weak-measurement step needs A_mid = -V^dagger V / 2")
            mats = ("circuit", mid.circuit_blocks())
        else:
            mats = ("matrix", mid.terms())
        if self.real:
            mats = (mats[0], realify(mats[1]))
        if self.model.autonomous:
            self._cache = mats
        return mats

    def step(self, psi: Array, t: float, xi1_n: Array, xi2_n: Array) -> Array:
        kind, mats = self._mats(t)
        x1 = np.asarray(xi1_n[0], dtype=float)
        x2 = np.asarray(xi2_n[0], dtype=float)
        if kind == "circuit":
            return _combine(mats, (x1, (x1**2 - 1.0) / SQRT2, x2), psi)
        return _combine(mats, (x1, x2, x1**2), psi)
