"""Weak order-1 splitting and its single-ancilla Kraus-branch emulation."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from ..numerics import expm, expm_skew

Array = np.ndarray


def realify(obj):
    """Drop imaginary parts throughout a nested tuple/list of arrays."""
    if isinstance(obj, (tuple, list)):
        return type(obj)(realify(o) for o in obj)
    if obj is None:
        return None
    return np.ascontiguousarray(np.real(obj))


def _apply(op: Array, psi: Array) -> Array:
    # psi holds state vectors on its last axis
    return psi @ op.T


def noise_factors(V: Sequence[Array], dt: float) -> list[tuple[Array, Array]]:
    """Per-channel pairs ``(I - dt/2 V^dagger V, V)``."""
    out = []
    for v in V:
        n = v.shape[0]
        out.append((np.eye(n, dtype=np.complex128) - 0.5 * dt * (v.conj().T @ v), v))
    return out


def weak1_step(psi, H, V: Sequence[Array], dt: float, dW, *, propagator: Optional[Array] = None) -> Array:
    """One splitting step ``prod_j (I - dt/2 V_j^dagger V_j + dW_j V_j) exp(-i H dt)``.

    ``dW`` holds the already scaled increments (``sqrt(dt)`` times a sign),
    one per channel; for batched ``psi`` each entry broadcasts over the batch.
    ``H`` may be non-Hermitian, in which case a general exponential is used.
    """
    psi = np.asarray(psi, dtype=np.complex128)
    if propagator is None:
        H = np.asarray(H, dtype=np.complex128)
        propagator = expm(-1j * H * dt)
    out = _apply(propagator, psi)
    dW = np.asarray(dW, dtype=float)
    for j, (damp, v) in enumerate(noise_factors(V, dt)):
        w = np.asarray(dW[j])[..., None] if dW.ndim else dW
        out = _apply(damp, out) + w * _apply(v, out)
    return out


def kraus_unitary(V: Array, dt: float) -> Array:
    """``exp(Omega)`` for ``Omega = sqrt(dt) [[0, -V^dagger], [V, 0]]`` (ancilla qubit major)."""
    V = np.asarray(V, dtype=np.complex128)
    n = V.shape[0]
    om = np.zeros((2 * n, 2 * n), dtype=np.complex128)
    om[:n, n:] = -V.conj().T
    om[n:, :n] = V
    return expm_skew(np.sqrt(dt) * om)


HADAMARD = np.array([[1, 1], [1, -1]], dtype=np.complex128) / np.sqrt(2.0)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)


def branch_unitary(s: int) -> Array:
    """``W_+ = Had``; ``W_- = Had X`` so that ``<0|W_-^dagger = <1|Had``."""
    if s == 1:
        return HADAMARD
    if s == -1:
        return HADAMARD @ PAULI_X
    raise ValueError("branch label must be +1 or -1")


def interaction_step(psi, V, dt: float, s: int, *, unitary: Optional[Array] = None) -> Array:
    """Kraus branch ``sqrt(2) <0| W_s^dagger U |0> psi`` of one repeated interaction."""
    psi = np.asarray(psi, dtype=np.complex128)
    V = np.asarray(V, dtype=np.complex128)
    n = V.shape[0]
    U = kraus_unitary(V, dt) if unitary is None else unitary
    full = np.concatenate([psi, np.zeros_like(psi)], axis=-1)
    out = _apply(U, full).reshape(psi.shape[:-1] + (2, n))
    Wd = branch_unitary(s).conj().T
    out = np.einsum("ab,...bs->...as", Wd, out)
    return np.sqrt(2.0) * out[..., 0, :]


class Weak1Integrator:
    """Repeated weak-1 steps for a model exposing ``generator``/``noise``.

    With a raw system the exponential is ``exp(L dt)``; with dilated
    operators it is ``exp(-i H~ dt)``.  Both are the model's ``generator``.
    For autonomous models the step matrices are built once.
    """

    def __init__(self, model, dt: float, *, kraus: bool = False, real: bool = False):
        self.model = model
        self.dt = float(dt)
        self.kraus = kraus
        self.real = real
        if kraus and model.n_channels != 1:
            raise ValueError("the Kraus-branch emulation handles a single channel")
        self._cache = None

    def _mats(self, t: float):
        if self.model.autonomous and self._cache is not None:
            return self._cache
        P = expm(self.model.generator(t) * self.dt)
        V = self.model.noise(t)
        extra = kraus_unitary(V[0], self.dt) if self.kraus else None
        mats = (P, noise_factors(V, self.dt), extra)
        if self.real:
            mats = realify(mats)
        if self.model.autonomous:
            self._cache = mats
        return mats

    def step(self, psi: Array, t: float, xi1_n: Array) -> Array:
        """``xi1_n`` has shape ``(J, *batch)`` (unit-variance signs)."""
        P, factors, U = self._mats(t)
        out = _apply(P, psi)
        sq = np.sqrt(self.dt)
        if self.kraus:
            s = np.asarray(xi1_n[0])
            plus = interaction_step(out, factors[0][1], self.dt, 1, unitary=U)
            minus = interaction_step(out, factors[0][1], self.dt, -1, unitary=U)
            return np.where((s > 0)[..., None], plus, minus)
        for j, (damp, v) in enumerate(factors):
            out = _apply(damp, out) + (sq * np.asarray(xi1_n[j]))[..., None] * _apply(v, out)
        return out
