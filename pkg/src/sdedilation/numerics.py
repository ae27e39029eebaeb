"""Dense complex linear algebra shared by every other module.

Tensor-product convention: the ancilla index is major and the system index
minor, so the basis vector ``e_a (x) e_s`` sits at flat index ``a * N + s``.
Every function below and every caller follows this ordering.
"""

from __future__ import annotations

from typing import Callable, TypeVar

import numpy as np
import scipy.linalg as sla

Array = np.ndarray
Y = TypeVar("Y", bound=np.ndarray)


class DimensionError(ValueError):
    """Raised when operand shapes are incompatible."""


class ContractError(ValueError):
    """Raised when an input violates a documented precondition."""


def as_cmatrix(a, *, square: bool = False, name: str = "matrix") -> Array:
    """Return ``a`` as a finite complex128 2-D array."""
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {m.shape}")
    if square and m.shape[0] != m.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ContractError(f"{name} has non-finite entries")
    return m


def as_cvector(x, *, name: str = "vector") -> Array:
    v = np.asarray(x, dtype=np.complex128)
    if v.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ContractError(f"{name} has non-finite entries")
    return v


def dag(a: Array) -> Array:
    return np.conj(np.swapaxes(a, -1, -2))


def hermitian_split(L) -> tuple[Array, Array]:
    """Split ``L = -iH + K`` into Hermitian ``H`` and ``K``.

    Returns
    -------
    H, K : ndarray
        ``K = (L + L^dagger)/2`` and ``H = i (L - L^dagger)/2``.
    """
    L = as_cmatrix(L, square=True, name="L")
    Ld = L.conj().T
    K = 0.5 * (L + Ld)
    H = 0.5j * (L - Ld)
    return H, K


def expm_skew(omega, *, tol: float = 1e-12) -> Array:
    """Exponential of an anti-Hermitian matrix.

    Computed from the eigendecomposition of the Hermitian matrix ``i*omega``,
    so the result is unitary up to rounding.
    """
    omega = as_cmatrix(omega, square=True, name="omega")
    scale = max(np.linalg.norm(omega), 1.0)
    if np.linalg.norm(omega + omega.conj().T) > tol * scale:
        raise ContractError("expm_skew requires an anti-Hermitian generator")
    G = 1j * omega
    G = 0.5 * (G + G.conj().T)
    evals, evecs = np.linalg.eigh(G)
    # omega = -i G  =>  exp(omega) = V exp(-i lambda) V^dagger
    return (evecs * np.exp(-1j * evals)) @ evecs.conj().T


def is_anti_hermitian(a: Array, tol: float = 1e-12) -> bool:
    scale = max(np.linalg.norm(a), 1.0)
    return bool(np.linalg.norm(a + a.conj().T) <= tol * scale)


def expm(a: Array) -> Array:
    """Exponential for a general generator; anti-Hermitian input takes the unitary path."""
    a = as_cmatrix(a, square=True)
    if is_anti_hermitian(a):
        return expm_skew(a)
    return sla.expm(a)


def rk4_propagate(
    rhs: Callable[[float, Y], Y], y0: Y, t0: float, t1: float, steps: int
) -> Y:
    """Classical fixed-step fourth-order Runge--Kutta from ``t0`` to ``t1``."""
    if steps < 1:
        raise ContractError("rk4_propagate needs steps >= 1")
    dt = (t1 - t0) / steps
    y = y0
    t = t0
    for n in range(steps):
        t = t0 + n * dt
        k1 = rhs(t, y)
        k2 = rhs(t + 0.5 * dt, y + (0.5 * dt) * k1)
        k3 = rhs(t + 0.5 * dt, y + (0.5 * dt) * k2)
        k4 = rhs(t + dt, y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return y


def kron(a, b) -> Array:
    """Tensor product with the first factor as the major index.

    Works for matrices and for vectors alike.
    """
    return np.kron(np.asarray(a, dtype=np.complex128), np.asarray(b, dtype=np.complex128))


def basis(dim: int, k: int) -> Array:
    e = np.zeros(dim, dtype=np.complex128)
    e[k] = 1.0
    return e


def kron_apply(anc, sysop, psi: Array, n_anc: int, n_sys: int) -> Array:
    """Apply ``anc (x) sysop`` to ``psi`` without forming the Kronecker product.

    ``psi`` is a dilated vector, or a batch of them stacked on leading axes.
    Either factor may be ``None`` to denote the identity.
    """
    shp = psi.shape
    x = psi.reshape(shp[:-1] + (n_anc, n_sys))
    if sysop is not None:
        x = x @ sysop.T
    if anc is not None:
        x = np.einsum("ab,...bs->...as", anc, x)
    return x.reshape(shp)


def kron_apply_left(anc, sysop, rho: Array, n_anc: int, n_sys: int) -> Array:
    """``(anc (x) sysop) @ rho`` for a matrix ``rho`` with ``n_anc*n_sys`` rows."""
    cols = rho.shape[1]
    x = rho.reshape(n_anc, n_sys, cols)
    if sysop is not None:
        x = np.einsum("st,atc->asc", sysop, x)
    if anc is not None:
        x = np.einsum("ab,bsc->asc", anc, x)
    return x.reshape(n_anc * n_sys, cols)


def opnorm(a: Array) -> float:
    return float(np.linalg.norm(a, 2))


def hermitize(a: Array) -> Array:
    return 0.5 * (a + a.conj().T)
