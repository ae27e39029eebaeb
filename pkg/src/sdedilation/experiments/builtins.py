"""Built-in test systems."""

from __future__ import annotations

import numpy as np

from ..sde_model import LinearSdeSystem

WEAK2_B = np.array(
    [
        [-0.79312248, 0.24057128, -1.89632635],
        [1.39577171, 0.63829474, -0.29204749],
        [-0.31194933, 0.30383537, -0.2676603],
    ]
)


def builtin_example3d(sigma: float = 1.0, X0=(1.0, 1.0, 1.0), T: float = 1.0) -> LinearSdeSystem:
    """Upper-bidiagonal drift with three identical isotropic noise channels."""
    A = np.array([[-1.0, 10.0, 0.0], [0.0, -1.0, 10.0], [0.0, 0.0, -1.0]])
    B = (sigma / np.sqrt(3.0)) * np.eye(3)
    return LinearSdeSystem.constant(A, [B, B, B], X0=np.asarray(X0, dtype=float), T=T, name=f"example3d(sigma={sigma})")


def builtin_weak2(B=None, X0=(1.0, 1.0, 1.0), T: float = 1.0) -> LinearSdeSystem:
    """Norm-preserving single-channel system ``dX = -B^T B X/2 dt + B X dW``."""
    B = WEAK2_B if B is None else np.asarray(B, dtype=np.complex128)
    B = np.asarray(B, dtype=np.complex128)
    A = -0.5 * B.conj().T @ B
    return LinearSdeSystem.constant(A, [B], X0=np.asarray(X0, dtype=float), T=T, name="weak2")


def periodic_differences(n: int, length: float = 2 * np.pi):
    """Central first and second differences on ``n`` periodic points."""
    dx = length / n
    eye = np.eye(n)
    up = np.roll(eye, 1, axis=1)  # (up @ u)_k = u_{k+1}
    down = np.roll(eye, -1, axis=1)
    D1 = (up - down) / (2 * dx)
    D2 = (up - 2 * eye + down) / dx**2
    return D1, D2


def spde_grid(n: int) -> np.ndarray:
    return 2 * np.pi * np.arange(n) / n


def builtin_spde(
    N_grid: int = 16, eps: float = 0.1, beta: float = 0.5, sigma1: float = 0.5, sigma2: float = 0.3, T: float = 1.0
) -> LinearSdeSystem:
    """Semi-discrete stochastic advection-diffusion-reaction equation with ``u(x,0) = sin x``."""
    if N_grid < 8 or N_grid % 2:
        raise ValueError("N_grid must be even and at least 8")
    x = spde_grid(N_grid)
    D1, D2 = periodic_differences(N_grid)
    A = np.diag(eps + 0.5 * sigma1**2 * np.cos(x) ** 2) @ D2 + np.diag(
        beta * np.sin(x) - 0.25 * sigma1**2 * np.sin(2 * x)
    ) @ D1
    B1 = np.diag(sigma1 * np.cos(x)) @ D1
    B2 = sigma2 * np.eye(N_grid)
    return LinearSdeSystem.constant(
        A, [B1, B2], X0=np.sin(x), T=T,
        name=f"spde(N={N_grid}, eps={eps}, beta={beta}, s1={sigma1}, s2={sigma2})",
    )


BUILTINS = {
    "example3d": builtin_example3d,
    "weak2": builtin_weak2,
    "spde": builtin_spde,
}
