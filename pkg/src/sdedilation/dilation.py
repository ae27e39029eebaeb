"""Tight-binding ancilla chain and the dilated SSE operators built on it.

The chain discretizes the generator ``p d/dp + 1/2`` on a geometric grid
``p_j = exp(-h (M - j))`` with a diagonal-norm summation-by-parts operator,
which makes the resulting hopping matrix exactly skew-Hermitian.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .numerics import DimensionError, kron
from .sde_model import LinearSdeSystem, hermitian_split, k_max as _k_max

Array = np.ndarray

PAULI_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)


def hopping_closed_form(M: int, h: float) -> Array:
    """Off-diagonal entries ``f_j = (F_h)_{j,j+1}`` on the geometric grid."""
    base = 1.0 / (4.0 * np.sinh(h / 2.0))
    f = np.full(M, base)
    f[0] = base * np.sqrt(1.0 + np.exp(-h))
    f[M - 1] = base * np.sqrt(1.0 + np.exp(h))
    return f


@dataclass
class SbpChain:
    M: int
    h: float
    theta: float
    p: Array
    w: Array
    Q: Array
    D: Array
    Fw: Array
    Fh: Array
    f: Array
    r: Array
    Z: float
    alpha: float
    Fhat: Array

    @property
    def sites(self) -> int:
        return self.M + 1

    def F(self, use_mlc: bool) -> Array:
        return self.Fhat if use_mlc else self.Fh

    def site_for_p(self, p_star: float) -> int:
        """Grid site whose ``p_j`` is nearest ``p_star``; ties go to the smaller index."""
        d = np.abs(self.p - p_star)
        return int(np.flatnonzero(d == d.min())[0])

    def summary(self) -> dict:
        return {
            "M": self.M,
            "h": self.h,
            "theta": self.theta,
            "f": self.f.tolist(),
            "r_h": self.r.tolist(),
            "Z_h": self.Z,
            "alpha": self.alpha,
        }


def build_chain(M: int, h: float, theta: float = 2.0) -> SbpChain:
    """Construct the SBP tight-binding chain with ``M + 1`` sites.

    The hopping matrix is built constructively (weights, difference operator,
    split form, symmetrization) and then checked entrywise against the closed
    form of its off-diagonals.
    """
    if M < 2:
        raise ValueError("build_chain needs M >= 2 (two distinct boundary bonds)")
    if h <= 0:
        raise ValueError("grading parameter h must be positive")
    j = np.arange(M + 1)
    p = np.exp(-h * (M - j))
    hs = np.diff(p)
    w = np.empty(M + 1)
    w[0] = 0.5 * hs[0]
    w[1:M] = 0.5 * (hs[:-1] + hs[1:])
    w[M] = 0.5 * hs[-1]

    Q = np.zeros((M + 1, M + 1))
    Q[j[:-1], j[1:]] = 0.5
    Q[j[1:], j[:-1]] = -0.5
    Q[0, 0] = -0.5
    Q[M, M] = 0.5
    Bdiag = np.zeros(M + 1)
    Bdiag[0], Bdiag[M] = -1.0, 1.0

    Dop = Q / w[:, None]
    P = np.diag(p)
    Fw = 0.5 * (P @ Dop + Dop @ P) - 0.5 * np.diag(Bdiag * p / w)
    sq = np.sqrt(w)
    Fh = (sq[:, None] * Fw) / sq[None, :]
    # the diagonal and all entries beyond the first off-diagonals vanish
    # analytically; remove their rounding residue
    Fh = np.triu(np.tril(Fh, 1), -1)
    np.fill_diagonal(Fh, 0.0)

    f = hopping_closed_form(M, h)
    constructive = np.diag(Fh, 1)
    if not np.allclose(constructive, f, rtol=1e-12, atol=1e-12):
        raise AssertionError("SBP hopping disagrees with its closed form")
    if not np.allclose(np.diag(Fh, -1), -f, rtol=1e-12, atol=1e-12):
        raise AssertionError("SBP hopping is not skew-symmetric")

    Z = float(np.sqrt(w.sum()))
    r = sq / Z
    alpha = 1.0 / theta - (Fh[M] @ r) / r[M]
    Fhat = Fh.copy()
    Fhat[M, M] += alpha
    return SbpChain(
        M=M, h=float(h), theta=float(theta), p=p, w=w, Q=Q, D=Dop, Fw=Fw,
        Fh=Fh.astype(np.complex128), f=f, r=r.astype(np.complex128), Z=Z,
        alpha=float(alpha), Fhat=Fhat.astype(np.complex128),
    )


def householder_to(u: Array, v: Array) -> Array:
    """Reflection mapping unit vector ``u`` onto unit vector ``v`` (real overlap assumed)."""
    w = u - v
    nw = np.vdot(w, w).real
    n = u.shape[0]
    if nw < 1e-28:
        return np.eye(n, dtype=np.complex128)
    return np.eye(n, dtype=np.complex128) - 2.0 * np.outer(w, w.conj()) / nw


@dataclass
class Readout:
    """Linear functional ``l_h`` supported on the window ``{0..j_star}``."""

    j_star: int
    l: Array
    beta: float
    P_star: float
    P_win: float
    gamma: complex
    window: Array
    r_win: Array
    W_win: Array

    @property
    def l_normalized(self) -> Array:
        return self.l / self.beta

    def projector(self) -> Array:
        return np.diag(self.window.astype(np.complex128))


def make_readout(chain: SbpChain, j_star: Optional[int] = None, *, p_star: Optional[float] = None) -> Readout:
    if j_star is None:
        if p_star is None:
            raise ValueError("give j_star or p_star")
        j_star = chain.site_for_p(p_star)
    if not 0 <= j_star <= chain.M:
        raise ValueError(f"j_star={j_star} outside 0..{chain.M}")
    sites = chain.M + 1
    win = np.zeros(sites)
    win[: j_star + 1] = 1.0
    P_star = float(chain.w[: j_star + 1].sum())
    l = np.zeros(sites, dtype=np.complex128)
    l[: j_star + 1] = chain.Z / P_star * np.sqrt(chain.w[: j_star + 1])
    r_win = chain.r * win
    P_win = float(np.vdot(r_win, r_win).real)
    W_win = householder_to(r_win / np.sqrt(P_win), chain.r)
    return Readout(
        j_star=int(j_star),
        l=l,
        beta=float(np.linalg.norm(l)),
        P_star=P_star,
        P_win=P_win,
        gamma=complex(chain.r[j_star]),
        window=win,
        r_win=r_win,
        W_win=W_win,
    )


def moment_check(chain: SbpChain, readout: Readout, use_mlc: bool, k_max: int) -> float:
    """``max_k |<l_h| (theta F)^k |r_h> - 1|`` over ``0 <= k <= k_max``."""
    F = chain.theta * chain.F(use_mlc)
    v = chain.r.copy()
    worst = 0.0
    for _ in range(k_max + 1):
        worst = max(worst, abs(np.vdot(readout.l, v) - 1.0))
        v = F @ v
    return worst


class DilatedOperators:
    """Dilated SSE coefficients on ``ancilla (x) system``.

    ``H~ = I (x) H + i theta F (x) K``, ``V_j = I (x) B_j`` and
    ``V_0 = -i H~ - 1/2 sum_j V_j^dagger V_j``.  With ``use_mlc`` the chain
    operator carries the boundary closure term and ``H~`` is no longer
    Hermitian.

    Besides dense matrices, the operators are exposed as lists of
    ``(ancilla, system)`` Kronecker factors; ``None`` stands for an identity.
    """

    def __init__(self, sys: LinearSdeSystem, chain: SbpChain, use_mlc: bool = False):
        self.sys = sys
        self.chain = chain
        self.use_mlc = use_mlc
        self.n_anc = chain.M + 1
        self.n_sys = sys.dim
        self.dim = self.n_anc * self.n_sys
        self.n_channels = sys.n_channels
        self.autonomous = sys.autonomous
        self.Fth = chain.theta * chain.F(use_mlc)
        self._I_anc = np.eye(self.n_anc, dtype=np.complex128)

    def _split(self, t: float):
        return hermitian_split(self.sys.generator(t))

    def H(self, t: float) -> Array:
        H, K = self._split(t)
        return kron(self._I_anc, H) + 1j * kron(self.Fth, K)

    def noise(self, t: float) -> list[Array]:
        return [kron(self._I_anc, b) for b in self.sys.noise(t)]

    def noise_dot(self, t: float, step: float = 1e-6) -> list[Array]:
        return [kron(self._I_anc, b) for b in self.sys.noise_dot(t, step)]

    def generator(self, t: float) -> Array:
        """``-i H~(t)``."""
        return -1j * self.H(t)

    def drift(self, t: float) -> Array:
        V0 = self.generator(t)
        for v in self.noise(t):
            V0 -= 0.5 * v.conj().T @ v
        return V0

    V0 = drift

    def drift_terms(self, t: float) -> list[tuple]:
        H, K = self._split(t)
        local = -1j * H
        for b in self.sys.noise(t):
            local = local - 0.5 * b.conj().T @ b
        return [(None, local), (self.Fth, K)]

    def noise_terms(self, t: float) -> list[tuple]:
        return [(None, b) for b in self.sys.noise(t)]

    def factored(self, x) -> Array:
        """``r_h (x) x`` for a system vector (or batch of vectors)."""
        x = np.asarray(x, dtype=np.complex128)
        return (self.chain.r[:, None] * x[..., None, :]).reshape(x.shape[:-1] + (self.dim,))


def dilate(sys: LinearSdeSystem, chain: SbpChain, use_mlc: bool = False) -> DilatedOperators:
    if sys.has_additive:
        raise ValueError("homogenize the system before dilating it")
    return DilatedOperators(sys, chain, use_mlc)


@dataclass
class LightConeEstimate:
    K_max: float
    T: float
    m: int
    rho: float
    feasible: bool
    bound: float

    def as_dict(self) -> dict:
        return dict(K_max=self.K_max, T=self.T, m=self.m, rho=self.rho,
                    feasible=self.feasible, bound=self.bound)


def lightcone_rho(K_max: float, T: float, m: int, h: float, theta: float = 2.0) -> float:
    return float(np.e * theta * K_max * T / (4.0 * m * np.sinh(h / 2.0)))


def lightcone(
    sys: Optional[LinearSdeSystem],
    chain: SbpChain,
    readout: Readout,
    T: float,
    K_max: Optional[float] = None,
) -> LightConeEstimate:
    """Propagation-speed parameter and the decay factor ``rho^(2m)/(1-rho^2)``."""
    if K_max is None:
        if sys is None:
            raise ValueError("need a system or an explicit K_max")
        K_max = _k_max(sys, T)
    m = chain.M - readout.j_star
    if m <= 0:
        return LightConeEstimate(K_max, T, m, np.inf, False, np.inf)
    rho = lightcone_rho(K_max, T, m, chain.h, chain.theta)
    feasible = rho < 1.0
    bound = rho ** (2 * m) / (1.0 - rho**2) if feasible else np.inf
    return LightConeEstimate(float(K_max), float(T), int(m), rho, bool(feasible), float(bound))


def project_readout(psi: Array, readout: Readout, n_sys: int, mode: str = "lh") -> Array:
    """Extract the system vector from a dilated state (batched over leading axes)."""
    psi = np.asarray(psi)
    n_anc = readout.l.shape[0]
    if psi.shape[-1] != n_anc * n_sys:
        raise DimensionError(f"state has length {psi.shape[-1]}, expected {n_anc * n_sys}")
    blocks = psi.reshape(psi.shape[:-1] + (n_anc, n_sys))
    if mode == "lh":
        return np.einsum("j,...js->...s", readout.l.conj(), blocks)
    if mode == "site":
        return blocks[..., readout.j_star, :] / readout.gamma
    raise ValueError(f"unknown readout mode {mode!r}")


def _embed_one(op: Array, q: int, n: int) -> Array:
    out = np.ones((1, 1), dtype=np.complex128)
    for k in range(n):
        out = np.kron(out, op if k == q else np.eye(2))
    return out


def pauli_xy_operator(f: Sequence[float]) -> Array:
    """``-1/2 sum_j f_j (X_j Y_{j+1} - Y_j X_{j+1})`` on ``len(f)+1`` qubits."""
    n = len(f) + 1
    dim = 2**n
    op = np.zeros((dim, dim), dtype=np.complex128)
    for j, fj in enumerate(f):
        xy = _embed_one(PAULI_X, j, n) @ _embed_one(PAULI_Y, j + 1, n)
        yx = _embed_one(PAULI_Y, j, n) @ _embed_one(PAULI_X, j + 1, n)
        op += -0.5 * fj * (xy - yx)
    return op


def pauli_xy_check(chain_or_f: Union[SbpChain, Sequence[float]]) -> float:
    """Frobenius defect between the XY Hamiltonian's one-excitation block and ``i F_h``."""
    if isinstance(chain_or_f, SbpChain):
        f = np.asarray(chain_or_f.f, dtype=float)
        Fh = chain_or_f.Fh
    else:
        f = np.asarray(chain_or_f, dtype=float)
        Fh = np.diag(f, 1) - np.diag(f, -1)
    n = len(f) + 1
    if n > 10:
        raise ValueError("pauli_xy_check is limited to at most 10 qubits")
    op = pauli_xy_operator(f)
    # qubit 0 is the most significant bit; site j <-> only qubit j excited
    idx = [1 << (n - 1 - j) for j in range(n)]
    block = op[np.ix_(idx, idx)]
    return float(np.linalg.norm(block - 1j * Fh))
