"""Second-moment route: dilated Lindblad evolution with segment-wise refresh."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dilation import DilatedOperators, LightConeEstimate, Readout, SbpChain, make_readout
from .numerics import DimensionError, kron, rk4_propagate
from .sde_model import LinearSdeSystem, k_max

Array = np.ndarray

POSITIVITY_FLOOR = -1e-6


class PositivityError(RuntimeError):
    pass


class DegenerateCovarianceError(RuntimeError):
    pass


def _scalar_identity(op: Array) -> Optional[complex]:
    """The scalar ``c`` if ``op == c I``, else ``None``."""
    c = op[0, 0]
    if np.count_nonzero(op - c * np.eye(op.shape[0])) == 0:
        return complex(c)
    return None


def _left_terms(terms, rho: Array, n_anc: int, n_sys: int) -> Array:
    """``sum_k (anc_k (x) sys_k) @ rho`` with ``None`` meaning identity."""
    cols = rho.shape[1]
    x = rho.reshape(n_anc, n_sys, cols)
    out = None
    for anc, sysop in terms:
        y = x if sysop is None else np.matmul(sysop, x)
        if anc is not None:
            y = (anc @ y.reshape(n_anc, -1)).reshape(n_anc, n_sys, cols)
        out = y.copy() if out is None else out.__iadd__(y)
    return out.reshape(rho.shape)


def lindblad_rhs(rho: Array, t: float, dilated: DilatedOperators) -> Array:
    """``V0 rho + rho V0^dagger + sum_j V_j rho V_j^dagger`` applied factor-wise.

    For Hermitian ``H~`` this is the usual
    ``-i[H~, rho] + sum_j (V_j rho V_j^dagger - {V_j^dagger V_j, rho}/2)``.
    ``rho`` must be Hermitian.
    """
    D = dilated.dim
    if rho.shape != (D, D):
        raise DimensionError(f"rho has shape {rho.shape}, expected {(D, D)}")
    na, ns = dilated.n_anc, dilated.n_sys
    X = _left_terms(dilated.drift_terms(t), rho, na, ns)
    out = X + X.conj().T
    for _, b in dilated.noise_terms(t):
        c = _scalar_identity(b)
        if c is not None:
            out += abs(c) ** 2 * rho
            continue
        Y = np.matmul(b, rho.reshape(na, ns, D)).reshape(D, na, ns)
        out += np.matmul(Y, b.conj().T).reshape(D, D)
    return out


def lindblad_rhs_dense(rho: Array, t: float, dilated: DilatedOperators) -> Array:
    """Reference rhs from dense operators, valid for Hermitian ``H~``."""
    H = dilated.H(t)
    out = -1j * (H @ rho - rho @ H)
    for V in dilated.noise(t):
        VdV = V.conj().T @ V
        out += V @ rho @ V.conj().T - 0.5 * (VdV @ rho + rho @ VdV)
    return out


def generator_estimate(sys: LinearSdeSystem, t0: float, t1: float) -> float:
    """Coarse bound ``max_t (|A| + sum_j |B_j|^2)`` over a few sample times."""
    ts = [t0] if sys.autonomous else np.linspace(t0, t1, 9)
    best = 0.0
    for t in ts:
        v = np.linalg.norm(sys.drift(t), 2) + sum(np.linalg.norm(b, 2) ** 2 for b in sys.noise(t))
        best = max(best, float(v))
    return best


def default_steps(sys: LinearSdeSystem, t0: float, tau: float) -> int:
    return max(100, int(np.ceil(200.0 * tau * generator_estimate(sys, t0, t0 + tau))))


def min_eig(rho: Array) -> float:
    return float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0])


def evolve_segment(rho: Array, t0: float, tau: float, dilated: DilatedOperators,
                   steps: Optional[int] = None, *, check_positivity: bool = True) -> Array:
    """RK4 over ``[t0, t0+tau]``; on a positivity loss the step count doubles once."""
    if tau == 0:
        return rho.copy()
    if steps is None:
        steps = default_steps(dilated.sys, t0, tau)
    rhs = lambda t, r: lindblad_rhs(r, t, dilated)
    out = rk4_propagate(rhs, rho, t0, t0 + tau, steps)
    if not check_positivity:
        return out
    if min_eig(out) < POSITIVITY_FLOOR * max(1.0, np.trace(rho).real):
        out = rk4_propagate(rhs, rho, t0, t0 + tau, 2 * steps)
        if min_eig(out) < POSITIVITY_FLOOR * max(1.0, np.trace(rho).real):
            raise PositivityError("density lost positivity even with halved steps")
    return out


def factored_density(chain: SbpChain, sigma: Array) -> Array:
    r = chain.r
    return kron(np.outer(r, r.conj()), sigma)


def _blocks(rho: Array, n_anc: int, n_sys: int) -> Array:
    if rho.shape != (n_anc * n_sys, n_anc * n_sys):
        raise DimensionError(f"rho has shape {rho.shape}, expected {(n_anc * n_sys,) * 2}")
    return rho.reshape(n_anc, n_sys, n_anc, n_sys)


def recover_sigma(rho: Array, readout: Readout, n_sys: int) -> Array:
    """``(<l_h| (x) I) rho (|l_h> (x) I)``."""
    l = readout.l
    R = _blocks(rho, l.shape[0], n_sys)
    return np.einsum("a,asbt,b->st", l.conj(), R, l)


def site_block(rho: Array, j: int, n_anc: int, n_sys: int) -> Array:
    return _blocks(rho, n_anc, n_sys)[j, :, j, :]


def observable(rho: Array, readout: Readout, O: Array, *, path: str = "recover", check: bool = False) -> float:
    """``tr(rho (Pi_lh (x) O))`` either through the recovered block or the full operator."""
    O = np.asarray(O, dtype=np.complex128)
    n_sys = O.shape[0]
    a = np.trace(recover_sigma(rho, readout, n_sys) @ O)
    if path == "recover" and not check:
        return float(a.real)
    Pi = np.outer(readout.l, readout.l.conj())
    b = np.trace(rho @ kron(Pi, O))
    if check and abs(a - b) > 1e-10 * max(1.0, abs(a)):
        raise AssertionError(f"observable paths disagree: {a} vs {b}")
    return float((b if path == "full" else a).real)


def window_weight(rho: Array, readout: Readout, n_sys: int) -> float:
    R = _blocks(rho, readout.window.shape[0], n_sys)
    diag = np.einsum("asas->a", R).real
    return float(np.sum(diag * readout.window))


def functional_weight(rho: Array, vec: Array, n_sys: int) -> float:
    """``tr(rho (|v><v| (x) I))`` evaluated with an explicit ancilla projector."""
    Pi = np.outer(vec, vec.conj())
    R = _blocks(rho, vec.shape[0], n_sys)
    return float(np.einsum("ba,asbs->", Pi, R).real)


@dataclass
class MomentLedger:
    lam: list = field(default_factory=list)
    g: list = field(default_factory=list)
    q_window: list = field(default_factory=list)
    q_lh: list = field(default_factory=list)
    trace_defect: list = field(default_factory=list)
    min_eig: list = field(default_factory=list)
    sigma: list = field(default_factory=list)
    scale0: float = 1.0
    beta: float = 1.0

    @property
    def lam_final(self) -> float:
        return self.lam[-1]

    @property
    def Lambda_T(self) -> float:
        """``tr Sigma_T`` including the input scale."""
        return self.scale0 * self.lam[-1]

    @property
    def Gamma(self) -> float:
        return float(np.sum(np.asarray(self.g) ** -0.5))

    def rows(self) -> list[dict]:
        return [
            {"m": m, "g_m": self.g[m], "q_window": self.q_window[m], "q_lh": self.q_lh[m],
             "lambda_m": self.lam[m + 1], "trace_defect": self.trace_defect[m], "min_eig": self.min_eig[m]}
            for m in range(len(self.g))
        ]


def segment_pipeline(
    sys: LinearSdeSystem,
    chain: SbpChain,
    T: float,
    tau: float,
    O: Optional[Array] = None,
    *,
    readout: Optional[Readout] = None,
    p_star: Optional[float] = None,
    use_mlc: bool = False,
    Sigma0: Optional[Array] = None,
    steps: Optional[int] = None,
    keep_sigma: bool = True,
    check_positivity: bool = True,
) -> tuple[float, MomentLedger]:
    """Estimate ``tr(Sigma_T O)`` segment by segment.

    The refresh between segments is emulated exactly by reseeding
    ``|r_h><r_h| (x) sigma_{m+1}``.  The returned estimate includes the trace
    of the input covariance, which is normalized away internally.
    """
    if readout is None:
        readout = make_readout(chain, p_star=0.1 if p_star is None else p_star)
    L = int(round(T / tau))
    if L < 1 or abs(L * tau - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"tau={tau} does not divide T={T}")
    n = sys.dim
    if Sigma0 is None:
        if sys.X0 is None:
            raise ValueError("need Sigma0 or an initial state on the system")
        x = np.asarray(sys.X0, dtype=np.complex128)
        Sigma0 = np.outer(x, x.conj())
    Sigma0 = np.asarray(Sigma0, dtype=np.complex128)
    O = np.eye(n, dtype=np.complex128) if O is None else np.asarray(O, dtype=np.complex128)
    scale0 = float(np.trace(Sigma0).real)
    sigma = Sigma0 / scale0
    dil = DilatedOperators(sys, chain, use_mlc)
    led = MomentLedger(lam=[1.0], scale0=scale0, beta=readout.beta)
    if keep_sigma:
        led.sigma.append(sigma)
    for m in range(L):
        rho = factored_density(chain, sigma)
        rho1 = evolve_segment(rho, m * tau, tau, dil, steps, check_positivity=check_positivity)
        led.trace_defect.append(float(abs(np.trace(rho1) - 1.0)))
        led.min_eig.append(min_eig(rho1))
        Sp = recover_sigma(rho1, readout, n)
        g = float(np.trace(Sp).real)
        if g <= 1e-14:
            raise DegenerateCovarianceError(f"segment {m}: trace growth factor {g:.3e}")
        led.g.append(g)
        led.q_window.append(window_weight(rho1, readout, n))
        led.q_lh.append(functional_weight(rho1, readout.l_normalized, n))
        sigma = Sp / g
        led.lam.append(led.lam[-1] * g)
        if keep_sigma:
            led.sigma.append(sigma)
    mu = scale0 * led.lam[-1] * float(np.trace(sigma @ O).real)
    return mu, led


def default_tau(sys: LinearSdeSystem, T: float) -> float:
    """``T / ceil(T K_max)`` so that segments tile the horizon."""
    K = k_max(sys, T)
    return T / max(1, int(np.ceil(T * K)))


def covariance_lightcone_bound(chain: SbpChain, readout: Readout, Sigma_T_ref: Array,
                               lc: LightConeEstimate, C: float) -> float:
    if not lc.feasible:
        raise ValueError("light-cone estimate is infeasible (rho >= 1)")
    b = C * lc.rho ** (2 * lc.m) / (1.0 - lc.rho**2)
    tr = float(np.trace(Sigma_T_ref).real)
    return 2.0 * abs(readout.gamma) * np.sqrt(tr) * np.sqrt(b) + b


def trace_norm(a: Array) -> float:
    return float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (a + a.conj().T)))))
