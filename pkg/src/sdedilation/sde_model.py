"""Linear Ito SDE problems and their classical reference solvers.

A system is ``dX = (A X + D) dt + sum_j (B_j X + C_j) dW^j``; coefficient
matrices are given as callables of time.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid

from .noise import NoisePath
from .numerics import DimensionError, as_cmatrix, hermitian_split, rk4_propagate

Array = np.ndarray
MatFn = Callable[[float], Array]
VecFn = Callable[[float], Array]

FD_STEP = 1e-6


def _const(m: Array) -> MatFn:
    m = np.array(m, dtype=np.complex128)
    m.setflags(write=False)
    return lambda t: m


def _zero_fn(shape) -> Callable[[float], Array]:
    z = np.zeros(shape, dtype=np.complex128)
    z.setflags(write=False)
    return lambda t: z


def central_difference(fn: MatFn, t: float, step: float = FD_STEP) -> Array:
    return (fn(t + step) - fn(t - step)) / (2.0 * step)


@dataclass
class LinearSdeSystem:
    """Coefficient providers of a linear Ito SDE.

    ``dA``/``dB`` are optional analytic time derivatives.  When a derivative is
    missing, :meth:`noise_dot` falls back to a central difference and
    ``fd_fallback_used`` is set.  ``bound`` records the uniform coefficient
    bound of the regularity assumption; it is informational only.
    """

    dim: int
    A: MatFn
    B: Sequence[MatFn] = ()
    D: Optional[VecFn] = None
    C: Optional[Sequence[Optional[VecFn]]] = None
    dA: Optional[MatFn] = None
    dB: Optional[Sequence[MatFn]] = None
    X0: Optional[Array] = None
    T: Optional[float] = None
    autonomous: bool = False
    bound: Optional[float] = None
    name: str = ""
    fd_fallback_used: bool = field(default=False, compare=False)

    @classmethod
    def constant(cls, A, B=(), *, X0=None, T=None, D=None, C=None, name="") -> "LinearSdeSystem":
        """Build an autonomous system from fixed matrices."""
        A = as_cmatrix(A, square=True, name="A")
        n = A.shape[0]
        Bs = [as_cmatrix(b, square=True, name=f"B[{j}]") for j, b in enumerate(B)]
        for j, b in enumerate(Bs):
            if b.shape != (n, n):
                raise DimensionError(f"B[{j}] has shape {b.shape}, expected {(n, n)}")
        Dfn = None if D is None else _const(np.asarray(D, dtype=np.complex128))
        Cfn = None
        if C is not None:
            Cfn = [None if c is None else _const(np.asarray(c, dtype=np.complex128)) for c in C]
        zero = _zero_fn((n, n))
        return cls(
            dim=n,
            A=_const(A),
            B=[_const(b) for b in Bs],
            D=Dfn,
            C=Cfn,
            dA=zero,
            dB=[zero for _ in Bs],
            X0=None if X0 is None else np.asarray(X0, dtype=np.complex128),
            T=T,
            autonomous=True,
            name=name,
        )

    @property
    def n_channels(self) -> int:
        return len(self.B)

    @property
    def has_additive(self) -> bool:
        return self.D is not None or (self.C is not None and any(c is not None for c in self.C))

    def drift(self, t: float) -> Array:
        a = np.asarray(self.A(t), dtype=np.complex128)
        if a.shape != (self.dim, self.dim):
            raise DimensionError(f"A({t}) has shape {a.shape}, expected {(self.dim, self.dim)}")
        return a

    def noise(self, t: float) -> list[Array]:
        out = []
        for j, b in enumerate(self.B):
            m = np.asarray(b(t), dtype=np.complex128)
            if m.shape != (self.dim, self.dim):
                raise DimensionError(f"B[{j}]({t}) has shape {m.shape}")
            out.append(m)
        return out

    def noise_dot(self, t: float, step: float = FD_STEP) -> list[Array]:
        if self.dB is not None:
            return [np.asarray(d(t), dtype=np.complex128) for d in self.dB]
        self.fd_fallback_used = True
        return [central_difference(b, t, step) for b in self.B]

    def drift_dot(self, t: float, step: float = FD_STEP) -> Array:
        if self.dA is not None:
            return np.asarray(self.dA(t), dtype=np.complex128)
        self.fd_fallback_used = True
        return central_difference(self.A, t, step)

    def generator(self, t: float) -> Array:
        """``L(t) = A + 1/2 sum_j B_j^dagger B_j``, the exponent of the splitting step."""
        L = self.drift(t).copy()
        for b in self.noise(t):
            L += 0.5 * b.conj().T @ b
        return L


@dataclass
class StructureReport:
    times: Array
    L: Array
    H: Array
    K: Array
    K_max: float
    gamma: Array


@dataclass
class SecondMoment:
    Sigma: Array
    t: float


def homogenize(sys: LinearSdeSystem) -> LinearSdeSystem:
    """Lift additive terms into a homogeneous system of dimension N+1.

    The appended component is the constant 1; its drift and noise rows are
    zero so it never moves.
    """
    n = sys.dim
    D = sys.D if sys.D is not None else _zero_fn(n)
    Cs = list(sys.C) if sys.C is not None else [None] * sys.n_channels
    if len(Cs) != sys.n_channels:
        raise DimensionError("C must have one entry per noise channel")

    def lift(M: MatFn, v: Optional[VecFn]) -> MatFn:
        def f(t):
            out = np.zeros((n + 1, n + 1), dtype=np.complex128)
            out[:n, :n] = M(t)
            if v is not None:
                out[:n, n] = v(t)
            return out
        return f

    def lift_dot(M: Optional[MatFn]) -> Optional[MatFn]:
        if M is None:
            return None

        def f(t):
            out = np.zeros((n + 1, n + 1), dtype=np.complex128)
            out[:n, :n] = M(t)
            return out
        return f

    # derivatives of the additive columns are not tracked; only constant
    # additive terms keep the analytic derivative exact
    additive_const = sys.autonomous
    X0 = None
    if sys.X0 is not None:
        X0 = np.concatenate([np.asarray(sys.X0, dtype=np.complex128), [1.0]])
    return LinearSdeSystem(
        dim=n + 1,
        A=lift(sys.A, D),
        B=[lift(b, c) for b, c in zip(sys.B, Cs)],
        dA=lift_dot(sys.dA) if additive_const else None,
        dB=[lift_dot(d) for d in sys.dB] if (sys.dB is not None and additive_const) else None,
        X0=X0,
        T=sys.T,
        autonomous=sys.autonomous,
        bound=sys.bound,
        name=(sys.name + "+homogenized") if sys.name else "homogenized",
    )


def default_time_grid(T: float, n: int = 256) -> Array:
    return np.linspace(0.0, T, n)


def structure(sys: LinearSdeSystem, t_samples) -> StructureReport:
    """Evaluate ``L``, ``H``, ``K`` on the sample times and their dissipation summary."""
    ts = np.atleast_1d(np.asarray(t_samples, dtype=float))
    if ts.size == 0:
        raise ValueError("structure needs at least one sample time")
    Ls, Hs, Ks, gam, norms = [], [], [], [], []
    for t in ts:
        L = sys.generator(float(t))
        H, K = hermitian_split(L)
        ev = np.linalg.eigvalsh(K)
        Ls.append(L)
        Hs.append(H)
        Ks.append(K)
        gam.append(ev[-1])
        norms.append(np.max(np.abs(ev)))
    return StructureReport(
        times=ts,
        L=np.array(Ls),
        H=np.array(Hs),
        K=np.array(Ks),
        K_max=float(max(norms)),
        gamma=np.array(gam),
    )


def k_max(sys: LinearSdeSystem, T: float, n: int = 256) -> float:
    if sys.autonomous:
        return structure(sys, [0.0]).K_max
    return structure(sys, default_time_grid(T, n)).K_max


def second_moment_rhs(sys: LinearSdeSystem, Sigma: Array, t: float) -> Array:
    """``A S + S A^dagger + sum_j B_j S B_j^dagger``."""
    S = np.asarray(Sigma, dtype=np.complex128)
    if S.shape != (sys.dim, sys.dim):
        raise DimensionError(f"Sigma has shape {S.shape}, expected {(sys.dim, sys.dim)}")
    A = sys.drift(t)
    AS = A @ S
    out = AS + AS.conj().T
    for b in sys.noise(t):
        bS = b @ S
        out += bS @ b.conj().T
    return out


def evolve_second_moment(
    sys: LinearSdeSystem, Sigma0: Array, t0: float, t1: float, steps: Optional[int] = None
) -> Array:
    """RK4 solution of the closed second-moment equation (default 200 steps per unit time)."""
    if steps is None:
        steps = max(1, int(np.ceil(200 * abs(t1 - t0))))
    S0 = np.asarray(Sigma0, dtype=np.complex128)
    return rk4_propagate(lambda t, S: second_moment_rhs(sys, S, t), S0, t0, t1, steps)


def em_reference(sys: LinearSdeSystem, X0, T: float, dt: float, noise: NoisePath) -> Array:
    """Euler--Maruyama driven by the given Gaussian increments.

    ``X0`` may carry leading batch axes matching ``noise.batch_shape``.
    """
    steps = int(round(T / dt))
    if abs(steps * dt - T) > 1e-9 * max(T, 1.0):
        raise ValueError(f"T={T} is not an integer multiple of dt={dt}")
    if noise.steps < steps:
        raise ValueError(f"noise covers {noise.steps} steps, need {steps}")
    if not np.isclose(noise.dt, dt, rtol=1e-12, atol=0.0):
        raise ValueError(f"noise step {noise.dt} does not match dt={dt}")
    if noise.n_channels != sys.n_channels:
        raise ValueError("noise channel count does not match the system")
    X = np.broadcast_to(np.asarray(X0, dtype=np.complex128), noise.batch_shape + (sys.dim,)).copy()
    sqdt = np.sqrt(dt)
    drift = sys.drift(0.0)
    noises = sys.noise(0.0)
    for n in range(steps):
        t = n * dt
        if not sys.autonomous:
            drift = sys.drift(t)
            noises = sys.noise(t)
        inc = (X @ drift.T) * dt
        for j, b in enumerate(noises):
            dW = sqdt * noise.xi1[n, j]
            inc += np.asarray(dW)[..., None] * (X @ b.T)
        X = X + inc
    return X


def growth_envelope(sys: LinearSdeSystem, X0, T: float, nodes: int = 256) -> float:
    """A priori bound ``exp(2 int_0^T gamma) |X0|^2`` on the mean-square norm."""
    nodes = max(nodes, 100)
    ts = np.linspace(0.0, T, nodes)
    gam = structure(sys, ts).gamma
    x0 = np.asarray(X0, dtype=np.complex128)
    return float(np.exp(2.0 * trapezoid(gam, ts)) * np.vdot(x0, x0).real)


def _parse_complex_matrix(obj, name: str) -> Array:
    def conv(e):
        if isinstance(e, (list, tuple)) and len(e) == 2 and all(
            isinstance(v, (int, float)) for v in e
        ):
            return complex(e[0], e[1])
        if isinstance(e, (int, float)):
            return complex(e)
        raise ValueError(f"{name}: entries must be numbers or [re, im] pairs")

    try:
        return np.array([[conv(e) for e in row] for row in obj], dtype=np.complex128)
    except TypeError as exc:
        raise ValueError(f"{name}: expected a list of rows") from exc


def _parse_complex_vector(obj, name: str) -> Array:
    return _parse_complex_matrix([obj], name)[0]


def system_from_literals(doc: dict) -> LinearSdeSystem:
    """Build a constant-coefficient system from a JSON-style mapping.

    Keys: ``dim``, ``channels``, ``A``, ``B`` (list of matrices), optional
    ``D``, ``C``, ``X0`` and ``T``.  Complex entries are ``[re, im]`` pairs.
    """
    A = _parse_complex_matrix(doc["A"], "A")
    Bs = [_parse_complex_matrix(b, f"B[{j}]") for j, b in enumerate(doc.get("B", []))]
    if "dim" in doc and int(doc["dim"]) != A.shape[0]:
        raise ValueError(f"dim={doc['dim']} does not match A of shape {A.shape}")
    if "channels" in doc and int(doc["channels"]) != len(Bs):
        raise ValueError(f"channels={doc['channels']} but {len(Bs)} B matrices given")
    X0 = _parse_complex_vector(doc["X0"], "X0") if "X0" in doc else None
    D = _parse_complex_vector(doc["D"], "D") if "D" in doc else None
    C = None
    if "C" in doc:
        C = [None if c is None else _parse_complex_vector(c, f"C[{j}]") for j, c in enumerate(doc["C"])]
    return LinearSdeSystem.constant(A, Bs, X0=X0, T=doc.get("T"), D=D, C=C, name=doc.get("name", "literal"))


def with_initial_state(sys: LinearSdeSystem, X0) -> LinearSdeSystem:
    return replace(sys, X0=np.asarray(X0, dtype=np.complex128))
