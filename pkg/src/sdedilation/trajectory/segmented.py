"""Integrator dispatch and segmented evolution with refresh and amplitude ledger."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..dilation import DilatedOperators, Readout, project_readout
from ..noise import NoisePath, presample
from .weak1 import Weak1Integrator, realify
from .weak2 import Weak2Integrator

Array = np.ndarray

SCHEMES = ("em", "weak1", "weak1_kraus", "weak2", "weak2_measurement")
REFRESH_FLOOR = 1e-6


class RefreshError(RuntimeError):
    """The readout window lost (almost) all weight during a segment."""


class EulerIntegrator:
    """Euler--Maruyama; batches are stepped in column layout ``(dim, batch)``.

    All channel products come from one stacked matrix
    ``[I + dt A; B_1; ...; B_J]`` applied to the state columns.
    """

    columns = True

    def __init__(self, model, dt: float, *, real: bool = False):
        self.model = model
        self.dt = float(dt)
        self.real = real
        self._cache = None

    def _stack(self, t: float) -> Array:
        if self._cache is None or not self.model.autonomous:
            n = self.model.dim
            parts = [np.eye(n) + self.dt * self.model.drift(t)] + list(self.model.noise(t))
            G = np.concatenate(parts, axis=0)
            self._cache = np.ascontiguousarray(G.real) if self.real else G
        return self._cache

    def step_columns(self, X: Array, t: float, xi1_n: Array) -> Array:
        n = self.model.dim
        Y = self._stack(t) @ X
        out = Y[:n]
        sq = np.sqrt(self.dt)
        for j in range(self.model.n_channels):
            out += (sq * np.asarray(xi1_n[j])) * Y[(j + 1) * n:(j + 2) * n]
        return out

    def step(self, psi: Array, t: float, xi1_n: Array) -> Array:
        X = np.moveaxis(psi, -1, 0)
        return np.moveaxis(self.step_columns(X, t, xi1_n), 0, -1)


def make_integrator(model, scheme: str, dt: float, *, real: bool = False):
    if scheme == "em":
        return EulerIntegrator(model, dt, real=real)
    if scheme == "weak1":
        return Weak1Integrator(model, dt, real=real)
    if scheme == "weak1_kraus":
        return Weak1Integrator(model, dt, kraus=True, real=real)
    if scheme == "weak2":
        return Weak2Integrator(model, dt, real=real)
    if scheme == "weak2_measurement":
        return Weak2Integrator(model, dt, circuit=True, real=real)
    raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


def needs_second(scheme: str) -> bool:
    return scheme.startswith("weak2")


def default_law(scheme: str) -> str:
    return "three_point" if scheme.startswith("weak2") else ("gaussian" if scheme == "em" else "rademacher")


def advance(integ, psi: Array, noise: NoisePath, n0: int, n1: int, t0: float = 0.0,
            callback: Optional[Callable[[int, Array], None]] = None) -> Array:
    """Apply steps ``n0 .. n1-1`` of the presampled path."""
    needs_xi2 = isinstance(integ, Weak2Integrator)
    dt = integ.dt
    if getattr(integ, "columns", False) and callback is None and psi.ndim == 2:
        X = np.ascontiguousarray(psi.T)
        for n in range(n0, n1):
            X = integ.step_columns(X, t0 + n * dt, noise.xi1[n])
        return np.ascontiguousarray(X.T)
    for n in range(n0, n1):
        t = t0 + n * dt
        if needs_xi2:
            psi = integ.step(psi, t, noise.xi1[n], noise.xi2[n])
        else:
            psi = integ.step(psi, t, noise.xi1[n])
        if callback is not None:
            callback(n, psi)
    return psi


def is_real_model(model) -> bool:
    """Autonomous with real coefficients, so real arithmetic is exact."""
    if not model.autonomous:
        return False
    mats = [model.drift(0.0), model.generator(0.0)] + list(model.noise(0.0))
    return all(not np.any(np.imag(m)) for m in mats)


def propagate(model, scheme: str, psi0, T: float, dt: float, noise: NoisePath, *,
              allow_real: bool = True, **kw) -> Array:
    """Run ``T/dt`` steps from ``psi0`` (broadcast over the noise batch)."""
    steps = steps_for(T, dt)
    if noise.steps < steps:
        raise ValueError(f"noise covers {noise.steps} steps, need {steps}")
    psi0 = np.asarray(psi0)
    real = allow_real and not np.any(np.imag(psi0)) and is_real_model(model)
    dtype = np.float64 if real else np.complex128
    psi0 = psi0.real if real else psi0
    psi = np.broadcast_to(psi0.astype(dtype), noise.batch_shape + (model.dim,)).copy()
    integ = make_integrator(model, scheme, dt, real=real)
    return advance(integ, psi, noise, 0, steps, **kw).astype(np.complex128)


def steps_for(T: float, dt: float) -> int:
    n = int(round(T / dt))
    if n < 1 or abs(n * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"T={T} is not a positive integer multiple of dt={dt}")
    return n


@dataclass
class WeightedState:
    """Normalized state, squared-amplitude weight and per-segment logs.

    Every field may carry leading batch axes when several paths run at once.
    """

    phi: Array
    lam: Array
    g: list = field(default_factory=list)
    q: list = field(default_factory=list)

    def reconstruct(self, readout: Readout, n_sys: int, mode: str = "lh") -> Array:
        """Unnormalized system trajectory ``sqrt(lambda) * readout(phi)``."""
        x = project_readout(self.phi, readout, n_sys, mode)
        return np.sqrt(self.lam)[..., None] * x


def off_mode_weight(psi: Array, r: Array, n_anc: int, n_sys: int) -> Array:
    """Relative squared weight of ``psi`` outside ``r (x) C^N``."""
    blocks = psi.reshape(psi.shape[:-1] + (n_anc, n_sys))
    x = np.einsum("j,...js->...s", r.conj(), blocks)
    rest = blocks - r[:, None] * x[..., None, :]
    tot = np.sum(np.abs(blocks) ** 2, axis=(-2, -1))
    return np.sum(np.abs(rest) ** 2, axis=(-2, -1)) / tot


def run_segmented(
    dilated: DilatedOperators,
    readout: Readout,
    scheme: str,
    T: float,
    dt: float,
    tau: float,
    noise: NoisePath,
    *,
    refresh: bool = True,
    x0=None,
    fold_q: bool = False,
    track_offmode: bool = False,
    record_every: int = 0,
    mode: str = "lh",
) -> tuple[WeightedState, dict]:
    """Segment-wise trajectory with exact growth factors.

    Each segment applies ``tau/dt`` steps, records
    ``g_m = |psi_after|^2 / |psi_before|^2`` and renormalizes.  With
    ``refresh`` the ancilla is projected onto the readout window (weight
    ``q_m``), renormalized and mapped back to ``r_h`` by the window reflection.
    ``lambda`` multiplies by ``g_m`` only unless ``fold_q`` is set.
    """
    steps = steps_for(T, dt)
    per_seg = steps_for(tau, dt)
    if steps % per_seg:
        raise ValueError(f"tau={tau} does not divide T={T}")
    if noise.steps < steps:
        raise ValueError(f"noise covers {noise.steps} steps, need {steps}")
    n_anc, n_sys = dilated.n_anc, dilated.n_sys
    chain = dilated.chain
    if x0 is None:
        x0 = dilated.sys.X0
    if x0 is None:
        raise ValueError("no initial system state given")
    psi = dilated.factored(np.broadcast_to(np.asarray(x0, dtype=np.complex128), noise.batch_shape + (n_sys,)))
    nrm2 = np.sum(np.abs(psi) ** 2, axis=-1)
    psi = psi / np.sqrt(nrm2)[..., None]
    lam = nrm2.astype(float)

    integ = make_integrator(dilated, scheme, dt)
    win = readout.window
    Wwin = readout.W_win
    offmode: list = []
    samples: list = []

    def cb(n, state):
        if track_offmode:
            offmode.append(np.max(off_mode_weight(state, chain.r, n_anc, n_sys)))
        if record_every and (n + 1) % record_every == 0:
            x = project_readout(state, readout, n_sys, mode)
            samples.append(((n + 1) * dt, np.sqrt(lam_now[0])[..., None] * x))

    lam_now = [lam]
    g_log, q_log, qlh_log = [], [], []
    for m in range(steps // per_seg):
        psi = advance(integ, psi, noise, m * per_seg, (m + 1) * per_seg, callback=cb)
        n2 = np.sum(np.abs(psi) ** 2, axis=-1)
        g = n2
        psi = psi / np.sqrt(n2)[..., None]
        blocks = psi.reshape(psi.shape[:-1] + (n_anc, n_sys))
        q = np.sum(np.abs(blocks) ** 2 * win[:, None], axis=(-2, -1))
        xl = np.einsum("j,...js->...s", readout.l_normalized.conj(), blocks)
        qlh_log.append(np.sum(np.abs(xl) ** 2, axis=-1))
        q_log.append(q)
        g_log.append(g)
        if refresh:
            if np.any(q < REFRESH_FLOOR):
                raise RefreshError(f"window weight fell to {float(np.min(q)):.3e} in segment {m}")
            blocks = blocks * win[:, None] / np.sqrt(q)[..., None, None]
            blocks = np.einsum("ab,...bs->...as", Wwin, blocks)
            psi = blocks.reshape(psi.shape)
        lam = lam * g * (q if (refresh and fold_q) else 1.0)
        lam_now[0] = lam

    state = WeightedState(phi=psi, lam=lam, g=g_log, q=q_log)
    g_arr = np.array(g_log)
    diag = {
        "segments": len(g_log),
        "steps_per_segment": per_seg,
        "g": g_arr,
        "q_window": np.array(q_log),
        "q_lh": np.array(qlh_log),
        "Gamma1": np.sum(g_arr ** -0.5, axis=0),
        "Gamma2": np.sum(g_arr ** -1.0, axis=0),
        "oaa_rounds": np.ceil(1.0 / np.sqrt(np.array(q_log))),
        "refresh": refresh,
    }
    if track_offmode:
        diag["offmode_max"] = float(max(offmode)) if offmode else 0.0
    if record_every:
        diag["samples"] = samples
    return state, diag
