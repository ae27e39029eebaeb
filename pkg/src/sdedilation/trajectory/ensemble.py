"""Monte Carlo ensembles with chunked, reproducible noise streams."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..dilation import Readout, project_readout
from ..noise import presample, stream_blocks
from .segmented import advance, default_law, is_real_model, make_integrator, needs_second, propagate

Array = np.ndarray


@dataclass
class EnsembleResult:
    mean: complex
    stderr: float
    n: int

    def as_dict(self) -> dict:
        return {"mean": complex(self.mean), "stderr": self.stderr, "n": self.n}


def component(i: int) -> Callable[[Array], Array]:
    return lambda x: x[..., i]


def squared_norm(x: Array) -> Array:
    return np.sum(np.abs(x) ** 2, axis=-1)


def cos_affine_quadratic(a=(1.0, 1.0, 0.0), Q=None, c: float = 0.0) -> Callable[[Array], Array]:
    """``cos(a.x + x^T Q x + c)``; the default ``Q`` adds ``x_3^2``."""
    a = np.asarray(a, dtype=float)
    if Q is None:
        Q = np.zeros((a.size, a.size))
        Q[-1, -1] = 1.0
    Q = np.asarray(Q, dtype=float)

    def f(x):
        x = np.real(x)
        return np.cos(x @ a + np.einsum("...i,ij,...j->...", x, Q, x) + c)

    return f


def constant_one(x: Array) -> Array:
    return np.ones(x.shape[:-1])


FUNCTIONALS = {
    "one": lambda: constant_one,
    "squared_norm": lambda: squared_norm,
    "cos_x1_x2_x3sq": cos_affine_quadratic,
}


def run_chunk(model, scheme: str, x0, T: float, dt: float, law: str, seed, size: int,
              max_draws: int = 2**24) -> Array:
    """Final states of ``size`` paths driven by one seed.

    Schemes that only use the first variable stream their draws in step
    blocks, which is draw-for-draw the same path as presampling it whole.
    """
    steps = int(round(T / dt))
    J = model.n_channels
    if needs_second(scheme) or steps * J * size <= max_draws:
        noise = presample(steps, dt, J, law, seed, second=needs_second(scheme), batch=(size,))
        return propagate(model, scheme, x0, T, dt, noise)
    x0 = np.asarray(x0)
    real = not np.any(np.imag(x0)) and is_real_model(model)
    psi = np.broadcast_to((x0.real if real else x0).astype(np.float64 if real else np.complex128),
                          (size, model.dim)).copy()
    integ = make_integrator(model, scheme, dt, real=real)
    block = max(1, max_draws // (J * size))
    for n0, piece in stream_blocks(steps, dt, J, law, seed, batch=(size,), block_steps=block):
        psi = advance(integ, psi, piece, 0, piece.steps, t0=n0 * dt)
    return psi.astype(np.complex128)


def ensemble_run(
    model,
    scheme: str,
    T: float,
    dt: float,
    n_samples: int,
    f: Callable[[Array], Array],
    seed: int = 0,
    *,
    x0=None,
    law: Optional[str] = None,
    chunk: int = 20000,
    max_draws: int = 2**24,
    threads: int = 1,
    readout: Optional[Readout] = None,
    n_sys: Optional[int] = None,
) -> EnsembleResult:
    """Estimate ``E[f(X_T)]``.

    Samples are split into chunks; chunk ``c`` draws from the ``c``-th child
    of ``SeedSequence(seed)``, so results do not depend on ``threads``.  For a
    dilated model pass ``readout`` so that ``f`` sees the projected state;
    ``x0`` is then the factored dilated initial state.
    """
    law = default_law(scheme) if law is None else law
    steps = int(round(T / dt))
    if x0 is None:
        x0 = model.sys.X0 if hasattr(model, "sys") else model.X0
        if readout is not None:
            x0 = model.factored(x0)
    sizes = [min(chunk, n_samples - s) for s in range(0, n_samples, chunk)]
    children = np.random.SeedSequence(seed).spawn(len(sizes))

    def work(k):
        X = run_chunk(model, scheme, x0, T, dt, law, children[k], sizes[k], max_draws)
        if readout is not None:
            X = project_readout(X, readout, n_sys if n_sys is not None else model.n_sys)
        vals = np.asarray(f(X))
        return vals.sum(), np.sum(np.abs(vals) ** 2)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(work, range(len(sizes))))
    else:
        parts = [work(k) for k in range(len(sizes))]
    s1 = sum(p[0] for p in parts)
    s2 = sum(p[1] for p in parts)
    mean = s1 / n_samples
    var = max(s2 / n_samples - abs(mean) ** 2, 0.0)
    se = float(np.sqrt(var * n_samples / max(n_samples - 1, 1) / n_samples))
    mean = complex(mean)
    return EnsembleResult(mean.real if mean.imag == 0 else mean, se, n_samples)
