"""Presampled discrete and Gaussian noise paths.

Draws come from numpy's counter-based Philox generator, so a path is fully
determined by its seed (and, for ensembles, by the chunk it belongs to).
Arrays are laid out as ``(steps, channels, *batch)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

LAWS = ("rademacher", "three_point", "gaussian")

SQRT3 = np.sqrt(3.0)
THREE_POINT_VALUES = np.array([0.0, SQRT3, -SQRT3])
THREE_POINT_PROBS = np.array([2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0])


def make_rng(seed) -> np.random.Generator:
    """Philox generator from an int seed or a ``SeedSequence``."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))


def spawn_seeds(seed: int, n: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(n)


@dataclass(frozen=True)
class NoisePath:
    """Normalized per-step draws and the increments derived from them.

    ``xi1`` drives the Wiener increment, ``xi2`` the extra variable needed by
    the weak order-2 step.  Both are dimensionless (unit variance).
    """

    dt: float
    law: str
    xi1: np.ndarray
    xi2: Optional[np.ndarray] = None
    seed: Optional[int] = None

    @property
    def steps(self) -> int:
        return self.xi1.shape[0]

    @property
    def n_channels(self) -> int:
        return self.xi1.shape[1]

    @property
    def batch_shape(self) -> tuple:
        return self.xi1.shape[2:]

    @property
    def dW(self) -> np.ndarray:
        return np.sqrt(self.dt) * self.xi1

    def _need_xi2(self) -> np.ndarray:
        if self.xi2 is None:
            raise ValueError(f"law {self.law!r} path was sampled without xi2")
        return self.xi2

    @property
    def dZ(self) -> np.ndarray:
        """Integral of ``W_s - W_{t_n}`` over the step."""
        return self.dt**1.5 / 2.0 * (self.xi1 + self._need_xi2() / SQRT3)

    @property
    def xi3(self) -> np.ndarray:
        return self.xi1**2 - 1.0

    @property
    def I11(self) -> np.ndarray:
        return 0.5 * self.dt * (self.xi1**2 - 1.0)

    @property
    def I10(self) -> np.ndarray:
        return self.dt * self.dW - self.dZ

    def truncate(self, steps: int) -> "NoisePath":
        x2 = None if self.xi2 is None else self.xi2[:steps]
        return NoisePath(self.dt, self.law, self.xi1[:steps], x2, self.seed)


def _draw(rng: np.random.Generator, law: str, shape: Sequence[int]) -> np.ndarray:
    if law == "rademacher":
        return rng.integers(0, 2, size=shape).astype(np.float64) * 2.0 - 1.0
    if law == "three_point":
        idx = rng.choice(3, size=shape, p=THREE_POINT_PROBS)
        return THREE_POINT_VALUES[idx]
    if law == "gaussian":
        return rng.standard_normal(size=shape)
    raise ValueError(f"unknown noise law {law!r}; expected one of {LAWS}")


def presample(
    steps: int,
    dt: float,
    n_channels: int = 1,
    law: str = "rademacher",
    seed=0,
    *,
    second: Optional[bool] = None,
    batch: Sequence[int] = (),
) -> NoisePath:
    """Materialize a noise path before any propagation happens.

    ``second`` controls whether ``xi2`` is drawn; by default it is drawn for
    the three-point and Gaussian laws.  Rademacher paths only carry ``xi1``
    since the weak order-1 step never needs more.
    """
    if steps < 1:
        raise ValueError("presample needs steps >= 1")
    if law not in LAWS:
        raise ValueError(f"unknown noise law {law!r}; expected one of {LAWS}")
    if second is None:
        second = law != "rademacher"
    rng = make_rng(seed)
    shape = (steps, n_channels, *tuple(batch))
    xi1 = _draw(rng, law, shape)
    xi2 = _draw(rng, law, shape) if second else None
    s = seed if isinstance(seed, (int, np.integer)) else None
    return NoisePath(float(dt), law, xi1, xi2, s)


def stream_blocks(
    steps: int,
    dt: float,
    n_channels: int = 1,
    law: str = "rademacher",
    seed=0,
    *,
    batch: Sequence[int] = (),
    block_steps: int = 256,
):
    """Yield ``(first_step, NoisePath)`` pieces of a first-variable-only path.

    The generator consumes its stream in step order, so concatenating the
    pieces reproduces ``presample(..., second=False)`` draw for draw while
    holding only ``block_steps`` steps in memory.
    """
    if steps < 1:
        raise ValueError("stream_blocks needs steps >= 1")
    if law not in LAWS:
        raise ValueError(f"unknown noise law {law!r}; expected one of {LAWS}")
    rng = make_rng(seed)
    s = seed if isinstance(seed, (int, np.integer)) else None
    for n0 in range(0, steps, block_steps):
        k = min(block_steps, steps - n0)
        xi1 = _draw(rng, law, (k, n_channels, *tuple(batch)))
        yield n0, NoisePath(float(dt), law, xi1, None, s)
