"""Seeded Brownian increments with exact dyadic coarsening.

Every path draws from its own stream, keyed on ``(seed, path_index)``
through :class:`numpy.random.SeedSequence`, so a path can be regenerated in
isolation and results do not depend on how paths are scheduled.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import GridMismatchError, ParameterRangeError
from .model import as_fraction

DEFAULT_SEED = 20240401


def path_generator(seed: int, path_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(path_index),))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True, eq=False)
class BrownianGrid:
    noise_dim: int
    step: Fraction
    n_steps: int
    increments: np.ndarray
    seed: int
    path_index: int

    def coarsen(self, factor: int) -> "BrownianGrid":
        return coarsen(self, factor)


def generate(seed: int, path_index: int, d: int, delta, n_steps: int) -> BrownianGrid:
    """Draw ``n_steps x d`` independent N(0, delta) increments for one path."""
    if n_steps < 1:
        raise ParameterRangeError(f"n_steps must be >= 1, got {n_steps}")
    try:
        step = as_fraction(delta)
    except ValueError:
        # grid-free use (statistics, single paths): keep the float's exact value
        step = Fraction(float(delta))
    if step <= 0:
        raise ParameterRangeError(f"step must be positive, got {delta}")
    rng = path_generator(seed, path_index)
    inc = rng.standard_normal((n_steps, d)) * np.sqrt(float(step))
    inc.setflags(write=False)
    return BrownianGrid(d, step, n_steps, inc, int(seed), int(path_index))


def generate_block(seed: int, path_indices, d: int, delta, n_steps: int) -> np.ndarray:
    """Stacked increments for several paths, shape ``(len(path_indices), n_steps, d)``."""
    return np.stack([generate(seed, i, d, delta, n_steps).increments for i in path_indices])


def coarsen_increments(inc: np.ndarray, factor: int) -> np.ndarray:
    """Sum consecutive groups of ``factor`` increments along axis ``-2``.

    Power-of-two factors are summed as a balanced binary tree (repeated
    halving), which makes ``coarsen(coarsen(g, 2), 2) == coarsen(g, 4)``
    bit for bit.  Other factors are summed left to right.
    """
    factor = int(factor)
    n = inc.shape[-2]
    if factor < 2:
        raise GridMismatchError(f"coarsening factor must be >= 2, got {factor}")
    if n % factor:
        raise GridMismatchError(f"factor {factor} does not divide {n} steps")
    if factor & (factor - 1) == 0:
        out = inc
        while factor > 1:
            out = out[..., 0::2, :] + out[..., 1::2, :]
            factor //= 2
        return out
    out = inc[..., 0::factor, :].copy()
    for j in range(1, factor):
        out += inc[..., j::factor, :]
    return out


def coarsen(fine: BrownianGrid, factor: int) -> BrownianGrid:
    inc = coarsen_increments(fine.increments, factor)
    inc.setflags(write=False)
    return BrownianGrid(
        fine.noise_dim, fine.step * int(factor), fine.n_steps // int(factor), inc,
        fine.seed, fine.path_index,
    )
