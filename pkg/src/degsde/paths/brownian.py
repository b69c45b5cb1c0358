"""Counter-based Brownian increments with dyadic bridge refinement.

Every random number is addressed by ``(master_seed, path_index, level)`` and
its position in that stream.  The stream is a Philox counter generator keyed
through :class:`numpy.random.SeedSequence`, so paths can be produced in any
order (or in parallel) without changing their values.

Level 0 holds ``base_steps`` increments over ``[0, T]``.  Level ``l + 1``
splits every level-``l`` increment ``dW`` over a step ``h`` into

    dW1 = dW / 2 + sqrt(h) / 2 * xi,    dW2 = dW - dW1,

with ``xi`` standard normal from the level-``l + 1`` stream (Brownian bridge
midpoint), so paired fine increments sum to the coarse one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["substream", "BrownianPath", "sample_path", "refine", "NoiseStream"]


def substream(master_seed: int, path_index: int, level: int = 0) -> np.random.Generator:
    """Generator for one ``(seed, path, level)`` stream; draws advance the counter."""
    ss = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF, int(path_index), int(level)])
    return np.random.Generator(np.random.Philox(ss))


def refine(coarse: np.ndarray, h: float, xi: np.ndarray) -> np.ndarray:
    """Bridge midpoint insertion: ``(steps, n)`` increments -> ``(2 steps, n)``."""
    first = 0.5 * coarse + 0.5 * np.sqrt(h) * xi
    fine = np.empty((2 * coarse.shape[0],) + coarse.shape[1:])
    fine[0::2] = first
    fine[1::2] = coarse - first
    return fine


@dataclass(frozen=True)
class BrownianPath:
    T: float
    n: int
    base_steps: int
    levels: int
    master_seed: int
    path_index: int
    increments: tuple  # increments[l] has shape (base_steps * 2**l, n)

    def dt(self, level: int) -> float:
        return self.T / (self.base_steps * 2 ** level)

    def level_for(self, dt: float) -> int:
        for level in range(self.levels + 1):
            if abs(self.dt(level) - dt) <= 1e-12 * max(1.0, self.T):
                return level
        raise ValueError(f"dt={dt} matches no refinement level of this path")


def sample_path(n: int, T: float, base_steps: int, levels: int, master_seed: int,
                path_index: int = 0) -> BrownianPath:
    if base_steps < 1 or levels < 0:
        raise ValueError("base_steps >= 1 and levels >= 0 required")
    h = T / base_steps
    inc = [np.sqrt(h) * substream(master_seed, path_index, 0).standard_normal((base_steps, n))]
    for level in range(1, levels + 1):
        xi = substream(master_seed, path_index, level).standard_normal(inc[-1].shape)
        inc.append(refine(inc[-1], h, xi))
        h *= 0.5
    return BrownianPath(T, n, base_steps, levels, master_seed, path_index, tuple(inc))


class NoiseStream:
    """Level-0 increments for a block of paths, drawn in step chunks.

    ``next(count)`` returns an array ``(paths, count, n)``; successive calls
    continue each path's stream, so the concatenation equals the increments
    of :func:`sample_path` for the same seed and path index.
    """

    def __init__(self, master_seed: int, path_indices, n: int, dt: float):
        self.gens = [substream(master_seed, p, 0) for p in path_indices]
        self.n = n
        self.scale = np.sqrt(dt)

    def next(self, count: int) -> np.ndarray:
        return self.scale * np.stack([g.standard_normal((count, self.n)) for g in self.gens])


class ArrayNoise:
    """Same interface as :class:`NoiseStream` over precomputed ``(paths, steps, n)`` increments."""

    def __init__(self, increments: np.ndarray):
        self.increments = increments
        self.pos = 0

    def next(self, count: int) -> np.ndarray:
        out = self.increments[:, self.pos:self.pos + count]
        self.pos += count
        return out
