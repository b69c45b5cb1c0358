from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..model import Model
from .brownian import NoiseStream
from .schemes import run_batch
from .simulate import steps_for

DEFAULT_BLOCK = 1024


@dataclass
class McSummary:
    """Aggregate of independent paths.

    Per-path extremes are kept as arrays for downstream queries; only the
    scalar summaries go into the JSON report.
    """

    paths: int
    failed: int
    dt: float
    T: float
    scheme: str
    eps_hit: float
    seed: int
    hit_fraction: list          # per boundary flag
    any_hit_fraction: float
    checkpoints: list           # [{t, mean, var, se}]
    path_min: np.ndarray = field(repr=False)
    path_max_norm: np.ndarray = field(repr=False)
    runtime: float = 0.0

    def fraction_norm_above(self, level: float) -> float:
        return float(np.mean(self.path_max_norm > level)) if self.path_max_norm.size else 0.0

    def to_report(self) -> dict:
        ok = self.path_min
        return {
            "paths": self.paths,
            "failed": self.failed,
            "dt": self.dt,
            "T": self.T,
            "scheme": self.scheme,
            "seed": self.seed,
            "eps_hit": self.eps_hit,
            "hit_fraction": self.hit_fraction,
            "any_hit_fraction": self.any_hit_fraction,
            "checkpoints": self.checkpoints,
            "min_over_path": {
                "mean": ok.mean(axis=0).tolist() if ok.size else [],
                "min": ok.min(axis=0).tolist() if ok.size else [],
            },
            "max_norm_over_path": {
                "mean": float(self.path_max_norm.mean()) if self.path_max_norm.size else None,
                "max": float(self.path_max_norm.max()) if self.path_max_norm.size else None,
            },
        }


def monte_carlo(model: Model, x0, T: float, dt: float, paths: int, scheme: str = "full_truncation",
                checkpoints=None, seed: int = 0, eps_hit: float = 1e-4, threads: int = 1,
                block_size: int = DEFAULT_BLOCK, policy: str = "continue") -> McSummary:
    """Run ``paths`` independent trajectories and summarise them.

    Path ``p`` always uses the stream ``(seed, p)`` and blocks are reduced in
    index order, so the summary does not depend on ``threads``.
    """
    if paths < 1:
        raise ValueError("paths must be at least 1")
    started = time.perf_counter()
    x0 = np.asarray(x0, dtype=float)
    nsteps = steps_for(T, dt)
    times = [T] if checkpoints is None else [float(t) for t in checkpoints]
    outside = [t for t in times if not 0.0 <= t <= T * (1 + 1e-12)]
    if outside:
        raise ValueError(f"checkpoints {outside} lie outside [0, T={T:g}]")
    ck_steps = [steps_for(t, dt) if t > 0 else 0 for t in times]

    blocks = [range(a, min(a + block_size, paths)) for a in range(0, paths, block_size)]

    def work(block):
        noise = NoiseStream(seed, block, model.n, dt)
        x = np.broadcast_to(x0, (len(block), model.n))
        return run_batch(model, x, dt, nsteps, noise, scheme, policy, eps_hit, ck_steps)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, blocks))
    else:
        results = [work(b) for b in blocks]

    failed = np.concatenate([r.failed for r in results])
    ok = ~failed
    hit = np.concatenate([r.hit_step for r in results])[ok] >= 0
    good = int(ok.sum())
    ck = []
    for t, s in zip(times, ck_steps):
        xs = np.concatenate([r.checkpoints[s] for r in results])[ok]
        mean = xs.mean(axis=0) if good else np.full(model.n, np.nan)
        var = xs.var(axis=0, ddof=1) if good > 1 else np.zeros(model.n)
        ck.append({"t": t, "mean": mean.tolist(), "var": var.tolist(),
                   "se": np.sqrt(var / max(good, 1)).tolist()})
    return McSummary(
        paths=paths,
        failed=int(failed.sum()),
        dt=dt,
        T=T,
        scheme=scheme,
        eps_hit=eps_hit,
        seed=seed,
        hit_fraction=hit.mean(axis=0).tolist() if good else [],
        any_hit_fraction=float(hit.any(axis=1).mean()) if good else 0.0,
        checkpoints=ck,
        path_min=np.concatenate([r.path_min for r in results])[ok],
        path_max_norm=np.concatenate([r.path_max_norm for r in results])[ok],
        runtime=time.perf_counter() - started,
    )
