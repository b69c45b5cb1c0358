from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NonFiniteState
from ..model import Model
from .brownian import ArrayNoise, BrownianPath
from .schemes import run_batch


@dataclass
class Trajectory:
    t_grid: np.ndarray
    states: np.ndarray          # (steps + 1, n)
    hit_step: np.ndarray        # per boundary flag, -1 when never hit
    eps_hit: float
    scheme: str
    dt: float
    seed: int
    policy: str = "continue"

    @property
    def hit_times(self) -> list:
        return [None if s < 0 else float(self.t_grid[s]) for s in self.hit_step]

    @property
    def first_hit_step(self) -> int:
        """Earliest step at which any boundary flag fired, or -1."""
        hits = self.hit_step[self.hit_step >= 0]
        return int(hits.min()) if hits.size else -1


def steps_for(T: float, dt: float) -> int:
    nsteps = int(round(T / dt))
    if nsteps < 1 or abs(nsteps * dt - T) > 1e-12 * max(1.0, T):
        raise ValueError(f"dt={dt} does not divide T={T}")
    return nsteps


def integrate(model: Model, x0, T: float, dt: float, path: BrownianPath, scheme: str = "full_truncation",
              boundary_policy: str = "continue", eps_hit: float = 1e-4) -> Trajectory:
    """Integrate ``model`` from ``x0`` on ``[0, T]`` with the increments of ``path``.

    ``dt`` must equal the step of one of the path's refinement levels.
    Raises :class:`NonFiniteState` (carrying the partial trajectory) when the
    scheme produces NaN/inf.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (model.n,):
        raise ValueError(f"x0 must have {model.n} components")
    if path.n != model.n:
        raise ValueError("Brownian path dimension differs from the model dimension")
    nsteps = steps_for(T, dt)
    level = path.level_for(dt)
    inc = path.increments[level]
    if inc.shape[0] < nsteps:
        raise ValueError("Brownian path is shorter than the requested horizon")
    res = run_batch(model, x0[None, :], dt, nsteps, ArrayNoise(inc[None, :nsteps]), scheme,
                    boundary_policy, eps_hit, record=True)
    t_grid = dt * np.arange(nsteps + 1)
    traj = Trajectory(t_grid, res.states[0], res.hit_step[0], eps_hit, scheme, dt,
                      path.master_seed, boundary_policy)
    if res.failed[0]:
        stop = int(res.fail_step[0])
        partial = Trajectory(t_grid[:stop], res.states[0, :stop], res.hit_step[0], eps_hit, scheme,
                             dt, path.master_seed, boundary_policy)
        raise NonFiniteState(f"non-finite state at step {stop} (t={stop * dt:g})", stop, partial)
    return traj
