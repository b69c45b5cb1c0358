"""One-step integration schemes and the vectorised batch integrator."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DomainError, NonFiniteState
from ..model import Model

SCHEMES = ("euler", "full_truncation", "projected")
BOUNDARY_POLICIES = ("continue", "absorb")


def _increment(model: Model, xe: np.ndarray, x: np.ndarray, dt: float, dW: np.ndarray) -> np.ndarray:
    drift = model.mu(xe)
    noise = np.einsum("...ij,...j->...i", model.sigma(xe), dW)
    return x + drift * dt + noise


def raw_step(model: Model, scheme: str, x: np.ndarray, dt: float, dW: np.ndarray) -> np.ndarray:
    if scheme == "euler":
        return _increment(model, x, x, dt, dW)
    if scheme == "full_truncation":
        # coefficients at the projected state, the state itself is left alone
        return _increment(model, model.project(x), x, dt, dW)
    if scheme == "projected":
        return model.project(_increment(model, x, x, dt, dW))
    raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


def _batch_step(model: Model, scheme: str, x: np.ndarray, dt: float, dW: np.ndarray) -> np.ndarray:
    """``raw_step`` over a batch; rows whose coefficients raise become NaN."""
    try:
        return raw_step(model, scheme, x, dt, dW)
    except DomainError:
        out = np.empty_like(x)
        for p in range(x.shape[0]):
            try:
                out[p] = raw_step(model, scheme, x[p], dt, dW[p])
            except DomainError:
                out[p] = np.nan
        return out


def step(model: Model, scheme: str, x, dt: float, dW) -> np.ndarray:
    """Advance ``x`` by one step of ``scheme`` with Brownian increment ``dW``.

    - ``euler``: ``x + mu(x) dt + sigma(x) dW``
    - ``full_truncation``: coefficients evaluated at the domain projection of ``x``
    - ``projected``: Euler step, then projection onto the closed domain
    """
    x = np.asarray(x, dtype=float)
    try:
        with np.errstate(invalid="ignore", over="ignore"):
            out = raw_step(model, scheme, x, dt, np.asarray(dW, dtype=float))
    except DomainError as exc:
        raise NonFiniteState(f"{scheme} step: coefficient evaluation failed ({exc})") from exc
    if not np.all(np.isfinite(out)):
        raise NonFiniteState(f"{scheme} step produced a non-finite state")
    return out


@dataclass
class BatchResult:
    final: np.ndarray            # (P, n)
    hit_step: np.ndarray         # (P, h), -1 when never hit
    failed: np.ndarray           # (P,)
    fail_step: np.ndarray        # (P,), -1 when finite throughout
    path_min: np.ndarray         # (P, n)
    path_max_norm: np.ndarray    # (P,)
    checkpoints: dict = field(default_factory=dict)   # step -> (P, n)
    states: np.ndarray | None = None                  # (P, steps + 1, n) when recorded


def run_batch(model: Model, x0: np.ndarray, dt: float, nsteps: int, noise, scheme: str,
              policy: str = "continue", eps_hit: float = 1e-4, checkpoint_steps=(),
              record: bool = False, chunk: int = 1024) -> BatchResult:
    """Integrate ``P`` paths simultaneously.

    ``noise.next(count)`` supplies ``(P, count, n)`` increments.  Paths that
    turn non-finite are frozen at their last finite state and flagged.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    if policy not in BOUNDARY_POLICIES:
        raise ValueError(f"unknown boundary policy {policy!r}")
    x = np.array(x0, dtype=float)
    P, n = x.shape
    h = model.n_hit_flags
    hit_step = np.full((P, h), -1, dtype=np.int64)
    hits0 = model.hit_mask(x, eps_hit)
    hit_step[hits0] = 0
    absorbed = hits0.any(axis=1) if policy == "absorb" else np.zeros(P, dtype=bool)
    failed = np.zeros(P, dtype=bool)
    fail_step = np.full(P, -1, dtype=np.int64)
    path_min = x.copy()
    path_max_norm = np.linalg.norm(x, axis=1)
    wanted = set(int(s) for s in checkpoint_steps)
    checkpoints = {0: x.copy()} if 0 in wanted else {}
    states = None
    if record:
        states = np.empty((P, nsteps + 1, n))
        states[:, 0] = x

    k = 0
    with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
        while k < nsteps:
            count = min(chunk, nsteps - k)
            dW = noise.next(count)
            for j in range(count):
                new = _batch_step(model, scheme, x, dt, dW[:, j])
                bad = ~np.isfinite(new).all(axis=1)
                if policy == "absorb":
                    bad &= ~absorbed
                    new[absorbed] = x[absorbed]
                if bad.any():
                    fresh = bad & ~failed
                    fail_step[fresh] = k + 1
                    failed |= bad
                frozen = failed
                if frozen.any():
                    new[frozen] = x[frozen]
                x = new
                k += 1
                hits = model.hit_mask(x, eps_hit) & (hit_step < 0)
                if hits.any():
                    hit_step[hits] = k
                    if policy == "absorb":
                        absorbed |= hits.any(axis=1)
                np.minimum(path_min, x, out=path_min)
                np.maximum(path_max_norm, np.linalg.norm(x, axis=1), out=path_max_norm)
                if k in wanted:
                    checkpoints[k] = x.copy()
                if record:
                    states[:, k] = x
    return BatchResult(x, hit_step, failed, fail_step, path_min, path_max_norm, checkpoints, states)
