"""Coupling of a projected coordinate with a one-dimensional dominating process.

Orthant (``p = x_i``): after the time change

    phi(t) = int_0^{t ^ tau} a_i(X) / a_i^+(p_i(X)) ds,    Y(t) = X(phi^{-1}(t)),

the projection satisfies ``dp = a^+(p) b_i(Y) dt + sqrt(a^+(p)) dW~``.  The
increments ``dW~`` are recovered from the realised path and drive

    dZ = a^+(Z) / Z dt + sqrt(a^+(Z)) dW~,

integrated through its square ``Z1 = Z^2``:
``dZ1 = 3 a^+(sqrt Z1) dt + 2 sqrt(Z1) sqrt(a^+(sqrt Z1)) dW~``.  Since
``a^+ b_i >= a^+ b^- > a^+ / r`` the comparison theorem gives ``Z <= p(Y)``.

Ball (``p = |x|^2``): ``a = 8 p (1 - p)`` depends on ``p`` alone, so the time
change is the identity, and the dominating process

    dZ = 2 [n - (n + kappa) Z] dt + sqrt(8 Z (1 - Z)) dW~

sits above: ``p(Y) <= Z``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .conditions import RadialEnvelope, ball_envelope, default_r_grid, envelope, DEFAULT_R
from .errors import ComparisonPrecondition, ConfigError, NonFiniteState, NonMonotone, ZeroDiffusion
from .model import OPEN_UNIT_BALL, POSITIVE_ORTHANT, Model
from .paths.brownian import NoiseStream, sample_path
from .paths.simulate import Trajectory, integrate, steps_for

BELOW, ABOVE = "below", "above"
ORDERED, VIOLATED, INCONCLUSIVE = "ordered", "violated", "inconclusive"
DEFAULT_C_TOL = 5.0


# ---------------------------------------------------------------------------
# projections


@dataclass(frozen=True)
class Projection:
    """``p(x) = x_i`` (``i >= 1``) or ``p(x) = |x|^2`` (``i = "radial"``)."""

    i: int | str

    @property
    def radial(self) -> bool:
        return self.i == "radial"

    @property
    def direction(self) -> str:
        return ABOVE if self.radial else BELOW

    def value(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.radial:
            return np.sum(x * x, axis=-1)
        return x[..., self.i - 1]

    def coefficients(self, model: Model, x) -> tuple[np.ndarray, np.ndarray]:
        """Ito drift ``Lp`` and squared diffusion ``a`` of ``p(X)`` at ``x``."""
        x = np.asarray(x, dtype=float)
        if self.radial:
            m = model.m(x)
            lp = 2.0 * np.einsum("...i,...i->...", x, model.mu(x)) + np.trace(m, axis1=-2, axis2=-1)
            return lp, 4.0 * np.einsum("...i,...ij,...j->...", x, m, x)
        k = self.i - 1
        return model.mu(x)[..., k], model.m_diag(x)[..., k]


# ---------------------------------------------------------------------------
# setup


@dataclass
class ComparisonSetup:
    """Everything the coupling needs besides the trajectory.

    ``b1`` is the envelope bound on the projected drift (lower on the orthant,
    upper on the ball) and ``b2`` the dominating drift; the ordering needs
    ``b1 > b2`` (orthant) or ``b1 <= b2`` (ball) on the grid.
    """

    projection: Projection
    a_plus: Callable[[np.ndarray], np.ndarray]
    b1: Callable[[np.ndarray], np.ndarray]
    b2: Callable[[np.ndarray], np.ndarray]
    z0: float
    r_grid: np.ndarray
    envelope: RadialEnvelope | None = None
    params: dict = field(default_factory=dict)

    @property
    def direction(self) -> str:
        return self.projection.direction

    def precondition_margin(self) -> float:
        """Worst ``b1 - b2`` (orthant) or ``b2 - b1`` (ball) on the grid; must be positive / >= 0."""
        gap = self.b1(self.r_grid) - self.b2(self.r_grid)
        return float(gap.min() if self.direction == BELOW else (-gap).min())

    def check(self) -> None:
        margin = self.precondition_margin()
        if self.direction == BELOW and not margin > 0:
            raise ComparisonPrecondition(
                f"envelope drift a^+ b^- does not exceed a^+/r on the grid (worst margin {margin:.6g})")
        # sampled sup of the projected drift may exceed the closed form by rounding only
        if self.direction == ABOVE and margin < -1e-9 * max(1.0, float(np.abs(self.b2(self.r_grid)).max())):
            raise ComparisonPrecondition(
                f"projected drift exceeds the dominating drift on the grid (worst margin {margin:.6g})")

    def dominating_drift(self, z):
        return self.b2(z)


def setup_for(model: Model, i, x0, envelope_: RadialEnvelope | None = None, r_grid=None,
              R: float = DEFAULT_R, samples: int = 256, seed: int = 0, check: bool = True) -> ComparisonSetup:
    """Build the comparison setup for coordinate ``i`` (orthant) or ``"radial"`` (ball)."""
    x0 = np.asarray(x0, dtype=float)
    if model.domain == POSITIVE_ORTHANT:
        if i == "radial":
            raise ConfigError("orthant models are projected on a coordinate, not radially")
        i = int(i)
        proj = Projection(i)
        if envelope_ is None:
            grid = default_r_grid(R) if r_grid is None else np.asarray(r_grid, dtype=float)
            envelope_ = envelope(model, i, grid, R, samples, seed)
        env = envelope_
        setup = ComparisonSetup(proj, env.a_plus_at, env.b1, env.b2, float(proj.value(x0)), env.r_grid, env,
                                {"R": env.R, "samples": env.samples_per_slice})
    elif model.domain == OPEN_UNIT_BALL:
        if i not in ("radial", None):
            raise ConfigError("ball models are projected radially (i = \"radial\")")
        kappa = getattr(model, "kappa", None)
        if kappa is None:
            raise ConfigError("the ball comparison needs a unit_ball model (kappa)")
        n = model.n
        grid = np.linspace(0.01, 0.99, 99) if r_grid is None else np.asarray(r_grid, dtype=float)
        env = ball_envelope(model, grid, samples, seed) if envelope_ is None else envelope_

        def a_plus(r):
            r = np.asarray(r, dtype=float)
            return 8.0 * r * (1.0 - r)

        def b1(r):
            # sampled sup of a^+ b over the sphere, interpolated in r
            return np.interp(r, env.r_grid, env.a_plus * env.b_plus)

        def b2(z):
            return 2.0 * (n - (n + kappa) * np.asarray(z, dtype=float))

        setup = ComparisonSetup(Projection("radial"), a_plus, b1, b2, float(Projection("radial").value(x0)),
                                env.r_grid, env, {"n": n, "kappa": kappa, "samples": samples})
    else:
        raise ConfigError("comparison needs a positive-orthant or open-unit-ball model")
    if check:
        setup.check()
    return setup


# ---------------------------------------------------------------------------
# time change and resampling


@dataclass
class TimeChange:
    t: np.ndarray          # original times up to the stop
    phi: np.ndarray        # changed time at those instants
    stop: int              # number of grid points used
    ratio_max: float       # largest a / a^+ seen (above 1 only through sampling slack)
    stopped_early: bool

    def psi(self, s) -> np.ndarray:
        """Inverse of ``phi`` (piecewise linear on the achieved range)."""
        return np.interp(s, self.phi, self.t)


def _usable_length(traj: Trajectory, proj: Projection) -> tuple[int, bool]:
    states = traj.states
    p = proj.value(states)
    bad = (p >= 1.0) if proj.radial else (p <= 0.0)
    hit = traj.hit_step[0] if proj.radial else traj.hit_step[proj.i - 1]
    stop = len(states)
    if hit >= 0:
        stop = int(hit)
    if bad.any():
        stop = min(stop, int(np.argmax(bad)))
    return max(stop, 1), stop < len(states)


def time_change(traj: Trajectory, model: Model, setup: ComparisonSetup) -> TimeChange:
    """``phi(t) = int a(X) / a^+(p(X)) ds`` by cumulative trapezoid, stopped at the hit flag."""
    stop, early = _usable_length(traj, setup.projection)
    x = traj.states[:stop]
    _, a = setup.projection.coefficients(model, x)
    ap = setup.a_plus(setup.projection.value(x))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = a / ap
    if not np.all(np.isfinite(ratio)) or np.any(ratio <= 0):
        k = int(np.argmax(~(np.isfinite(ratio) & (ratio > 0))))
        raise NonMonotone(f"time-change integrand is {ratio[k]!r} at t = {traj.t_grid[k]:g}")
    t = traj.t_grid[:stop]
    phi = np.concatenate([[0.0], np.cumsum(0.5 * (ratio[1:] + ratio[:-1]) * np.diff(t))])
    if np.any(np.diff(phi) <= 0):
        raise NonMonotone("changed time is not strictly increasing")
    return TimeChange(t, phi, stop, float(ratio.max()), early)


def resample(traj: Trajectory, tc: TimeChange, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """``Y(s) = X(psi(s))`` on the uniform grid ``s = 0, dt, ...`` within ``phi``'s range."""
    count = int(np.floor(tc.phi[-1] / dt * (1 + 1e-12))) + 1
    s = dt * np.arange(count)
    tau = tc.psi(s)
    x = traj.states[:tc.stop]
    y = np.stack([np.interp(tau, tc.t, x[:, j]) for j in range(x.shape[1])], axis=-1)
    return s, y


# ---------------------------------------------------------------------------
# noise reconstruction and the dominating process


@dataclass
class NoiseReconstruction:
    increments: np.ndarray
    qv: float
    elapsed: float

    @property
    def qv_relative_error(self) -> float:
        return abs(self.qv - self.elapsed) / self.elapsed if self.elapsed > 0 else float("nan")


def reconstruct_noise(p_series, a_plus_values, b_values, dt: float) -> NoiseReconstruction:
    """``dW~_k = (p_{k+1} - p_k - a^+_k b_k dt) / sqrt(a^+_k)`` with its realised quadratic variation."""
    p = np.asarray(p_series, dtype=float)
    ap = np.asarray(a_plus_values, dtype=float)[:-1]
    b = np.asarray(b_values, dtype=float)[:-1]
    if np.any(~(ap > 0)):
        k = int(np.argmax(~(ap > 0)))
        raise ZeroDiffusion(f"a^+ vanishes at grid point {k} (p = {p[k]:g})")
    dw = (np.diff(p) - ap * b * dt) / np.sqrt(ap)
    return NoiseReconstruction(dw, float(np.sum(dw * dw)), dt * dw.size)


def dominate(setup: ComparisonSetup, dW, dt: float) -> np.ndarray:
    """Dominating path driven by ``dW``.

    Orthant: the squared form ``Z1`` with coefficients at ``max(Z1, 0)``,
    returned as ``Z = sqrt(max(Z1, 0))``.  Ball: the radial equation with
    coefficients at ``Z`` clipped to ``[0, 1]``.
    """
    dW = np.asarray(dW, dtype=float)
    out = np.empty(dW.size + 1)
    if setup.direction == BELOW:
        z1 = setup.z0 ** 2
        out[0] = setup.z0
        for k, w in enumerate(dW):
            zp = np.sqrt(max(z1, 0.0))
            ap = float(setup.a_plus(zp))
            z1 = z1 + 3.0 * ap * dt + 2.0 * zp * np.sqrt(max(ap, 0.0)) * w
            out[k + 1] = np.sqrt(max(z1, 0.0))
    else:
        z = setup.z0
        out[0] = z
        for k, w in enumerate(dW):
            zc = min(max(z, 0.0), 1.0)
            z = z + float(setup.b2(zc)) * dt + np.sqrt(8.0 * zc * (1.0 - zc)) * w
            out[k + 1] = z
    if not np.all(np.isfinite(out)):
        k = int(np.argmax(~np.isfinite(out)))
        raise NonFiniteState(f"dominating process left the reals at step {k}", k)
    return out


def dominate_z_form(setup: ComparisonSetup, dW, dt: float) -> np.ndarray:
    """Direct Euler for ``dZ = a^+(Z)/Z dt + sqrt(a^+(Z)) dW~`` (consistency audit of :func:`dominate`)."""
    if setup.direction != BELOW:
        raise ConfigError("the direct form applies to the orthant comparison")
    dW = np.asarray(dW, dtype=float)
    out = np.empty(dW.size + 1)
    z = setup.z0
    out[0] = z
    for k, w in enumerate(dW):
        zp = max(z, 0.0)
        ap = float(setup.a_plus(zp))
        # a^+(z)/z is the interpolated slope, finite at z = 0
        drift = float(setup.b2(zp)) if zp > 0 else float(setup.b2(setup.r_grid[0]))
        z = z + drift * dt + np.sqrt(max(ap, 0.0)) * w
        out[k + 1] = z
    return out


# ---------------------------------------------------------------------------
# the coupling pipeline


@dataclass
class CouplingReport:
    i: int | str
    direction: str
    t: np.ndarray = field(repr=False)        # changed-time grid
    p_series: np.ndarray = field(repr=False)
    dW: np.ndarray = field(repr=False)
    Z: np.ndarray = field(repr=False)
    margin_min: float
    violations: int
    tol: float
    dt: float
    seed: int
    verdict: str
    qv: float
    elapsed: float
    phi_T: float
    ratio_max: float
    stopped_early: bool
    z_form_gap: float | None
    x0: list
    T: float

    @property
    def points(self) -> int:
        return int(self.t.size)

    @property
    def violation_fraction(self) -> float:
        return self.violations / self.points if self.points else 0.0

    @property
    def qv_relative_error(self) -> float:
        return abs(self.qv - self.elapsed) / self.elapsed if self.elapsed > 0 else float("nan")

    def to_report(self) -> dict:
        return {
            "i": self.i,
            "direction": self.direction,
            "x0": self.x0,
            "T": self.T,
            "dt": self.dt,
            "seed": self.seed,
            "verdict": self.verdict,
            "tol": self.tol,
            "margin_min": self.margin_min,
            "violations": self.violations,
            "points": self.points,
            "violation_fraction": self.violation_fraction,
            "qv": self.qv,
            "elapsed": self.elapsed,
            "qv_relative_error": self.qv_relative_error,
            "phi_T": self.phi_T,
            "ratio_max": self.ratio_max,
            "stopped_early": self.stopped_early,
            "z_min": float(self.Z.min()),
            "z_max": float(self.Z.max()),
            "z_form_gap": self.z_form_gap,
        }

    def series(self) -> np.ndarray:
        """Columns ``t, p(Y), Z``."""
        return np.column_stack([self.t, self.p_series, self.Z])


def couple(model: Model, i, x0, T: float, dt: float, seed: int, setup: ComparisonSetup | None = None,
           C_tol: float = DEFAULT_C_TOL, eps_hit: float = 1e-4, scheme: str = "full_truncation",
           path_index: int = 0) -> CouplingReport:
    """Integrate ``X``, time-change it, rebuild ``dW~``, drive ``Z`` and audit the ordering.

    A grid point violates the ordering when ``p(Y) < Z - tol`` (orthant) or
    ``p(Y) > Z + tol`` (ball), with ``tol = C_tol sqrt(dt)``.
    """
    x0 = np.asarray(x0, dtype=float)
    if setup is None:
        setup = setup_for(model, i, x0, seed=seed)
    else:
        setup.check()
    proj = setup.projection
    path = sample_path(model.n, T, steps_for(T, dt), 0, seed, path_index)
    traj = integrate(model, x0, T, dt, path, scheme, eps_hit=eps_hit)
    tc = time_change(traj, model, setup)
    s, y = resample(traj, tc, dt)
    p = proj.value(y)
    lp, a = proj.coefficients(model, y)
    ap = setup.a_plus(p)
    with np.errstate(divide="ignore", invalid="ignore"):
        b = lp / a
    rec = reconstruct_noise(p, ap, b, dt)
    z = dominate(setup, rec.increments, dt)
    tol = C_tol * np.sqrt(dt)
    margin = p - z if proj.direction == BELOW else z - p
    violations = int(np.sum(margin < -tol))
    gap = None
    if proj.direction == BELOW:
        gap = float(np.max(np.abs(z - dominate_z_form(setup, rec.increments, dt))))
    if s.size < 2:
        verdict = INCONCLUSIVE
    else:
        verdict = ORDERED if violations == 0 else VIOLATED
    return CouplingReport(proj.i, proj.direction, s, p, rec.increments, z, float(margin.min()), violations,
                          float(tol), dt, seed, verdict, rec.qv, rec.elapsed, float(tc.phi[-1]), tc.ratio_max,
                          tc.stopped_early, gap, x0.tolist(), T)


# ---------------------------------------------------------------------------
# one-dimensional shared-noise comparison kernel


@dataclass
class KernelReport:
    name: str
    paths: int
    points: int
    violations: int
    min_gap: float
    tol: float
    dt: float

    @property
    def violation_fraction(self) -> float:
        return self.violations / self.points if self.points else 0.0

    def to_report(self) -> dict:
        return {"name": self.name, "paths": self.paths, "points": self.points, "violations": self.violations,
                "violation_fraction": self.violation_fraction, "min_gap": self.min_gap, "tol": self.tol,
                "dt": self.dt}


def compare_1d(beta1: Callable, beta2: Callable, s: Callable, u0: float, v0: float, T: float, dt: float,
               seed: int = 0, paths: int = 64, C_tol: float = DEFAULT_C_TOL, name: str = "case") -> KernelReport:
    """Euler for ``dU = beta1 dt + s dW`` and ``dV = beta2 dt + s dW`` on the same increments.

    Counts grid points with ``U < V - tol``, ``tol = C_tol sqrt(dt)``.
    """
    nsteps = steps_for(T, dt)
    noise = NoiseStream(seed, range(paths), 1, dt)
    u = np.full(paths, float(u0))
    v = np.full(paths, float(v0))
    tol = C_tol * np.sqrt(dt)
    violations = 0
    min_gap = float(np.min(u - v))
    done = 0
    while done < nsteps:
        count = min(1024, nsteps - done)
        dW = noise.next(count)[:, :, 0]
        for j in range(count):
            w = dW[:, j]
            u, v = u + beta1(u) * dt + s(u) * w, v + beta2(v) * dt + s(v) * w
            gap = u - v
            violations += int(np.sum(gap < -tol))
            min_gap = min(min_gap, float(gap.min()))
        done += count
    return KernelReport(name, paths, paths * (nsteps + 1), violations, min_gap, float(tol), dt)


def _sqrt_abs(x):
    return np.sqrt(np.abs(x))


KERNEL_CORPUS = [
    # name, beta1, beta2, s, u0, v0; beta1 >= beta2 + eta with eta > 0, Lipschitz drifts,
    # diffusions Lipschitz or Hoelder-1/2
    ("additive", lambda x: 1.0 + 0 * x, lambda x: 0.5 + 0 * x, lambda x: 1.0 + 0 * x, 0.0, 0.0),
    ("ou_shift", lambda x: 1.0 - x, lambda x: -x, lambda x: 1.0 + 0 * x, 0.0, 0.0),
    ("cir", lambda x: 2.0 - x, lambda x: 1.0 - x, _sqrt_abs, 1.0, 1.0),
    ("bessel_sq", lambda x: 1.5 + 0 * x, lambda x: 1.0 + 0 * x, lambda x: 2.0 * _sqrt_abs(x), 1.0, 1.0),
    ("wright_fisher", lambda x: 0.2 - x, lambda x: -0.2 - x, lambda x: np.sqrt(np.maximum(1.0 - x * x, 0.0)),
     0.0, 0.0),
    ("shifted_root", lambda x: 1.0 - x, lambda x: 0.5 - x, lambda x: _sqrt_abs(x) + 0.1, 0.5, 0.5),
    ("geometric", lambda x: 0.1 * x + 0.2, lambda x: 0.1 * x, lambda x: 0.5 * x, 1.0, 1.0),
    ("tanh", lambda x: 1.0 - np.tanh(x), lambda x: -np.tanh(x), lambda x: 1.0 + 0 * x, 0.0, 0.0),
    ("separated_start", lambda x: 0.1 - 2.0 * x, lambda x: -2.0 * x, _sqrt_abs, 1.5, 1.0),
    ("cos_drift", lambda x: 0.3 + np.cos(x), lambda x: np.cos(x), lambda x: 0.5 * _sqrt_abs(x) + 0.2, 0.2, 0.2),
]


def run_kernel_corpus(T: float = 1.0, dt: float = 1e-3, seed: int = 0, paths: int = 64,
                      C_tol: float = DEFAULT_C_TOL) -> list[KernelReport]:
    return [compare_1d(b1, b2, s, u0, v0, T, dt, seed, paths, C_tol, name)
            for name, b1, b2, s, u0, v0 in KERNEL_CORPUS]
