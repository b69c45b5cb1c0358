"""Yamada-Watanabe smoothing ladder for a modulus of continuity ``rho``.

For a strictly increasing ``rho`` with ``rho(0) = 0`` and a non-integrable
``rho**-2`` at the origin, the ladder consists of

* the points ``1 = s_0 > s_1 > ... > s_K`` with ``int_{s_k}^{s_{k-1}} rho^-2 = k``,
* bumps ``psi_k`` supported in ``(s_k, s_{k-1})`` with unit mass and
  ``0 <= psi_k <= 2 / (k rho^2)``,
* ``phi_k(t) = int_0^|t| int_0^s psi_k``, a C^2 approximation of ``|t|``
  from below.

The bump is ``psi_k = h_k * 2 / (k rho^2)`` with ``h_k`` a trapezoid of height
one whose linear ramps have a common width chosen by bisection so the mass
is exactly one.  Inner integrals ``Psi_k = int psi_k`` are cached on a
geometric grid; ``phi_k`` integrates the cubic Hermite interpolant of
``Psi_k`` (values ``Psi_k``, slopes ``psi_k``) exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import CalibrationFailure, DivergenceProbeFailed, QuadratureFailure

__all__ = [
    "Modulus", "ModulusLadder", "sqrt_modulus", "linear_modulus", "holder_modulus",
    "adaptive_simpson", "inverse_square_integral", "divergence_probe",
    "build_sk", "build_psi", "build_ladder", "phi_k", "phi_bar_k",
]

UNDERFLOW_FLOOR = 1e-300

# 8-point Gauss-Legendre on [0, 1]
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


@dataclass(frozen=True)
class Modulus:
    """A modulus ``rho``; ``rho`` must accept numpy arrays.

    ``inverse_integral`` is an optional antiderivative ``F`` of ``rho**-2``
    (so the integral over ``[a, b]`` is ``F(b) - F(a)``).
    """

    rho: Callable[[np.ndarray], np.ndarray]
    epsilon: float = 1.0
    inverse_integral: Optional[Callable[[float], float]] = None
    name: str = "rho"


def sqrt_modulus(epsilon: float = 1.0) -> Modulus:
    return Modulus(np.sqrt, epsilon, lambda u: math.log(u), "sqrt")


def linear_modulus(epsilon: float = 1.0) -> Modulus:
    return Modulus(lambda u: np.asarray(u, dtype=float) * 1.0, epsilon, lambda u: -1.0 / u, "linear")


def holder_modulus(alpha: float, epsilon: float = 1.0) -> Modulus:
    """``rho(u) = u**alpha``; the ladder exists only for ``alpha >= 1/2``."""
    if alpha == 0.5:
        return sqrt_modulus(epsilon)
    p = 1.0 - 2.0 * alpha
    return Modulus(lambda u: np.asarray(u, dtype=float) ** alpha, epsilon,
                   lambda u: u ** p / p, f"holder{alpha:g}")


# ---------------------------------------------------------------------------
# quadrature


def adaptive_simpson(f: Callable[[float], float], a: float, b: float,
                     tol: float = 1e-10, rtol: float = 1e-14, max_depth: int = 60,
                     max_panels: int = 200_000) -> float:
    """Adaptive Simpson quadrature with absolute tolerance ``tol``.

    Iterative; each accepted panel satisfies the Richardson error estimate
    ``|S2 - S1| <= 15 max(tol_panel, rtol |S2|)``.  The relative floor only
    matters for large integrals where ``tol`` is below double precision.
    """
    if a == b:
        return 0.0
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) * (fa + 4.0 * fm + fb) / 6.0
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    total = 0.0
    panels = 0
    while stack:
        lo, hi, flo, fmid, fhi, s, eps, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flm, frm = f(lm), f(rm)
        left = (mid - lo) * (flo + 4.0 * flm + fmid) / 6.0
        right = (hi - mid) * (fmid + 4.0 * frm + fhi) / 6.0
        delta = left + right - s
        panels += 1
        limit = 15.0 * max(eps, rtol * abs(left + right))
        if abs(delta) <= limit or depth >= max_depth:
            if depth >= max_depth and abs(delta) > limit:
                raise QuadratureFailure(f"tolerance {tol:g} unreachable on [{lo:g}, {hi:g}]")
            total += left + right + delta / 15.0
            continue
        if panels > max_panels:
            raise QuadratureFailure("panel budget exhausted")
        stack.append((lo, mid, flo, flm, fmid, left, 0.5 * eps, depth + 1))
        stack.append((mid, hi, fmid, frm, fhi, right, 0.5 * eps, depth + 1))
    if not math.isfinite(total):
        raise QuadratureFailure("non-finite integral")
    return total


def inverse_square_integral(modulus: Modulus, a: float, b: float, tol: float = 1e-10,
                            use_closed_form: bool = True) -> float:
    """``int_a^b rho(u)^-2 du`` for ``0 < a <= b``.

    Quadrature runs in ``v = log u`` where power-law moduli are smooth.
    """
    if use_closed_form and modulus.inverse_integral is not None:
        return modulus.inverse_integral(b) - modulus.inverse_integral(a)
    rho = modulus.rho

    def g(v):
        u = math.exp(v)
        r = float(rho(u))
        return u / (r * r)

    return adaptive_simpson(g, math.log(a), math.log(b), tol)


def divergence_probe(modulus: Modulus, t: float = 1.0) -> list[float]:
    """Partial integrals ``int_delta^t rho^-2`` for ``delta = 1e-2 .. 1e-8``.

    Raises :class:`DivergenceProbeFailed` unless they grow monotonically with
    increments that do not decay geometrically (i.e. no sign of a finite limit).
    """
    deltas = [10.0 ** (-j) for j in range(2, 9)]
    vals = [inverse_square_integral(modulus, d, t, use_closed_form=False) for d in deltas]
    incs = np.diff(vals)
    if np.any(incs <= 0):
        raise DivergenceProbeFailed(f"{modulus.name}: partial integrals not increasing: {vals}")
    ratios = incs[1:] / incs[:-1]
    if np.any(ratios[-3:] < 0.9):
        raise DivergenceProbeFailed(
            f"{modulus.name}: increments decay geometrically (ratios {ratios.tolist()}); "
            "rho**-2 looks integrable at 0"
        )
    return vals


# ---------------------------------------------------------------------------
# s_k


def _solve_lower_endpoint(modulus: Modulus, upper: float, mass: float, tol: float,
                          use_closed_form: bool) -> float:
    def excess(s):
        return inverse_square_integral(modulus, s, upper, tol, use_closed_form) - mass

    hi = upper
    lo = upper
    while True:
        lo = lo * 1e-1
        if lo < UNDERFLOW_FLOOR:
            raise DivergenceProbeFailed(
                f"s_k underflows {UNDERFLOW_FLOOR:g} before reaching mass {mass:g}"
            )
        if excess(lo) >= 0:
            break
        hi = lo
    # bisection in log s
    llo, lhi = math.log(lo), math.log(hi)
    for _ in range(200):
        lmid = 0.5 * (llo + lhi)
        if excess(math.exp(lmid)) >= 0:
            llo = lmid
        else:
            lhi = lmid
        if lhi - llo < 1e-15:
            break
    return math.exp(0.5 * (llo + lhi))


def build_sk(modulus: Modulus, K: int = 8, tol: float = 1e-10, probe: bool = True,
             use_closed_form: bool = True) -> np.ndarray:
    """The decreasing sequence ``s_0 = 1 > s_1 > ... > s_K``."""
    if K < 1:
        raise ValueError("K must be at least 1")
    if probe:
        divergence_probe(modulus)
    s = [1.0]
    for k in range(1, K + 1):
        s.append(_solve_lower_endpoint(modulus, s[-1], float(k), tol, use_closed_form))
    return np.array(s)


# ---------------------------------------------------------------------------
# psi_k


@dataclass(frozen=True)
class Bump:
    """``psi_k = h(s) * 2 / (k rho(s)^2)`` with ``h`` the trapezoid on ``(lo, hi)``."""

    k: int
    lo: float
    hi: float
    ramp: float
    rho: Callable = field(repr=False)

    def plateau(self, s):
        s = np.asarray(s, dtype=float)
        h = np.minimum((s - self.lo) / self.ramp, (self.hi - s) / self.ramp)
        return np.clip(h, 0.0, 1.0)

    def bound(self, s):
        s = np.asarray(s, dtype=float)
        with np.errstate(divide="ignore"):
            return 2.0 / (self.k * np.asarray(self.rho(s), dtype=float) ** 2)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        h = self.plateau(s)
        out = np.zeros_like(s)
        inside = h > 0
        out[inside] = h[inside] * self.bound(s[inside])
        return out


def _geometric_panels(a: float, b: float, count: int) -> np.ndarray:
    if count < 1 or b <= a:
        return np.array([a, b])
    return np.geomspace(a, b, count + 1)


def _panel_nodes(lo: float, hi: float, ramp: float, per_piece: int) -> np.ndarray:
    """Panel edges refining the three linear pieces of the trapezoid."""
    pieces = [lo, lo + ramp, hi - ramp, hi]
    edges = [np.array([lo])]
    for a, b in zip(pieces[:-1], pieces[1:]):
        if b > a:
            edges.append(_geometric_panels(a, b, per_piece)[1:])
    return np.concatenate(edges)


def _panel_integrals(f: Callable, edges: np.ndarray) -> np.ndarray:
    widths = np.diff(edges)
    nodes = edges[:-1, None] + widths[:, None] * _GL_X[None, :]
    return (f(nodes) * _GL_W[None, :]).sum(axis=1) * widths


def _bump_mass(bump: Bump, per_piece: int = 256) -> float:
    edges = _panel_nodes(bump.lo, bump.hi, bump.ramp, per_piece)
    return float(_panel_integrals(bump, edges).sum())


def build_psi(modulus: Modulus, s: np.ndarray, k: int, mass_tol: float = 1e-12) -> Bump:
    """Calibrate the ramp width of ``psi_k`` so that its integral is one."""
    lo, hi = float(s[k]), float(s[k - 1])
    half = 0.5 * (hi - lo)

    def mass(w):
        return _bump_mass(Bump(k, lo, hi, w, modulus.rho))

    w_lo, w_hi = half * 1e-12, half
    m_lo, m_hi = mass(w_lo), mass(w_hi)
    if not (m_hi <= 1.0 <= m_lo):
        raise CalibrationFailure(
            f"psi_{k}: mass over ramp widths spans [{m_hi:.6g}, {m_lo:.6g}], cannot reach 1"
        )
    for _ in range(200):
        w = 0.5 * (w_lo + w_hi)
        m = mass(w)
        if abs(m - 1.0) <= mass_tol:
            break
        if m > 1.0:
            w_lo = w
        else:
            w_hi = w
    else:
        raise CalibrationFailure(f"psi_{k}: bisection did not reach mass tolerance {mass_tol:g}")
    return Bump(k, lo, hi, w, modulus.rho)


# ---------------------------------------------------------------------------
# ladder


@dataclass(frozen=True)
class Rung:
    """Cached ``Psi_k`` and ``Phi_k = int Psi_k`` on a geometric grid over the support."""

    bump: Bump
    grid: np.ndarray
    psi: np.ndarray   # psi_k at grid
    Psi: np.ndarray   # int_{s_k}^{grid} psi_k
    Phi: np.ndarray   # int_{s_k}^{grid} Psi_k

    @property
    def lo(self):
        return self.bump.lo

    @property
    def hi(self):
        return self.bump.hi


def _build_rung(bump: Bump, grid_points: int) -> Rung:
    per_piece = max(grid_points // 3, 8)
    grid = _panel_nodes(bump.lo, bump.hi, bump.ramp, per_piece)
    psi = bump(grid)
    Psi = np.concatenate([[0.0], np.cumsum(_panel_integrals(bump, grid))])
    h = np.diff(grid)
    # Hermite-corrected trapezoid: exact for the cubic interpolant of Psi
    panel = 0.5 * h * (Psi[:-1] + Psi[1:]) + h * h / 12.0 * (psi[:-1] - psi[1:])
    Phi = np.concatenate([[0.0], np.cumsum(panel)])
    return Rung(bump, grid, psi, Psi, Phi)


class ModulusLadder:
    """``s_k``, ``psi_k`` and cached integrals for ``k = 1..K``."""

    def __init__(self, modulus: Modulus, s: np.ndarray, rungs: list[Rung]):
        self.modulus = modulus
        self.s = s
        self.rungs = rungs
        self.K = len(rungs)

    def _rung(self, k: int) -> Rung:
        if not 1 <= k <= self.K:
            raise IndexError(f"k must lie in 1..{self.K}")
        return self.rungs[k - 1]

    def psi(self, k: int, s) -> np.ndarray:
        return self._rung(k).bump(s)

    def Psi(self, k: int, s) -> np.ndarray:
        """``int_0^s psi_k`` for ``s >= 0`` via cubic Hermite interpolation."""
        r = self._rung(k)
        s = np.asarray(s, dtype=float)
        out = np.where(s >= r.hi, 1.0, 0.0)
        inside = (s > r.lo) & (s < r.hi)
        if np.any(inside):
            j, tau, h = _locate(r.grid, s[inside])
            t2, t3 = tau * tau, tau * tau * tau
            out[inside] = ((2 * t3 - 3 * t2 + 1) * r.Psi[j] + (t3 - 2 * t2 + tau) * h * r.psi[j]
                           + (-2 * t3 + 3 * t2) * r.Psi[j + 1] + (t3 - t2) * h * r.psi[j + 1])
        return out

    def phi(self, k: int, t) -> np.ndarray:
        r = self._rung(k)
        u = np.abs(np.asarray(t, dtype=float))
        out = np.zeros_like(u)
        above = u >= r.hi
        out[above] = r.Phi[-1] + (u[above] - r.hi)
        inside = (u > r.lo) & ~above
        if np.any(inside):
            j, tau, h = _locate(r.grid, u[inside])
            t2, t3, t4 = tau ** 2, tau ** 3, tau ** 4
            out[inside] = r.Phi[j] + h * (
                (t4 / 2 - t3 + tau) * r.Psi[j] + (t4 / 4 - 2 * t3 / 3 + t2 / 2) * h * r.psi[j]
                + (-t4 / 2 + t3) * r.Psi[j + 1] + (t4 / 4 - t3 / 3) * h * r.psi[j + 1]
            )
        return out

    def dphi(self, k: int, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.sign(t) * self.Psi(k, np.abs(t))

    def phi_bar(self, k: int, x) -> np.ndarray:
        return self.phi(k, x).sum(axis=-1)


def _locate(grid, u):
    j = np.clip(np.searchsorted(grid, u, side="right") - 1, 0, len(grid) - 2)
    h = grid[j + 1] - grid[j]
    return j, (u - grid[j]) / h, h


def build_ladder(modulus: Modulus, K: int = 8, grid_points: int = 4096, tol: float = 1e-10,
                 use_closed_form: bool = True) -> ModulusLadder:
    s = build_sk(modulus, K, tol, use_closed_form=use_closed_form)
    rungs = [_build_rung(build_psi(modulus, s, k), grid_points) for k in range(1, K + 1)]
    return ModulusLadder(modulus, s, rungs)


def phi_k(ladder: ModulusLadder, k: int, t):
    """``phi_k(t) = int_0^|t| int_0^s psi_k``; scalar in, float out."""
    out = ladder.phi(k, t)
    return float(out) if np.ndim(out) == 0 else out


def phi_bar_k(ladder: ModulusLadder, k: int, x):
    """``sum_i phi_k(x_i)``."""
    out = ladder.phi_bar(k, np.asarray(x, dtype=float))
    return float(out) if np.ndim(out) == 0 else out
