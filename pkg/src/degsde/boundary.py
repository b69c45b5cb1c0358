"""Scale functions and boundary classification for one-dimensional diffusions.

For ``dZ = b(Z) dt + s(Z) dW`` on an interval ``(l, r)`` the scale density is

    s'(y) = exp(-2 int_{y0}^{y} b(u) / s(u)^2 du),

and an endpoint is unattainable when the scale integral diverges there.
:func:`classify` integrates the density over decade shells approaching the
endpoint and reads divergence or convergence off the shell increments.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from . import coeff_expr
from .errors import QuadratureFailure

UNATTAINABLE, ATTAINABLE, INCONCLUSIVE = "unattainable", "attainable", "inconclusive"

SHELLS = 6                # shells at distances 10^-2 ... 10^-7 (relative to the interval width)
DIVERGE_RATIO = 0.9       # shell increments that stop shrinking
CONVERGE_RATIO = 0.8      # shell increments that shrink geometrically
EXPONENT_LIMIT = 0.95     # local power-law exponent below this is integrable
_QUAD = dict(epsabs=0.0, epsrel=1e-11, limit=200)


@dataclass(frozen=True)
class Diffusion1D:
    """A one-dimensional diffusion given by its drift and squared diffusion."""

    drift: Callable[[float], float]
    diff_sq: Callable[[float], float]
    interval: tuple
    y0: float | None = None
    name: str = "diffusion"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        l, r = (float(v) for v in self.interval)
        if not l < r:
            raise ValueError("interval must satisfy l < r")
        object.__setattr__(self, "interval", (l, r))
        if self.y0 is None:
            object.__setattr__(self, "y0", _default_reference(l, r))
        if not l < self.y0 < r:
            raise ValueError("reference point must lie inside the interval")
        probe = _interior_samples(l, r, self.y0)
        bad = [y for y in probe if not self.diff_sq(y) > 0]
        if bad:
            raise ValueError(f"squared diffusion is not positive at y = {bad[0]:g}")

    def ratio(self, u: float) -> float:
        return self.drift(u) / self.diff_sq(u)

    def describe(self) -> dict:
        return {"name": self.name, "interval": list(self.interval), "y0": self.y0, **self.params}


def _default_reference(l: float, r: float) -> float:
    if math.isfinite(l) and math.isfinite(r):
        return 0.5 * (l + r)
    if math.isfinite(l):
        return l + 1.0
    if math.isfinite(r):
        return r - 1.0
    return 0.0


def _interior_samples(l: float, r: float, y0: float, count: int = 64) -> list:
    lo = l if math.isfinite(l) else y0 - 1e6
    hi = r if math.isfinite(r) else y0 + 1e6
    t = (np.arange(count) + 0.5) / count
    return list(lo + (hi - lo) * t)


# ---------------------------------------------------------------------------
# builders


def ball_radial_diffusion(n: int, kappa: float) -> Diffusion1D:
    """Squared-radius comparison process ``dZ = 2[n - (n + kappa) Z] dt + sqrt(8 Z (1 - Z)) dW``."""
    return Diffusion1D(lambda z: 2.0 * (n - (n + kappa) * z), lambda z: 8.0 * z * (1.0 - z), (0.0, 1.0),
                       0.5, "ball_radial", {"n": n, "kappa": kappa})


def bessel_diffusion(c: float) -> Diffusion1D:
    """``dX = c dt + 2 sqrt(X) dW`` on ``(0, inf)``; scale density ``y^(-c/2)``."""
    return Diffusion1D(lambda y: c, lambda y: 4.0 * y, (0.0, math.inf), 1.0, "bessel", {"c": c})


def wright_fisher_diffusion(p: float, q: float) -> Diffusion1D:
    """Diffusion on ``(0, 1)`` whose scale density is ``y^(-p) (1 - y)^(-q)`` up to a constant."""
    return Diffusion1D(lambda y: 0.5 * (p * (1.0 - y) - q * y), lambda y: y * (1.0 - y), (0.0, 1.0),
                       0.5, "wright_fisher", {"p": p, "q": q})


def diffusion_from_expr(drift: str, diff_sq: str, interval, y0: float | None = None,
                        name: str = "custom") -> Diffusion1D:
    """Diffusion whose coefficients are expressions in ``x1``."""
    fd = coeff_expr.compile_expr(coeff_expr.parse(drift, 1))
    fs = coeff_expr.compile_expr(coeff_expr.parse(diff_sq, 1))
    return Diffusion1D(lambda y: float(fd(np.array([y]))), lambda y: float(fs(np.array([y]))),
                       tuple(interval), y0, name, {"drift": drift, "diff_sq": diff_sq})


# ---------------------------------------------------------------------------
# integrals


def _quad(f, a, b, what):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err, info = integrate.quad(f, a, b, full_output=True, **_QUAD)[:3]
    if not math.isfinite(val) or err > 1e-7 * max(1.0, abs(val)):
        raise QuadratureFailure(f"{what}: estimate {val:g} with error {err:g}")
    return val


def _toward(d: Diffusion1D, y: float):
    """Finite endpoint that ``y`` lies on the far side of ``y0`` toward, with its direction."""
    l, r = d.interval
    if y < d.y0:
        return (l, 1.0) if math.isfinite(l) else (None, 1.0)
    return (r, -1.0) if math.isfinite(r) else (None, -1.0)


def log_scale_density(d: Diffusion1D, y: float) -> float:
    """``-2 int_{y0}^{y} drift / diff_sq``; near a finite endpoint the integral runs in log-distance."""
    l, r = d.interval
    if not l < y < r:
        raise ValueError(f"y = {y} outside the open interval")
    if y == d.y0:
        return 0.0
    e, side = _toward(d, y)
    if e is None:
        return -2.0 * _quad(d.ratio, d.y0, y, "drift integral")
    # u = e + side * exp(t); du = side * exp(t) dt
    t0, t1 = math.log(side * (d.y0 - e)), math.log(side * (y - e))
    val = _quad(lambda t: d.ratio(e + side * math.exp(t)) * side * math.exp(t), t0, t1, "drift integral")
    return -2.0 * val


def scale_density(d: Diffusion1D, y: float) -> float:
    """``exp(-2 int_{y0}^{y} drift / diff_sq du)``; equals 1 at ``y0``."""
    return math.exp(log_scale_density(d, y))


# ---------------------------------------------------------------------------
# classification


@dataclass
class BoundaryVerdict:
    endpoint: float
    side: str                       # "l" or "r"
    classification: str
    scale_integral_estimate: float | None
    diverges: bool
    evidence: list                  # per shell: distance, partial integral, increment, log density
    exponent: float | None          # local power-law exponent of the density near the endpoint
    power_law: bool
    reason: str = ""
    diffusion: dict = field(default_factory=dict)

    def to_report(self) -> dict:
        return {
            "endpoint": self.endpoint,
            "side": self.side,
            "classification": self.classification,
            "scale_integral_estimate": self.scale_integral_estimate,
            "scale_integral_infinite": self.diverges,
            "exponent": self.exponent,
            "power_law": self.power_law,
            "reason": self.reason,
            "evidence": self.evidence,
            "diffusion": self.diffusion,
        }


def _resolve_endpoint(d: Diffusion1D, endpoint):
    l, r = d.interval
    if endpoint in ("l", "left", "lower"):
        return l, "l"
    if endpoint in ("r", "right", "upper"):
        return r, "r"
    e = float(endpoint)
    if e == l:
        return l, "l"
    if e == r:
        return r, "r"
    raise ValueError(f"{endpoint!r} is not an endpoint of {d.interval}")


def _shell_points(d: Diffusion1D, e: float, side: str):
    """Points approaching ``e`` by decades, starting from ``y0``."""
    l, r = d.interval
    if math.isfinite(e):
        width = (r - l) if math.isfinite(r - l) else 1.0
        sign = 1.0 if side == "l" else -1.0
        dist = width * 10.0 ** (-2.0 - np.arange(SHELLS))
        dist = dist[dist < abs(d.y0 - e)]
        return [e + sign * x for x in dist], list(dist)
    sign = -1.0 if side == "l" else 1.0
    dist = 10.0 ** (2.0 + np.arange(SHELLS))
    return [d.y0 + sign * x for x in dist], [1.0 / x for x in dist]


def _shell_integral(d: Diffusion1D, e: float, side: str, a: float, b: float, log_sa: float):
    """``(int_a^b s'(y) dy in the direction of e, log s'(b))`` given ``log s'(a)``.

    The inner drift integral is accumulated from ``a`` so the density is
    carried in log form and never overflows before the final sum.
    """
    if math.isfinite(e):
        sign = 1.0 if side == "l" else -1.0

        def to_y(t):
            return e + sign * math.exp(t)

        ta, tb = math.log(abs(a - e)), math.log(abs(b - e))

        def log_s(t):
            if t == ta:
                return log_sa
            inner = _quad(lambda v: d.ratio(to_y(v)) * sign * math.exp(v), ta, t, "drift integral")
            return log_sa - 2.0 * inner

        def integrand(t):
            return math.exp(log_s(t) + t)

        val = _quad(integrand, tb, ta, "scale integral")
        return val, log_s(tb)

    def log_s_y(y):
        return log_sa - 2.0 * _quad(d.ratio, a, y, "drift integral")

    val = _quad(lambda y: math.exp(log_s_y(y)), min(a, b), max(a, b), "scale integral")
    return val, log_s_y(b)


def classify(d: Diffusion1D, endpoint) -> BoundaryVerdict:
    """Classify ``endpoint`` as unattainable, attainable or inconclusive.

    The scale integral is accumulated over shells at distances ``10^(-2-j)``
    (relative to the interval width), ``j = 0..5``.  Unattainable: partial
    integrals strictly increase and the last three shell increments each keep
    at least ``DIVERGE_RATIO`` of the previous one (or overflow).  Attainable:
    the last three increments each shrink below ``CONVERGE_RATIO`` of the
    previous one and the local power-law exponent of the density stays below
    ``EXPONENT_LIMIT``.  Anything else is inconclusive.
    """
    e, side = _resolve_endpoint(d, endpoint)
    pts, dist = _shell_points(d, e, side)
    evidence = []
    log_s = [0.0]
    try:
        if len(pts) < 4:
            raise QuadratureFailure("reference point too close to the endpoint for decade shells")
        total, prev, lsp = 0.0, d.y0, 0.0
        for y, delta in zip(pts, dist):
            inc, lsp = _shell_integral(d, e, side, prev, y, lsp)
            total += inc
            log_s.append(lsp)
            evidence.append({"distance": float(delta), "point": float(y), "increment": inc,
                             "partial": total, "log_density": lsp})
            prev = y
    except (QuadratureFailure, OverflowError, ZeroDivisionError, ValueError) as exc:
        overflow = isinstance(exc, OverflowError)
        return BoundaryVerdict(e, side, UNATTAINABLE if overflow and evidence else INCONCLUSIVE,
                               None, overflow and bool(evidence), evidence, None, False,
                               f"integration stopped: {exc}", d.describe())

    incs = np.array([ev["increment"] for ev in evidence])
    partial = np.array([ev["partial"] for ev in evidence])
    ratios = incs[1:] / np.where(incs[:-1] > 0, incs[:-1], np.nan)
    last = ratios[-3:]
    # local exponent q in s'(y) ~ dist^-q, from consecutive decades
    ls = np.array(log_s[1:])
    q_local = np.diff(ls) / np.diff(-np.log(np.array(dist)))
    q_last = q_local[-3:]
    exponent = float(q_local[-1]) if q_local.size else None
    power_law = bool(q_last.size and np.ptp(q_last) < 0.05)

    increasing = bool(np.all(np.diff(partial) > 0))
    if increasing and np.all(last >= DIVERGE_RATIO):
        return BoundaryVerdict(e, side, UNATTAINABLE, None, True, evidence, exponent, power_law,
                               "shell increments do not shrink", d.describe())
    converging = bool(np.all(last <= CONVERGE_RATIO))
    if converging and not math.isfinite(e):
        # reaching infinity also depends on the speed measure, which is not computed
        return BoundaryVerdict(e, side, INCONCLUSIVE, float(partial[-1]), False, evidence, exponent,
                               power_law, "finite scale integral at an infinite endpoint", d.describe())
    if converging and np.all(q_last < EXPONENT_LIMIT):
        tail = incs[-1] * last[-1] / (1.0 - last[-1]) if 0 < last[-1] < 1 else 0.0
        return BoundaryVerdict(e, side, ATTAINABLE, float(partial[-1] + tail), False, evidence, exponent,
                               power_law, "shell increments shrink geometrically", d.describe())
    return BoundaryVerdict(e, side, INCONCLUSIVE, float(partial[-1]), False, evidence, exponent, power_law,
                           "shell increments neither stall nor shrink decisively", d.describe())


def exact_power_rule(exponent: float) -> str:
    """Integrability of ``dist^-exponent`` at 0: diverges iff ``exponent >= 1``."""
    return UNATTAINABLE if exponent >= 1.0 else ATTAINABLE
