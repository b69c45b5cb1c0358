"""Sampled audits of the positivity and uniqueness hypotheses.

Coordinates are 1-based throughout (``i = 1`` is ``x1``) to match the
expression language.  Every check is a deterministic sampled audit: point
sets are scrambled Halton sequences keyed by ``(seed, purpose, i, r)``, so a
report is reproducible and adding samples only extends the point set.

For the orthant, with ``p_i(x) = x_i``, ``a_i = m_ii`` and ``b_i = mu_i / a_i``,
the radial envelopes are

    a_i^+(r) = sup { a_i(x) : x_i = r },    b_i^-(r) = inf { b_i(x) : x_i = r },

with the slice truncated to the box ``[0, R]^n``.  On the ball the projection
is ``p(x) = |x|^2`` and the slice is the sphere of radius ``sqrt(r)``.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from . import coeff_expr
from .errors import DegenerateSlice, MissingSigmaTilde
from .model import FULL_SPACE, OPEN_UNIT_BALL, POSITIVE_ORTHANT, Model
from .modulus import Modulus

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"

DEFAULT_R = 10.0
DEFAULT_DELTA = 0.1
MAX_CORNERS = 64
MAX_WITNESSES = 5

_PURPOSE = {"slice": 1, "band": 2, "pairs": 3, "sphere": 4, "growth": 5}


# ---------------------------------------------------------------------------
# reports


@dataclass
class ConditionReport:
    """Outcome of one sampled audit.

    ``margin`` is the worst slack observed (negative means violated) and
    ``witnesses`` lists the states where it was attained, each as a mapping
    with at least ``x`` and ``slack``.
    """

    assumption: str
    verdict: str
    margin: float | None
    witnesses: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    parts: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    def to_report(self) -> dict:
        out = {
            "assumption": self.assumption,
            "verdict": self.verdict,
            "margin": self.margin,
            "witnesses": self.witnesses,
            "config": self.config,
        }
        if self.details:
            out["details"] = self.details
        if self.parts:
            out["parts"] = {k: v.to_report() for k, v in self.parts.items()}
        return out


def _aggregate(assumption: str, parts: Mapping[str, ConditionReport], config: dict) -> ConditionReport:
    verdicts = [p.verdict for p in parts.values()]
    if FAIL in verdicts:
        verdict = FAIL
    elif INCONCLUSIVE in verdicts:
        verdict = INCONCLUSIVE
    else:
        verdict = PASS
    margins = [p.margin for p in parts.values() if p.margin is not None]
    witnesses = [w for p in parts.values() if p.verdict == verdict for w in p.witnesses]
    return ConditionReport(assumption, verdict, min(margins) if margins else None,
                           witnesses[:MAX_WITNESSES], config, dict(parts))


def _witnesses(states: np.ndarray, slack: np.ndarray, extra: Callable[[int], dict] | None = None) -> list:
    """The worst ``MAX_WITNESSES`` states by slack (ascending)."""
    order = np.argsort(slack, kind="stable")[:MAX_WITNESSES]
    out = []
    for k in order:
        w = {"x": states[k].tolist(), "slack": float(slack[k])}
        if extra is not None:
            w.update(extra(int(k)))
        out.append(w)
    return out


# ---------------------------------------------------------------------------
# deterministic point sets


def _seed_sequence(seed: int, purpose: str, *parts: float) -> np.random.SeedSequence:
    words = [int(seed) & 0xFFFFFFFFFFFFFFFF, _PURPOSE[purpose]]
    for p in parts:
        words.append(int(np.float64(p).view(np.uint64)))
    return np.random.SeedSequence(words)


def _halton(d: int, count: int, ss: np.random.SeedSequence) -> np.ndarray:
    """First ``count`` points of a scrambled Halton sequence in ``[0, 1)^d``.

    The scrambling depends only on ``ss``, so a longer request extends a
    shorter one.
    """
    if d == 0 or count == 0:
        return np.zeros((count, d))
    engine = qmc.Halton(d=d, scramble=True, seed=np.random.default_rng(ss))
    return engine.random(count)


def _unit_directions(n: int, count: int, ss: np.random.SeedSequence) -> np.ndarray:
    g = ndtri(np.clip(_halton(n, count, ss), 1e-12, 1 - 1e-12))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def slice_points(n: int, i: int, r: float, R: float, samples: int, seed: int = 0) -> np.ndarray:
    """States with ``x_i = r`` and the other coordinates in ``[0, R]``.

    The box corners come first (when there are at most ``MAX_CORNERS``),
    followed by ``samples`` Halton points.  For ``n = 1`` the slice is the
    single point ``(r,)``.
    """
    if n == 1:
        return np.array([[float(r)]])
    others = []
    if 2 ** (n - 1) <= MAX_CORNERS:
        others.append(np.array(list(itertools.product((0.0, R), repeat=n - 1))))
    others.append(R * _halton(n - 1, samples, _seed_sequence(seed, "slice", i, r)))
    rest = np.concatenate(others)
    return np.insert(rest, i - 1, float(r), axis=1)


def sphere_points(model: Model, r: float, samples: int, seed: int = 0) -> np.ndarray:
    """States with ``|x|^2 = r``: signed axes, diagonals, the drift target and Halton directions."""
    n = model.n
    eye = np.eye(n)
    dirs = [eye, -eye]
    diag = np.full((1, n), 1.0 / math.sqrt(n))
    dirs += [diag, -diag]
    theta = getattr(model, "theta", None)
    if theta is not None and np.any(theta != 0):
        t = np.asarray(theta, dtype=float)[None, :] / np.linalg.norm(theta)
        dirs += [t, -t]
    dirs.append(_unit_directions(n, samples, _seed_sequence(seed, "sphere", r)))
    return math.sqrt(r) * np.concatenate(dirs)


# ---------------------------------------------------------------------------
# envelopes


@dataclass
class RadialEnvelope:
    """Sampled ``a^+`` and ``b^-`` (and ``b^+`` on the ball) over an r-grid.

    Between grid points ``a^+(r)`` is interpolated as ``r * g(r)`` with ``g``
    piecewise linear in ``a^+/r`` and held constant outside the grid, so
    ``a^+(r) -> 0`` linearly at the boundary; ``b`` is interpolated the same
    way through ``r * b``.
    """

    i: int | str                  # coordinate (1-based) or "radial"
    r_grid: np.ndarray
    a_plus: np.ndarray
    b_minus: np.ndarray
    R: float
    samples_per_slice: int
    seed: int = 0
    b_plus: np.ndarray | None = None
    b_minus_witness: np.ndarray | None = field(default=None, repr=False)

    def a_plus_at(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return r * np.interp(r, self.r_grid, self.a_plus / self.r_grid)

    def b_minus_at(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return np.interp(r, self.r_grid, self.b_minus * self.r_grid) / r

    def b1(self, r) -> np.ndarray:
        """``a^+(r) b^-(r)``: lower bound of the projected drift."""
        return self.a_plus_at(r) * self.b_minus_at(r)

    def b2(self, r) -> np.ndarray:
        """``a^+(r) / r``: drift of the dominating process."""
        return self.a_plus_at(r) / np.asarray(r, dtype=float)

    def to_report(self) -> dict:
        out = {
            "i": self.i,
            "R": self.R,
            "samples_per_slice": self.samples_per_slice,
            "seed": self.seed,
            "r_grid": self.r_grid.tolist(),
            "a_plus": self.a_plus.tolist(),
            "b_minus": self.b_minus.tolist(),
        }
        if self.b_plus is not None:
            out["b_plus"] = self.b_plus.tolist()
        return out


def _slice_extremes(model: Model, i: int, r: float, R: float, samples: int, seed: int):
    pts = slice_points(model.n, i, r, R, samples, seed)
    a = model.m_diag(pts)[:, i - 1]
    zero = ~(a > 0)
    if zero.any():
        k = int(np.argmax(zero))
        raise DegenerateSlice(f"a_{i} vanishes on the slice x{i} = {r:g}", pts[k].tolist())
    b = model.mu(pts)[:, i - 1] / a
    k = int(np.argmin(b))
    return float(a.max()), float(b[k]), pts[k]


def envelope(model: Model, i: int, r_grid, R: float = DEFAULT_R, samples: int = 256,
             seed: int = 0, threads: int = 1) -> RadialEnvelope:
    """Sampled envelopes ``a_i^+`` and ``b_i^-`` of an orthant model.

    Raises :class:`DegenerateSlice` when ``a_i = 0`` at a sample, since
    ``b_i`` is then undefined.
    """
    if model.domain != POSITIVE_ORTHANT:
        raise ValueError("coordinate envelopes need a positive-orthant model")
    if not 1 <= i <= model.n:
        raise ValueError(f"coordinate {i} outside 1..{model.n}")
    r_grid = np.asarray(r_grid, dtype=float)
    if r_grid.ndim != 1 or r_grid.size == 0 or np.any(r_grid <= 0) or np.any(r_grid > R):
        raise ValueError("r_grid must be a non-empty list inside (0, R]")
    if np.any(np.diff(r_grid) <= 0):
        raise ValueError("r_grid must be increasing")

    def one(r):
        return _slice_extremes(model, i, float(r), R, samples, seed)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, r_grid))
    else:
        rows = [one(r) for r in r_grid]
    a_plus = np.array([row[0] for row in rows])
    if not np.all(np.isfinite(a_plus)):
        raise DegenerateSlice(f"a_{i}^+ is not finite on the grid")
    return RadialEnvelope(i, r_grid, a_plus, np.array([row[1] for row in rows]), float(R), samples,
                          seed, b_minus_witness=np.array([row[2] for row in rows]))


def ball_projection_coefficients(model: Model, x: np.ndarray):
    """Drift ``Lp`` and squared diffusion ``a`` of ``p(x) = |x|^2``.

    ``Lp = 2 x.mu + tr m`` and ``a = 4 x^T m x`` by Ito's formula.
    """
    x = np.asarray(x, dtype=float)
    m = model.m(x)
    lp = 2.0 * np.einsum("...i,...i->...", x, model.mu(x)) + np.trace(m, axis1=-2, axis2=-1)
    a = 4.0 * np.einsum("...i,...ij,...j->...", x, m, x)
    return lp, a


def ball_envelope(model: Model, r_grid, samples: int = 256, seed: int = 0) -> RadialEnvelope:
    """Sampled ``a^+``, ``b^-`` and ``b^+`` of ``p(x) = |x|^2`` on a unit-ball model."""
    if model.domain != OPEN_UNIT_BALL:
        raise ValueError("ball envelopes need an open-unit-ball model")
    r_grid = np.asarray(r_grid, dtype=float)
    if np.any(r_grid <= 0) or np.any(r_grid >= 1) or np.any(np.diff(r_grid) <= 0):
        raise ValueError("r_grid must be increasing inside (0, 1)")
    a_plus, b_minus, b_plus, wit = [], [], [], []
    for r in r_grid:
        pts = sphere_points(model, float(r), samples, seed)
        lp, a = ball_projection_coefficients(model, pts)
        if np.any(a <= 0):
            raise DegenerateSlice(f"a vanishes on the sphere |x|^2 = {r:g}", pts[int(np.argmin(a))].tolist())
        b = lp / a
        a_plus.append(a.max())
        b_minus.append(b.min())
        b_plus.append(b.max())
        wit.append(pts[int(np.argmax(b))])
    return RadialEnvelope("radial", r_grid, np.array(a_plus), np.array(b_minus), 1.0, samples, seed,
                          b_plus=np.array(b_plus), b_minus_witness=np.array(wit))


def default_r_grid(R: float = DEFAULT_R, lo: float = 1e-3, count: int = 61) -> np.ndarray:
    return np.geomspace(lo, R, count)


# ---------------------------------------------------------------------------
# (A3): boundary drift, envelope ratio, diffusion bound


def band_points(n: int, R: float, delta: float, samples: int, seed: int = 0) -> np.ndarray:
    """States in ``[0, R]^n`` with at least one coordinate in ``[0, delta)``.

    Point ``k`` pushes coordinate ``k mod n`` into the band, so every
    coordinate gets an equal share.
    """
    u = _halton(n + 1, samples, _seed_sequence(seed, "band", n, R, delta))
    pts = R * u[:, :n]
    rows = np.arange(samples)
    pts[rows, rows % n] = delta * u[:, n]
    return pts


def _check_boundary_drift(model, band) -> ConditionReport:
    mu = model.mu(band)
    slack = mu.min(axis=1)
    which = mu.argmin(axis=1)
    verdict = PASS if np.all(slack > 0) else FAIL
    return ConditionReport("A3(i)", verdict, float(slack.min()),
                           _witnesses(band, slack, lambda k: {"i": int(which[k]) + 1}))


def _check_envelope_ratio(envelopes: Sequence[RadialEnvelope]) -> ConditionReport:
    slacks, states, extra = [], [], []
    for env in envelopes:
        s = env.r_grid * env.b_minus - 1.0
        slacks.append(s)
        w = env.b_minus_witness
        states.append(w if w is not None else np.full((s.size, 1), np.nan))
        extra += [{"i": env.i, "r": float(r)} for r in env.r_grid]
    slack = np.concatenate(slacks)
    pts = np.concatenate([np.atleast_2d(s) for s in states])
    verdict = PASS if np.all(slack > 0) else FAIL
    return ConditionReport("A3(ii)", verdict, float(slack.min()),
                           _witnesses(pts, slack, lambda k: extra[k]))


def _check_diffusion_bound(model, band, sigma_tilde) -> ConditionReport:
    n = model.n
    e = coeff_expr.parse(sigma_tilde, 1) if isinstance(sigma_tilde, str) else sigma_tilde
    f = coeff_expr.compile_expr(e)
    m = model.m_diag(band)
    bound = n ** 3 * f(band[..., :, None]) ** 2      # sigma_tilde evaluated at each x_i
    slack_all = bound - m
    slack = slack_all.min(axis=1)
    which = slack_all.argmin(axis=1)
    # non-strict inequality: allow rounding in n^3 * sigma_tilde^2
    floor = -1e-12 * np.maximum(np.abs(bound).max(axis=1), 1.0)
    verdict = PASS if np.all(slack >= floor) else FAIL
    return ConditionReport("A3(iii)", verdict, float(slack.min()),
                           _witnesses(band, slack, lambda k: {"i": int(which[k]) + 1}))


def check_A3(model: Model, envelopes: Sequence[RadialEnvelope], delta: float = DEFAULT_DELTA,
             R: float | None = None, sigma_tilde=None, parts: Sequence[str] | None = None,
             samples: int = 1024, seed: int = 0) -> ConditionReport:
    """Audit the three positivity hypotheses of an orthant model.

    (i) ``mu_i > 0`` on the band ``{min_j x_j < delta}``; (ii)
    ``r b_i^-(r) > 1`` on every envelope grid; (iii) ``m_ii(x) <= n^3
    sigma_tilde(x_i)^2`` on the band, with ``sigma_tilde`` an expression in
    ``x1``.  ``parts`` defaults to all three when ``sigma_tilde`` is given and
    to (i), (ii) otherwise.
    """
    if parts is None:
        parts = ("i", "ii", "iii") if sigma_tilde is not None else ("i", "ii")
    parts = tuple(parts)
    unknown = set(parts) - {"i", "ii", "iii"}
    if unknown:
        raise ValueError(f"unknown A3 part(s) {sorted(unknown)}")
    if "iii" in parts and sigma_tilde is None:
        raise MissingSigmaTilde("part (iii) requires sigma_tilde")
    if R is None:
        R = max((env.R for env in envelopes), default=DEFAULT_R)
    band = band_points(model.n, R, delta, samples, seed)
    out = {}
    if "i" in parts:
        out["i"] = _check_boundary_drift(model, band)
    if "ii" in parts:
        out["ii"] = _check_envelope_ratio(envelopes)
    if "iii" in parts:
        src = sigma_tilde if isinstance(sigma_tilde, str) else coeff_expr.to_source(sigma_tilde)
        out["iii"] = _check_diffusion_bound(model, band, sigma_tilde)
    config = {"model": model.describe(), "delta": delta, "R": R, "samples": samples, "seed": seed,
              "parts": list(parts)}
    if "iii" in parts:
        config["sigma_tilde"] = src
    return _aggregate("A3", out, config)


# ---------------------------------------------------------------------------
# (A1)(ii): modulus of continuity of sigma


def _modulus_pairs(model: Model, R: float, eps: float, count: int, seed: int):
    rng = np.random.Generator(np.random.Philox(_seed_sequence(seed, "pairs", count)))
    n = model.n
    # separations log-uniform on [eps / count^2, eps]: larger samples probe closer pairs
    d = eps * np.exp(-2.0 * math.log(count) * rng.random(count))
    coord = np.arange(count) % n
    g = rng.standard_normal((count, n))
    x = R * rng.random((count, 1)) ** (1.0 / n) * g / np.linalg.norm(g, axis=1, keepdims=True)
    v = rng.standard_normal((count, n))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    y = x + d[:, None] * v
    # half of the pairs straddle the face x_i = 0 at distance d
    near = np.arange(count) % 2 == 1
    rows = np.nonzero(near)[0]
    x[rows, coord[rows]] = d[rows] * rng.random(rows.size)
    y[rows] = x[rows]
    y[rows, coord[rows]] = x[rows, coord[rows]] + d[rows]
    if model.domain == POSITIVE_ORTHANT:
        x, y = np.abs(x), np.abs(y)
    elif model.domain == OPEN_UNIT_BALL:
        x, y = model.project(x), model.project(y)
    return x, y


def _modulus_constant(model: Model, modulus: Modulus, x: np.ndarray, y: np.ndarray):
    diff = np.abs(model.sigma(x) - model.sigma(y))            # (P, n, n)
    denom = np.asarray(modulus.rho(np.abs(x - y)), dtype=float)  # (P, n), row i uses x_i - y_i
    ok = denom > 0
    if not ok.any():
        return None, None
    ratio = np.where(ok[:, :, None], diff / np.where(ok, denom, 1.0)[:, :, None], 0.0)
    per_pair = ratio.max(axis=(1, 2))
    k = int(np.argmax(per_pair))
    return float(per_pair[k]), k


def check_A1_modulus(model: Model, modulus: Modulus, R: float = DEFAULT_R, pairs: int = 2000,
                     seed: int = 0, eps: float | None = None, growth_limit: float = 2.0) -> ConditionReport:
    """Estimate ``C_R`` in ``|sigma_ij(x) - sigma_ij(y)| <= C_R rho(|x_i - y_i|)``.

    The estimate is the largest sampled ratio.  It is computed for ``pairs``
    and for ``10 * pairs`` samples, the larger set reaching closer pairs; the
    check passes when the two estimates differ by less than ``growth_limit``.
    """
    eps = modulus.epsilon if eps is None else eps
    ests, wits = [], []
    for count in (pairs, 10 * pairs):
        x, y = _modulus_pairs(model, R, eps, count, seed)
        c, k = _modulus_constant(model, modulus, x, y)
        ests.append(c)
        wits.append(None if k is None else (x[k], y[k]))
    config = {"model": model.describe(), "modulus": modulus.name, "R": R, "eps": eps,
              "pairs": [pairs, 10 * pairs], "seed": seed}
    if ests[0] is None or ests[1] is None:
        return ConditionReport("A1(ii)", INCONCLUSIVE, None, [], config)
    small, large = ests
    ratio = 1.0 if large == 0 and small == 0 else (math.inf if small == 0 else large / small)
    finite = math.isfinite(large)
    verdict = PASS if finite and ratio < growth_limit else FAIL
    wx, wy = wits[1]
    witness = {"x": wx.tolist(), "y": wy.tolist(), "slack": float(growth_limit - ratio),
               "ratio": float(large)}
    return ConditionReport("A1(ii)", verdict, float(growth_limit - ratio), [witness], config,
                           details={"C_hat": ests, "growth": ratio})


# ---------------------------------------------------------------------------
# (A1)(iii): linear growth


def check_linear_growth(field_fn: Callable, n: int, R_list=(1.0, 10.0, 100.0, 1000.0),
                        domain: str = FULL_SPACE, samples: int = 256, seed: int = 0,
                        growth_limit: float = 4.0, name: str = "field") -> ConditionReport:
    """Sampled ``g(R) = max_{|x| = R} |f(x)| / (1 + R)`` across radii.

    Passes when ``g`` stays within ``growth_limit`` of its value at the first
    radius.  Matrix fields use the Frobenius norm.
    """
    R_list = [float(r) for r in R_list]
    if any(b <= a for a, b in zip(R_list, R_list[1:])):
        raise ValueError("R_list must be increasing")
    dirs = np.concatenate([np.eye(n), -np.eye(n),
                           _unit_directions(n, samples, _seed_sequence(seed, "growth", n))])
    if domain == POSITIVE_ORTHANT:
        dirs = np.abs(dirs)
    g, wit = [], []
    for R in R_list:
        x = R * dirs
        vals = np.asarray(field_fn(x), dtype=float)
        norms = np.sqrt(np.sum(vals.reshape(len(x), -1) ** 2, axis=1))
        k = int(np.argmax(norms))
        g.append(float(norms[k] / (1.0 + R)))
        wit.append(x[k])
    g0 = g[0]
    if g0 == 0:
        ratio = 1.0 if max(g) == 0 else math.inf
    else:
        ratio = max(g) / g0
    worst = int(np.argmax(g))
    verdict = PASS if ratio < growth_limit else FAIL
    config = {"field": name, "n": n, "domain": domain, "R_list": R_list, "samples": samples, "seed": seed}
    witness = {"x": wit[worst].tolist(), "slack": float(growth_limit - ratio), "R": R_list[worst]}
    return ConditionReport("A1(iii)", verdict, float(growth_limit - ratio), [witness], config,
                           details={"g": g, "growth": ratio})


# ---------------------------------------------------------------------------
# unit ball


def unit_ball_kappa(c: float, theta, n: int) -> float:
    t = np.asarray(theta, dtype=float)
    theta_abs = abs(float(t)) if t.ndim == 0 else float(np.max(np.abs(t)))
    return float(c) * (1.0 - math.sqrt(n) * theta_abs)


def check_unit_ball_condition(c: float, theta, n: int) -> ConditionReport:
    """``kappa = c (1 - sqrt(n) |theta|) >= 2``; margin ``kappa - 2``."""
    kappa = unit_ball_kappa(c, theta, n)
    margin = kappa - 2.0
    theta_echo = np.asarray(theta, dtype=float).tolist()
    config = {"c": float(c), "theta": theta_echo, "n": int(n), "kappa": kappa}
    witnesses = [] if margin >= 0 else [{"x": [float(c), theta_echo, int(n)], "slack": margin,
                                         "kappa": kappa}]
    return ConditionReport("unit_ball", PASS if margin >= 0 else FAIL, margin, witnesses, config)
