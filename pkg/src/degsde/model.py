"""SDE systems ``dX = mu(X) dt + sigma(X) dW`` and the built-in models.

All coefficient callables are vectorised: a state array of shape ``(..., n)``
maps to ``(..., n)`` for the drift and ``(..., n, n)`` for the diffusion.
"""

from __future__ import annotations

import math
from typing import Callable, Mapping, Sequence

import numpy as np

from . import coeff_expr
from .errors import ConfigError, DimensionMismatch, UnknownModel

FULL_SPACE = "full-space"
POSITIVE_ORTHANT = "positive-orthant"
OPEN_UNIT_BALL = "open-unit-ball"
DOMAINS = (FULL_SPACE, POSITIVE_ORTHANT, OPEN_UNIT_BALL)

VectorField = Callable[[np.ndarray], np.ndarray]
MatrixField = Callable[[np.ndarray], np.ndarray]


class Model:
    """An autonomous SDE on one of three domains.

    Subclasses override :meth:`mu` and :meth:`sigma`.  Instances are treated
    as immutable once constructed.
    """

    def __init__(self, n: int, domain: str, name: str, params: Mapping | None = None):
        if n < 1:
            raise DimensionMismatch("state dimension must be positive")
        if domain not in DOMAINS:
            raise ConfigError(f"unknown domain {domain!r}")
        self.n = int(n)
        self.domain = domain
        self.name = name
        self.params = dict(params or {})

    def mu(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sigma(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def m(self, x: np.ndarray) -> np.ndarray:
        s = self.sigma(x)
        return s @ np.swapaxes(s, -1, -2)

    def m_diag(self, x: np.ndarray) -> np.ndarray:
        """Diagonal of ``sigma sigma^T`` without forming the full product."""
        s = self.sigma(x)
        return np.einsum("...ij,...ij->...i", s, s)

    def project(self, x: np.ndarray) -> np.ndarray:
        """Nearest point of the closed domain (positive part / radial shrink)."""
        if self.domain == POSITIVE_ORTHANT:
            return np.maximum(x, 0.0)
        if self.domain == OPEN_UNIT_BALL:
            norm = np.linalg.norm(x, axis=-1, keepdims=True)
            return x / np.maximum(norm, 1.0)
        return x

    def hit_mask(self, x: np.ndarray, eps: float) -> np.ndarray:
        """Boolean ``(..., h)``: which boundary proxies are hit at level ``eps``.

        One flag per coordinate on the orthant, a single radial flag on the
        ball, none on the full space.
        """
        if self.domain == POSITIVE_ORTHANT:
            return x <= eps
        if self.domain == OPEN_UNIT_BALL:
            return (np.linalg.norm(x, axis=-1) >= 1.0 - eps)[..., None]
        return np.zeros(x.shape[:-1] + (0,), dtype=bool)

    @property
    def n_hit_flags(self) -> int:
        return {POSITIVE_ORTHANT: self.n, OPEN_UNIT_BALL: 1}.get(self.domain, 0)

    def describe(self) -> dict:
        return {"name": self.name, "n": self.n, "domain": self.domain, **self.params}

    def __repr__(self):
        return f"{type(self).__name__}(name={self.name!r}, n={self.n}, domain={self.domain!r})"


class FieldModel(Model):
    """Model given directly by drift and diffusion callables."""

    def __init__(self, n, domain, mu: VectorField, sigma: MatrixField, name="custom", params=None):
        super().__init__(n, domain, name, params)
        self._mu = mu
        self._sigma = sigma

    def mu(self, x):
        return self._mu(np.asarray(x, dtype=float))

    def sigma(self, x):
        return self._sigma(np.asarray(x, dtype=float))


class MultiCirModel(Model):
    """Multidimensional square-root diffusion.

    ``dX_i = mu_i(X) dt + sqrt(|X_i|) sum_j sigma_ij(X) dW_j`` where
    ``sigma_base`` gives the bounded matrix ``sigma_ij``.
    """

    def __init__(self, n, mu: VectorField, sigma_base: MatrixField, name="multicir", params=None):
        super().__init__(n, POSITIVE_ORTHANT, name, params)
        self._mu = mu
        self.sigma_base = sigma_base

    def mu(self, x):
        return self._mu(np.asarray(x, dtype=float))

    def sigma(self, x):
        x = np.asarray(x, dtype=float)
        return np.sqrt(np.abs(x))[..., :, None] * self.sigma_base(x)


class PowerBetaModel(Model):
    """``dX_i = mu_i(X) dt + |X_i|^beta sum_j sigma_ij(X) dW_j`` with 1/2 <= beta <= 1."""

    def __init__(self, n, beta: float, mu: VectorField, sigma_base: MatrixField,
                 domain=FULL_SPACE, name="power_beta", params=None):
        if not 0.5 <= beta <= 1.0:
            raise ConfigError(f"beta must lie in [1/2, 1], got {beta}")
        super().__init__(n, domain, name, {"beta": beta, **(params or {})})
        self.beta = float(beta)
        self._mu = mu
        self.sigma_base = sigma_base

    def mu(self, x):
        return self._mu(np.asarray(x, dtype=float))

    def sigma(self, x):
        x = np.asarray(x, dtype=float)
        return (np.abs(x) ** self.beta)[..., :, None] * self.sigma_base(x)


class UnitBallModel(Model):
    """``dX = c (theta - X) dt + sqrt(2 (1 - |X|^2)) dW`` on the open unit ball.

    A scalar ``theta`` is applied to every component and ``|theta|`` is its
    absolute value; a vector ``theta`` uses its max-norm for ``|theta|``.
    """

    def __init__(self, n: int, c: float, theta=0.0, name="unit_ball"):
        theta_arr = np.asarray(theta, dtype=float)
        if theta_arr.ndim == 0:
            theta_vec = np.full(n, float(theta_arr))
            theta_abs = abs(float(theta_arr))
            theta_echo = float(theta_arr)
        else:
            if theta_arr.shape != (n,):
                raise DimensionMismatch(f"theta has {theta_arr.size} entries, expected {n}")
            theta_vec = theta_arr.copy()
            theta_abs = float(np.max(np.abs(theta_arr)))
            theta_echo = theta_arr.tolist()
        if c <= 0:
            raise ConfigError("c must be positive")
        self.c = float(c)
        self.theta = theta_vec
        self.theta_abs = theta_abs
        self.kappa = self.c * (1.0 - math.sqrt(n) * theta_abs)
        super().__init__(n, OPEN_UNIT_BALL, name, {"c": self.c, "theta": theta_echo, "kappa": self.kappa})

    def mu(self, x):
        return self.c * (self.theta - np.asarray(x, dtype=float))

    def sigma(self, x):
        x = np.asarray(x, dtype=float)
        # clamp absorbs one-ulp overshoot of |x| past 1
        s = np.sqrt(2.0 * np.maximum(1.0 - np.sum(x * x, axis=-1), 0.0))
        return s[..., None, None] * np.eye(self.n)


def diffusion_matrix_m(model: Model, x) -> np.ndarray:
    """``sigma(x) sigma(x)^T``, symmetric positive semidefinite."""
    return model.m(np.asarray(x, dtype=float))


# ---------------------------------------------------------------------------
# fields from expressions / constants


def expr_vector_field(sources: Sequence, n: int) -> VectorField:
    """Vector field whose component ``i`` is the expression ``sources[i]``."""
    if len(sources) != n:
        raise DimensionMismatch(f"drift has {len(sources)} components, expected {n}")
    fns = [coeff_expr.compile_expr(coeff_expr.parse(str(s), n)) for s in sources]

    def field(x):
        x = np.asarray(x, dtype=float)
        return np.stack([f(x) for f in fns], axis=-1)

    return field


def expr_matrix_field(rows: Sequence[Sequence], n: int) -> MatrixField:
    """Matrix field from an ``n x n`` nested list of expression strings."""
    if len(rows) != n or any(len(r) != n for r in rows):
        raise DimensionMismatch(f"diffusion must be {n}x{n}")
    fns = [[coeff_expr.compile_expr(coeff_expr.parse(str(s), n)) for s in row] for row in rows]
    const = _constant_matrix(rows, n)
    if const is not None:
        return lambda x: np.broadcast_to(const, np.shape(x)[:-1] + (n, n))

    def field(x):
        x = np.asarray(x, dtype=float)
        return np.stack([np.stack([f(x) for f in row], axis=-1) for row in fns], axis=-2)

    return field


def _constant_matrix(rows, n):
    out = np.empty((n, n))
    for i, row in enumerate(rows):
        for j, s in enumerate(row):
            e = coeff_expr.parse(str(s), n)
            if coeff_expr.max_var_index(e) > 0:
                return None
            out[i, j] = coeff_expr.evaluate(e, np.zeros(n))
    out.setflags(write=False)
    return out


def constant_vector_field(values) -> VectorField:
    v = np.asarray(values, dtype=float)
    return lambda x: np.broadcast_to(v, np.shape(x)[:-1] + v.shape)


def constant_matrix_field(values) -> MatrixField:
    m = np.asarray(values, dtype=float)
    return lambda x: np.broadcast_to(m, np.shape(x)[:-1] + m.shape)


# ---------------------------------------------------------------------------
# build_model

_KIND_KEYS = {
    "multicir": {"kind", "n", "mu", "sigma", "name"},
    "unit_ball": {"kind", "n", "c", "theta", "name"},
    "power_beta": {"kind", "n", "beta", "mu", "sigma", "domain", "name"},
    "bessel1d": {"kind", "c", "name"},
    "custom": {"kind", "n", "mu", "sigma", "domain", "name"},
}


def _require(spec, key, kind):
    if key not in spec:
        raise ConfigError(f"model kind {kind!r} requires key {key!r}")
    return spec[key]


def _identity_rows(n):
    return [["1" if i == j else "0" for j in range(n)] for i in range(n)]


def build_model(spec: Mapping) -> Model:
    """Construct a model from a configuration mapping.

    ``spec["kind"]`` selects ``multicir``, ``unit_ball``, ``power_beta``,
    ``bessel1d`` or ``custom``; coefficient entries are expression strings
    (numbers are accepted and converted).
    """
    kind = spec.get("kind")
    if kind not in _KIND_KEYS:
        raise UnknownModel(f"unknown model kind {kind!r}; expected one of {sorted(_KIND_KEYS)}")
    unknown = set(spec) - _KIND_KEYS[kind]
    if unknown:
        raise ConfigError(f"unknown key(s) for model {kind!r}: {sorted(unknown)}")
    name = spec.get("name", kind)

    if kind == "bessel1d":
        c = float(_require(spec, "c", kind))
        return MultiCirModel(1, constant_vector_field([c]), constant_matrix_field([[2.0]]),
                             name=name, params={"c": c})

    n = int(_require(spec, "n", kind))
    if n < 1:
        raise DimensionMismatch("n must be positive")

    if kind == "unit_ball":
        return UnitBallModel(n, float(_require(spec, "c", kind)), spec.get("theta", 0.0), name=name)

    mu_src = _as_list(_require(spec, "mu", kind))
    sigma_src = spec.get("sigma", _identity_rows(n))
    sigma_src = [_as_list(r) for r in _as_list(sigma_src)]
    mu = expr_vector_field(mu_src, n)
    sigma = expr_matrix_field(sigma_src, n)
    echo = {"mu": [str(s) for s in mu_src], "sigma": [[str(s) for s in r] for r in sigma_src]}

    if kind == "multicir":
        return MultiCirModel(n, mu, sigma, name=name, params=echo)
    if kind == "power_beta":
        return PowerBetaModel(n, float(_require(spec, "beta", kind)), mu, sigma,
                              domain=spec.get("domain", FULL_SPACE), name=name, params=echo)
    return FieldModel(n, spec.get("domain", FULL_SPACE), mu, sigma, name=name, params=echo)


def _as_list(v):
    if isinstance(v, (str, int, float)):
        return [v]
    return list(v)
