from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from degsde.errors import ConfigError, DimensionMismatch, ParseError, UnknownModel
from degsde.model import (OPEN_UNIT_BALL, POSITIVE_ORTHANT, MultiCirModel, UnitBallModel, build_model,
                          diffusion_matrix_m)

BUILTINS = [
    {"kind": "multicir", "n": 2, "mu": ["3", "3"], "sigma": [["1", "0.3"], ["x2/(1 + x2)", "1"]]},
    {"kind": "unit_ball", "n": 3, "c": 4.0, "theta": 0.1},
    {"kind": "power_beta", "n": 2, "beta": 0.75, "mu": ["1 - x1", "-x2"], "sigma": [["0.5", "0.2"], ["0.1", "1"]]},
    {"kind": "bessel1d", "c": 2.0},
]


def _domain_states(model, rng, count):
    x = rng.normal(size=(count, model.n))
    if model.domain == POSITIVE_ORTHANT:
        return np.abs(x) * 3
    if model.domain == OPEN_UNIT_BALL:
        r = rng.random((count, 1)) ** (1 / model.n)
        return r * x / np.linalg.norm(x, axis=1, keepdims=True) * (1 - 1e-12)
    return x * 3


def test_identity_sigma_gives_identity_m():
    m = build_model({"kind": "custom", "n": 3, "mu": ["0", "0", "0"]})
    assert np.array_equal(diffusion_matrix_m(m, [0.3, -2.0, 7.0]), np.eye(3))


def test_multicir_identity_m_is_diag_x():
    m = build_model({"kind": "multicir", "n": 2, "mu": ["1", "1"]})
    assert np.allclose(diffusion_matrix_m(m, [2.0, 3.0]), np.diag([2.0, 3.0]), atol=1e-15)


def test_unit_ball_m():
    m = build_model({"kind": "unit_ball", "n": 2, "c": 4.0})
    assert np.allclose(diffusion_matrix_m(m, [0.6, 0.0]), np.diag([1.28, 1.28]), atol=1e-15)


def test_unit_ball_kappa_and_bessel_coefficients():
    m = build_model({"kind": "unit_ball", "n": 2, "c": 4.0, "theta": 0.0})
    assert m.kappa == 4.0
    b = build_model({"kind": "bessel1d", "c": 2.0})
    assert b.n == 1
    assert b.mu(np.array([0.7]))[0] == 2.0
    assert b.sigma(np.array([0.25]))[0, 0] == pytest.approx(1.0)
    assert b.sigma(np.array([-0.25]))[0, 0] == pytest.approx(1.0)   # |x| as written


def test_smallest_multicir():
    m = build_model({"kind": "multicir", "n": 1, "mu": "1.0", "sigma": "1.0"})
    assert m.sigma(np.array([4.0]))[0, 0] == 2.0


def test_vector_theta_uses_max_norm():
    m = UnitBallModel(4, 8.0, [0.25, -0.1, 0.0, 0.2])
    assert m.kappa == pytest.approx(8 * (1 - 2 * 0.25))
    assert np.array_equal(m.mu(np.zeros(4)), 8 * np.array([0.25, -0.1, 0.0, 0.2]))


@pytest.mark.parametrize("spec,err", [
    ({"kind": "heston"}, UnknownModel),
    ({"kind": "multicir", "n": 2, "mu": ["1"]}, DimensionMismatch),
    ({"kind": "multicir", "n": 2, "mu": ["1", "1"], "sigma": [["1"]]}, DimensionMismatch),
    ({"kind": "multicir", "n": 2, "mu": ["1", "2x1"]}, ParseError),
    ({"kind": "unit_ball", "n": 2, "c": 1.0, "theta": [0.1, 0.2, 0.3]}, DimensionMismatch),
    ({"kind": "multicir", "n": 2, "mu": ["1", "1"], "colour": "red"}, ConfigError),
    ({"kind": "power_beta", "n": 1, "beta": 2.0, "mu": ["0"]}, ConfigError),
])
def test_build_errors(spec, err):
    with pytest.raises(err):
        build_model(spec)


def test_names_are_case_sensitive():
    with pytest.raises(UnknownModel):
        build_model({"kind": "MultiCIR", "n": 1, "mu": ["1"]})


@pytest.mark.parametrize("spec", BUILTINS, ids=[s["kind"] for s in BUILTINS])
def test_m_symmetric_psd(spec):
    model = build_model(spec)
    x = _domain_states(model, np.random.default_rng(1), 1000)
    m = diffusion_matrix_m(model, x)
    assert np.max(np.abs(m - np.swapaxes(m, -1, -2))) <= 1e-10
    assert np.linalg.eigvalsh(m).min() >= -1e-10


def test_multicir_m_diag_identity_with_base():
    spec = BUILTINS[0]
    model = build_model(spec)
    x = _domain_states(model, np.random.default_rng(2), 1000)
    base = model.sigma_base(x)
    expect = x * np.sum(base ** 2, axis=-1)
    assert np.allclose(np.diagonal(model.m(x), axis1=-2, axis2=-1), expect, rtol=0, atol=1e-12)
    assert np.allclose(model.m_diag(x), expect, rtol=0, atol=1e-12)


def test_multicir_row_vanishes_on_face():
    model = build_model(BUILTINS[0])
    s = model.sigma(np.array([0.0, 2.0]))
    assert np.all(s[0] == 0.0)


def test_unit_ball_diffusion_vanishes_at_sphere():
    model = build_model({"kind": "unit_ball", "n": 3, "c": 4.0})
    x = np.array([1 - 1e-8, 0.0, 0.0])
    assert np.abs(model.sigma(x)).max() < 1e-3
    # one-ulp overshoot is clamped, not NaN
    assert np.all(model.sigma(np.array([1.0 + 1e-15, 0.0, 0.0])) == 0.0)


@settings(max_examples=50)
@given(arrays(float, 2, elements=st.floats(0, 5)))
def test_evaluation_is_pure(x):
    model = build_model(BUILTINS[0])
    assert np.array_equal(model.mu(x), model.mu(x.copy()))
    assert np.array_equal(model.sigma(x), model.sigma(x.copy()))


def test_project_and_hit_mask():
    orth = build_model({"kind": "multicir", "n": 2, "mu": ["1", "1"]})
    assert np.array_equal(orth.project(np.array([-0.01, 2.0])), [0.0, 2.0])
    assert orth.hit_mask(np.array([1e-5, 1.0]), 1e-4).tolist() == [True, False]
    ball = build_model({"kind": "unit_ball", "n": 2, "c": 4.0})
    assert np.allclose(ball.project(np.array([3.0, 4.0])), [0.6, 0.8])
    assert ball.hit_mask(np.array([0.99995, 0.0]), 1e-4).tolist() == [True]
    assert isinstance(orth, MultiCirModel)
