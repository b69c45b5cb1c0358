from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from degsde.boundary import (
    ATTAINABLE,
    INCONCLUSIVE,
    UNATTAINABLE,
    Diffusion1D,
    ball_radial_diffusion,
    bessel_diffusion,
    classify,
    diffusion_from_expr,
    exact_power_rule,
    log_scale_density,
    scale_density,
    wright_fisher_diffusion,
)

EXPONENTS = (0.5, 1.0, 1.5)


def _slope(d, ys, dist):
    logs = np.array([log_scale_density(d, y) for y in ys])
    return np.polyfit(np.log(dist), logs, 1)[0]


# -- scale density -----------------------------------------------------------

def test_zero_drift_density_is_one():
    d = Diffusion1D(lambda y: 0.0, lambda y: 1.0 + y * y, (-3.0, 5.0))
    for y in (-2.9, 0.0, 1.0, 4.99):
        assert scale_density(d, y) == 1.0


@pytest.mark.parametrize("d", [
    ball_radial_diffusion(2, 4.0),
    ball_radial_diffusion(3, 1.5),
    bessel_diffusion(3.0),
    wright_fisher_diffusion(0.5, 1.5),
    diffusion_from_expr("1 - x1", "1 + x1*x1", (-math.inf, math.inf)),
])
def test_density_is_one_at_reference(d):
    assert scale_density(d, d.y0) == 1.0


@pytest.mark.parametrize("n,kappa", [(2, 4.0), (3, 1.0), (4, 2.5)])
def test_ball_density_exponents(n, kappa):
    d = ball_radial_diffusion(n, kappa)
    dist = np.geomspace(1e-6, 1e-3, 7)
    assert _slope(d, dist, dist) == pytest.approx(-n / 2, rel=0.02)
    assert _slope(d, 1 - dist, dist) == pytest.approx(-kappa / 2, rel=0.02)


@pytest.mark.parametrize("c", [1.0, 2.0, 4.0])
def test_bessel_density_exponent(c):
    d = bessel_diffusion(c)
    ys = np.geomspace(1e-6, 1e-2, 9)
    assert _slope(d, ys, ys) == pytest.approx(-c / 2, rel=0.02)
    # closed form y^(-c/2) normalised at y0 = 1
    assert scale_density(d, 0.25) == pytest.approx(0.25 ** (-c / 2), rel=1e-9)


def test_density_outside_interval():
    with pytest.raises(ValueError):
        scale_density(ball_radial_diffusion(2, 2.0), 1.0)


def test_diffusion_audit_rejects_vanishing_diffusion():
    with pytest.raises(ValueError):
        Diffusion1D(lambda y: 0.0, lambda y: y - 0.5, (0.0, 1.0))
    with pytest.raises(ValueError):
        Diffusion1D(lambda y: 0.0, lambda y: 1.0, (1.0, 0.0))
    with pytest.raises(ValueError):
        Diffusion1D(lambda y: 0.0, lambda y: 1.0, (0.0, 1.0), y0=2.0)


# -- classify ----------------------------------------------------------------

def test_ball_examples():
    assert classify(ball_radial_diffusion(2, 2.0), 1.0).classification == UNATTAINABLE
    assert classify(ball_radial_diffusion(2, 2.0), 0.0).classification == UNATTAINABLE
    v = classify(ball_radial_diffusion(2, 1.0), "r")
    assert v.classification == ATTAINABLE
    assert v.exponent == pytest.approx(0.5, abs=0.02)
    assert math.isfinite(v.scale_integral_estimate)


def test_bessel_examples():
    assert classify(bessel_diffusion(4.0), 0.0).classification == UNATTAINABLE
    assert classify(bessel_diffusion(1.0), 0.0).classification == ATTAINABLE
    inf = classify(bessel_diffusion(4.0), "r")
    assert inf.classification == INCONCLUSIVE and inf.endpoint == math.inf


@pytest.mark.parametrize("p", EXPONENTS)
@pytest.mark.parametrize("q", EXPONENTS)
@pytest.mark.parametrize("side", ["l", "r"])
def test_power_law_corpus_matches_exact_rule(p, q, side):
    v = classify(wright_fisher_diffusion(p, q), side)
    exponent = p if side == "l" else q
    assert v.classification == exact_power_rule(exponent)
    assert v.power_law


def test_unattainable_evidence_spans_six_decades():
    v = classify(ball_radial_diffusion(2, 4.0), "l")
    assert v.classification == UNATTAINABLE and v.diverges
    dist = [ev["distance"] for ev in v.evidence]
    assert len(dist) >= 6
    np.testing.assert_allclose(dist[:6], [10.0 ** (-2 - j) for j in range(6)], rtol=1e-12)
    partial = [ev["partial"] for ev in v.evidence]
    assert np.all(np.diff(partial) > 0)


def test_endpoint_validation():
    with pytest.raises(ValueError):
        classify(ball_radial_diffusion(2, 2.0), 0.5)


def test_expression_diffusion_matches_builtin():
    d = diffusion_from_expr("2 * (2 - 4 * x1)", "8 * x1 * (1 - x1)", (0.0, 1.0))
    b = ball_radial_diffusion(2, 2.0)
    for side in ("l", "r"):
        assert classify(d, side).classification == classify(b, side).classification
    assert scale_density(d, 0.1) == pytest.approx(scale_density(b, 0.1), rel=1e-10)


@settings(max_examples=5, derandomize=True)
@given(k=st.floats(1e-3, 1e3))
def test_rescaling_keeps_verdicts(k):
    for base in (ball_radial_diffusion(2, 2.0), ball_radial_diffusion(2, 1.0), bessel_diffusion(1.0)):
        scaled = Diffusion1D(lambda y, b=base: k * b.drift(y), lambda y, b=base: k * b.diff_sq(y),
                             base.interval, base.y0)
        for side in ("l", "r"):
            assert classify(scaled, side).classification == classify(base, side).classification


def test_report_round_trips_through_json():
    import json
    rep = classify(ball_radial_diffusion(2, 2.0), "r").to_report()
    back = json.loads(json.dumps(rep))
    assert back["classification"] == UNATTAINABLE and back["side"] == "r"
    assert back["scale_integral_infinite"] is True
