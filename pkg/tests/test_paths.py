from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from degsde.errors import NonFiniteState
from degsde.model import build_model
from degsde.paths import (
    NoiseStream,
    integrate,
    monte_carlo,
    refine,
    sample_path,
    step,
    uniqueness_gap,
)

MULTICIR = {"kind": "multicir", "n": 2, "mu": ["3", "3"], "sigma": [["1", "0.3"], ["x2/(1 + x2)", "1"]]}


def _zero(n=2):
    return build_model({"kind": "custom", "n": n, "mu": ["0"] * n, "sigma": [["0"] * n] * n})


# -- Brownian paths ----------------------------------------------------------

def test_level0_bookkeeping():
    bp = sample_path(3, 1.0, 4, 0, 11)
    assert len(bp.increments) == 1
    assert bp.increments[0].shape == (4, 3)
    assert bp.dt(0) == 0.25


def test_level_shapes():
    bp = sample_path(2, 2.0, 5, 3, 1)
    for level, inc in enumerate(bp.increments):
        assert inc.shape == (5 * 2 ** level, 2)
        assert bp.dt(level) == pytest.approx(2.0 / (5 * 2 ** level))


def test_bridge_sums_reproduce_coarse():
    bp = sample_path(2, 1.0, 4, 4, 123)
    for level in range(4):
        fine = bp.increments[level + 1]
        np.testing.assert_allclose(fine[0::2] + fine[1::2], bp.increments[level], rtol=0, atol=1e-15)


def test_refine_identity_exact_shape():
    coarse = np.array([[1.0], [-2.0]])
    fine = refine(coarse, 0.5, np.array([[0.3], [0.0]]))
    assert fine.shape == (4, 1)
    assert fine[2, 0] == -1.0 and fine[3, 0] == -1.0


def test_increment_variance():
    steps = 100_000
    T = 1.0
    inc = sample_path(1, T, steps, 0, 5).increments[0][:, 0]
    var = T / steps
    # the sample variance of N normals has standard error var * sqrt(2 / (N - 1))
    se = var * np.sqrt(2.0 / (steps - 1))
    assert abs(inc.var(ddof=1) - var) < 3 * se
    # the refined level keeps the right variance too
    fine = sample_path(1, T, steps // 2, 1, 5).increments[1][:, 0]
    assert abs(fine.var(ddof=1) - var) < 3 * se


def test_paths_are_independent_of_generation_order():
    a = [sample_path(2, 1.0, 8, 2, 9, p).increments[2] for p in (0, 1, 2)]
    b = [sample_path(2, 1.0, 8, 2, 9, p).increments[2] for p in (2, 1, 0)][::-1]
    for x, y in zip(a, b):
        assert np.array_equal(x, y)
    assert not np.array_equal(a[0], a[1])


def test_noise_stream_chunks_match_path():
    bp = [sample_path(2, 1.0, 10, 0, 4, p).increments[0] for p in (3, 4)]
    ns = NoiseStream(4, [3, 4], 2, 0.1)
    got = np.concatenate([ns.next(3), ns.next(7)], axis=1)
    assert np.array_equal(got, np.stack(bp))


# -- step --------------------------------------------------------------------

@pytest.mark.parametrize("scheme", ["euler", "full_truncation", "projected"])
def test_zero_coefficients_fix_the_state(scheme):
    x = np.array([0.3, 0.4])
    assert np.array_equal(step(_zero(), scheme, x, 0.1, np.array([1.0, -2.0])), x)


def test_bessel_euler_step():
    m = build_model({"kind": "bessel1d", "c": 2.0})
    assert step(m, "euler", [1.0], 0.01, [0.0])[0] == pytest.approx(1.02, abs=1e-15)


def test_full_truncation_uses_positive_part():
    m = build_model({"kind": "multicir", "n": 1, "mu": "x1", "sigma": "1"})
    # drift x1 and diffusion sqrt(x1) both vanish at the positive part 0
    out = step(m, "full_truncation", [-0.01], 0.5, [3.0])
    assert out[0] == -0.01
    # Euler evaluates at the state itself: sqrt(|x1|) = 0.1
    assert step(m, "euler", [-0.01], 0.5, [3.0])[0] == pytest.approx(-0.01 - 0.005 + 0.3, abs=1e-15)


def test_step_domain_failure_is_non_finite():
    m = build_model({"kind": "custom", "n": 1, "mu": ["sqrt(x1)"], "sigma": [["0"]]})
    with pytest.raises(NonFiniteState):
        step(m, "euler", [-1.0], 0.1, [0.0])


def test_unknown_scheme():
    with pytest.raises(ValueError):
        step(_zero(), "milstein", [0.0, 0.0], 0.1, [0.0, 0.0])


@settings(max_examples=100)
@given(x=st.lists(st.floats(-0.999, 0.999), min_size=2, max_size=2),
       dW=st.lists(st.floats(-3, 3), min_size=2, max_size=2))
def test_projected_stays_in_closed_ball(x, dW):
    x = np.array(x)
    if np.linalg.norm(x) >= 1:
        x = 0.99 * x / np.linalg.norm(x)
    m = build_model({"kind": "unit_ball", "n": 2, "c": 2.0, "theta": 0.1})
    assert np.linalg.norm(step(m, "projected", x, 0.1, np.array(dW))) <= 1 + 1e-12


@settings(max_examples=100)
@given(x=st.lists(st.floats(0, 5), min_size=2, max_size=2),
       dW=st.lists(st.floats(-3, 3), min_size=2, max_size=2))
def test_projected_stays_in_closed_orthant(x, dW):
    m = build_model(MULTICIR)
    assert np.all(step(m, "projected", np.array(x), 0.1, np.array(dW)) >= 0)


# -- integrate ---------------------------------------------------------------

def test_zero_model_constant_trajectory():
    bp = sample_path(2, 1.0, 16, 2, 3)
    for level in range(3):
        traj = integrate(_zero(), [0.2, 0.7], 1.0, bp.dt(level), bp)
        assert np.all(traj.states == [0.2, 0.7])
        assert traj.t_grid[1] == pytest.approx(bp.dt(level))


def test_integrate_rejects_misaligned_dt():
    bp = sample_path(2, 1.0, 16, 1, 3)
    with pytest.raises(ValueError):
        integrate(_zero(), [0.2, 0.7], 1.0, 1.0 / 64, bp)
    with pytest.raises(ValueError):
        integrate(_zero(), [0.2, 0.7], 1.0, 0.3, bp)


def test_initial_state_recorded():
    m = build_model(MULTICIR)
    bp = sample_path(2, 1.0, 100, 0, 1)
    traj = integrate(m, [1.0, 2.0], 1.0, 0.01, bp)
    assert np.array_equal(traj.states[0], [1.0, 2.0])
    assert traj.states.shape == (101, 2)


def test_absorb_freezes_after_hit():
    m = build_model({"kind": "bessel1d", "c": 0.2})
    bp = sample_path(1, 4.0, 4000, 0, 2)
    traj = integrate(m, [0.05], 4.0, 1e-3, bp, boundary_policy="absorb", eps_hit=1e-2)
    k = traj.first_hit_step
    assert k > 0
    assert np.all(traj.states[k:] == traj.states[k])


def test_non_finite_state_carries_partial():
    m = build_model({"kind": "custom", "n": 1, "mu": ["x1 * x1 * x1"], "sigma": [["0"]]})
    bp = sample_path(1, 10.0, 100, 0, 0)
    with pytest.raises(NonFiniteState) as info:
        integrate(m, [2.0], 10.0, 0.1, bp)
    err = info.value
    assert err.step > 0
    assert len(err.partial.states) == err.step
    assert np.all(np.isfinite(err.partial.states))


# -- Monte Carlo -------------------------------------------------------------

def test_mc_ode_constant_drift():
    m = build_model({"kind": "custom", "n": 2, "mu": ["1.5", "-0.5"], "sigma": [["0", "0"], ["0", "0"]]})
    s = monte_carlo(m, [0.0, 1.0], 2.0, 0.25, 10)
    np.testing.assert_allclose(s.checkpoints[-1]["mean"], [3.0, 0.0], atol=1e-14)
    assert s.checkpoints[-1]["var"] == [0.0, 0.0]


def test_mc_ode_decay():
    m = build_model({"kind": "custom", "n": 1, "mu": ["-x1"], "sigma": [["0"]]})
    s = monte_carlo(m, [1.0], 1.0, 1e-4, 2)
    assert s.checkpoints[-1]["mean"][0] == pytest.approx(np.exp(-1.0), rel=1e-4)


def test_mc_cir_mean():
    m = build_model({"kind": "multicir", "n": 1, "mu": "2", "sigma": "2"})
    s = monte_carlo(m, [1.0], 1.0, 1e-3, 10_000, seed=1)
    ck = s.checkpoints[-1]
    assert abs(ck["mean"][0] - 3.0) < 3 * ck["se"][0]


def test_mc_martingale():
    m = build_model({"kind": "multicir", "n": 2, "mu": ["0", "0"], "sigma": [["1", "0"], ["0", "1"]]})
    s = monte_carlo(m, [1.0, 0.5], 1.0, 1e-2, 10_000, seed=2)
    ck = s.checkpoints[-1]
    for i, x0 in enumerate([1.0, 0.5]):
        assert abs(ck["mean"][i] - x0) < 4 * ck["se"][i]


def test_mc_unit_ball_mean_symmetry():
    m = build_model({"kind": "unit_ball", "n": 2, "c": 4.0, "theta": 0.0})
    s = monte_carlo(m, [0.0, 0.0], 1.0, 1e-2, 10_000, seed=3)
    ck = s.checkpoints[-1]
    assert all(abs(mu) < 3 * se for mu, se in zip(ck["mean"], ck["se"]))


def test_mc_standard_errors():
    m = build_model(MULTICIR)
    s = monte_carlo(m, [1.0, 1.0], 0.5, 1e-2, 400, seed=0)
    ck = s.checkpoints[-1]
    np.testing.assert_allclose(ck["se"], np.sqrt(np.array(ck["var"]) / 400), rtol=1e-15)


def test_mc_independent_of_threads_and_blocks():
    m = build_model(MULTICIR)
    a = monte_carlo(m, [1.0, 1.0], 1.0, 1e-2, 300, seed=4, threads=1, checkpoints=[0.5, 1.0])
    b = monte_carlo(m, [1.0, 1.0], 1.0, 1e-2, 300, seed=4, threads=3, block_size=64, checkpoints=[0.5, 1.0])
    assert a.to_report() == b.to_report()
    assert np.array_equal(a.path_min, b.path_min)


def test_mc_requires_a_path():
    with pytest.raises(ValueError):
        monte_carlo(_zero(), [0.0, 0.0], 1.0, 0.1, 0)


def test_bessel_hit_fractions_follow_feller_side():
    def frac(c):
        m = build_model({"kind": "bessel1d", "c": c})
        return monte_carlo(m, [1.0], 1.0, 1e-3, 10_000, seed=5, eps_hit=1e-3).hit_fraction[0]

    assert frac(4.0) < 0.01
    assert frac(1.0) > 0.10


# -- uniqueness --------------------------------------------------------------

def test_identical_schemes_have_zero_gap():
    m = build_model(MULTICIR)
    g = uniqueness_gap(m, [1.0, 1.0], 1.0, 1e-2, 0, "full_truncation", "full_truncation")
    assert g.same_level == [0.0, 0.0, 0.0]
    assert g.same_level_order is None


def test_cross_level_gap_shrinks_lipschitz():
    m = build_model({"kind": "power_beta", "n": 2, "beta": 1.0, "mu": ["1 - x1", "1 - x2"],
                     "sigma": [["1", "0"], ["0", "1"]]})
    g = uniqueness_gap(m, [1.0, 1.0], 1.0, 1e-2, 0, "full_truncation", "full_truncation", paths=64)
    assert g.monotone_decreasing()
    assert g.order > 0.3
    assert g.dts == [1e-2, 5e-3, 2.5e-3]


def test_cross_level_gap_shrinks_multicir():
    m = build_model(MULTICIR)
    g = uniqueness_gap(m, [1.0, 1.0], 1.0, 1e-2, 0, paths=32)
    assert g.monotone_decreasing()
