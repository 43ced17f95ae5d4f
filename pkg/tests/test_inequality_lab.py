import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from degenflow.errors import ParameterError, PreconditionError
from degenflow.flux import Params
from degenflow.grid import Grid, ScalarField
from degenflow.inequality_lab import (
    LEMMA_IDS, GapSample, bogelein_lower_gap, bogelein_upper_gap, bogelein_upper_ratio,
    brasco_lipschitz_gap, brasco_monotonicity_gap, c_p_delta_equation, calibrate_constant,
    certify_G_bounds, compute_c_p_delta, gh_comparison_gap, gk_prime_bound, gk_prime_profile,
    interpolation_check, lindqvist_gap, lindqvist_ratios, lower_shift, run_lemma_suite,
    sample_pairs, sample_vectors, write_lemma_csv, young_type_gap)

vec2 = st.lists(st.floats(-8, 8), min_size=2, max_size=2).map(np.array)


def test_gap_sample_normalization():
    s = GapSample("x", lhs=np.array([10.0, 0.5]), rhs=np.array([9.0, 0.0]),
                  gap=np.array([-1.0, -0.5]))
    assert s.min_gap() == pytest.approx(-0.5)
    assert not s.holds()


def test_brasco_equal_vectors_zero_gap():
    xi = np.array([[2.0, 1.0]])
    s = brasco_monotonicity_gap(xi, xi, 3.0)
    assert s.gap[0] == 0.0


def test_brasco_inside_ball_both_sides_zero():
    xi, eta = np.array([[0.2, 0.1]]), np.array([[-0.5, 0.3]])
    s = brasco_monotonicity_gap(xi, eta, 4.0)
    assert s.lhs[0] == 0.0 and s.rhs[0] == 0.0


@settings(max_examples=200, deadline=None)
@given(vec2, vec2, st.floats(2.0, 6.0))
def test_brasco_pair_holds(xi, eta, p):
    assert brasco_monotonicity_gap(xi[None], eta[None], p).holds()
    assert brasco_lipschitz_gap(xi[None], eta[None], p).holds()


def test_bogelein_requires_outside_unit_ball():
    with pytest.raises(PreconditionError):
        bogelein_lower_gap(np.array([[0.5, 0.0]]), np.array([[2.0, 0.0]]), 3.0)
    with pytest.raises(PreconditionError):
        bogelein_upper_ratio(np.array([[1.0, 0.0]]), np.array([[2.0, 0.0]]), 3.0)


def test_bogelein_upper_ratio_by_hand():
    # p = 2: |H_1(xi) - H_1(eta)| = |2 - 4| and the bracket is (2 + 4) / 2 * |xi - eta|
    xi = np.array([[3.0, 0.0]])
    eta = np.array([[5.0, 0.0]])
    assert bogelein_upper_ratio(xi, eta, 2.0)[0] == pytest.approx(1 / 3, rel=1e-14)
    assert bogelein_upper_gap(xi, eta, 2.0, 1.0).holds()


@settings(max_examples=200, deadline=None)
@given(vec2, vec2, st.floats(2.0, 6.0))
def test_bogelein_lower_holds(xi, eta, p):
    assume(np.linalg.norm(xi) > 1.0 + 1e-9)
    assert bogelein_lower_gap(xi[None], eta[None], p).holds()


def test_lindqvist_p2_ratios_are_one():
    rng = np.random.default_rng(0)
    xi, eta = rng.standard_normal((100, 3)), rng.standard_normal((100, 3))
    r1, r2 = lindqvist_ratios(xi, eta, 2.0)
    assert np.allclose(r1, 1.0) and np.allclose(r2, 1.0)
    low, up = lindqvist_gap(xi, eta, 2.0, 1.0)
    assert low.holds() and up.holds()


def test_lindqvist_constant_check():
    with pytest.raises(ParameterError):
        lindqvist_gap(np.ones((1, 2)), np.zeros((1, 2)), 3.0, 0.5)


def test_young_type_zero_below_threshold():
    s = young_type_gap(np.array([1.0]), np.array([1.0]), np.array([1.5]), np.array([2.0]),
                       np.array([1.0]), np.array([1.0]))
    assert s.lhs[0] == 0.0 and s.holds()


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 50), st.floats(1.01, 10),
       st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_young_type_holds(A, B, s, k, alpha, sigma):
    assert young_type_gap(A, B, s, k, alpha, sigma).holds()


def test_gk_prime_bound_dominates_profile():
    for k in (1.5, 2.0, 5.0, 10.0):
        bound, s_star = gk_prime_bound(k, return_argmax=True)
        s = np.linspace(0, 60, 200_001)
        assert gk_prime_profile(s, k).max() <= bound * (1 + 1e-12)
        assert s_star > math.sqrt(k)


def test_gk_prime_profile_vanishes_below_sqrt_k():
    assert np.all(gk_prime_profile(np.linspace(0, math.sqrt(3.0), 50), 3.0) == 0.0)


@settings(max_examples=200, deadline=None)
@given(vec2, vec2, st.sampled_from([2.0, 2.5, 3.0, 4.0, 6.0]), st.floats(0.05, 0.95))
def test_gh_comparison_holds(xi, eta, p, delta):
    assert gh_comparison_gap(xi[None], eta[None], Params(p, delta)).holds()


@pytest.mark.parametrize("p", [2.5, 3.0, 4.0, 6.0])
@pytest.mark.parametrize("delta", [0.1, 0.5, 0.9])
def test_c_p_delta_solves_equation(p, delta):
    c = compute_c_p_delta(p, delta)
    lhs, rhs = c_p_delta_equation(c, p, delta)
    assert abs(lhs - rhs) <= 1e-10 * abs(rhs)
    assert c < 2 / p
    assert lower_shift(p, delta) == 0.0


def test_c_p_delta_p2():
    assert compute_c_p_delta(2.0, 0.5) == 0.5
    assert lower_shift(2.0, 0.5) == pytest.approx((math.sqrt(1.5) + 0.5) / 2)
    with pytest.raises(ParameterError):
        c_p_delta_equation(0.5, 2.0, 0.5)


def test_G_bounds_hold_on_grid():
    t = np.linspace(0, 100, 2001)
    for p in (2.0, 3.0, 6.0):
        low, up = certify_G_bounds(p, 0.5, t)
        assert low.holds() and up.holds()


def test_calibrate_constant():
    assert calibrate_constant([0.2, 0.5]) == 1.0
    assert calibrate_constant([2.0, np.inf, 1.0]) == pytest.approx(2.1)


def test_samplers_respect_shells(rng):
    v = sample_vectors(rng, 1000, 3, 0.5, r_min=1.0)
    assert v.shape == (1000, 3) and np.all(np.linalg.norm(v, axis=1) > 1.0)
    xi, eta = sample_pairs(rng, 500, 2, 0.5)
    assert xi.shape == eta.shape == (500, 2)


def test_interpolation_check_scale_invariant():
    g = Grid.cube(2, 0, 1, 17, 0.1, 4)
    v = ScalarField.from_function(g, lambda x, t: np.sin(np.pi * x[0]) * np.sin(np.pi * x[1]))
    a = interpolation_check(v, 3, 2).gap
    b = interpolation_check(v * 5.0, 3, 2).gap
    assert abs(a - b) <= 1e-10 * a
    assert interpolation_check(v * 0.0, 3, 2).gap == 0.0


def test_lemma_suite_small_and_deterministic(tmp_path):
    rows = run_lemma_suite([2.0, 3.0], [0.5], [2], samples=500, seed=3, shards=3)
    assert len(rows) == 2 * len(LEMMA_IDS)
    assert all(r.passed for r in rows)
    again = run_lemma_suite([2.0, 3.0], [0.5], [2], samples=500, seed=3, shards=3, threads=3)
    assert [r.as_tuple() for r in rows] == [r.as_tuple() for r in again]
    write_lemma_csv(rows, tmp_path / "l.csv", ["seed=3"])
    text = (tmp_path / "l.csv").read_text()
    assert text.startswith("# seed=3\nlemma_id,")


def test_lemma_suite_empty_grid():
    with pytest.raises(ParameterError):
        run_lemma_suite([], [0.5], [2])


def test_lemma_suite_negative_control():
    def broken(lemma, *args):
        return -1.0 if lemma == "young_type" else 0.0

    rows = run_lemma_suite([3.0], [0.5], [2], samples=10, shard_fn=broken)
    failed = [r.lemma_id for r in rows if not r.passed]
    assert failed == ["young_type"]
