import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dosebound.errors import InputError
from dosebound.identification import (
    WeightedSample,
    expectile_objective,
    marginal_bound,
    marginal_bound_cvar_form,
    psi_residual,
    solve_expectile,
    solve_quantile,
)

UNIFORM_012 = WeightedSample([0.0, 1.0, 2.0])


class TestWeightedSample:
    def test_rejects_empty(self):
        with pytest.raises(InputError):
            WeightedSample([])

    def test_rejects_bad_weights(self):
        with pytest.raises(InputError):
            WeightedSample([1.0, 2.0], [0.6, 0.6])
        with pytest.raises(InputError):
            WeightedSample([1.0, 2.0], [-0.1, 1.1])

    def test_merges_duplicates(self):
        ws = WeightedSample([1.0, 1.0, 2.0], [0.25, 0.25, 0.5])
        np.testing.assert_array_equal(ws.values, [1.0, 2.0])
        np.testing.assert_allclose(ws.weights, [0.5, 0.5])


class TestSolveExpectile:
    def test_gamma_one_is_mean(self):
        assert solve_expectile(UNIFORM_012, 1.0).value == pytest.approx(1.0, abs=1e-12)

    # Frozen from the threshold-enumeration oracle (see test_oracle_bounds).
    def test_gamma_two(self):
        assert solve_expectile(UNIFORM_012, 2.0).value == pytest.approx(0.75, abs=1e-12)

    def test_gamma_four(self):
        assert solve_expectile(UNIFORM_012, 4.0).value == pytest.approx(0.5, abs=1e-12)

    def test_nu_definition(self):
        out = solve_expectile(UNIFORM_012, 2.0)
        # theta = 0.75: one point at or below, two above
        assert out.nu == pytest.approx((2.0 / 3.0) + 2.0 * (1.0 / 3.0))

    def test_minimizes_asymmetric_square_loss(self):
        # Grid-search oracle for the equivalent M-estimation problem.
        rng = np.random.default_rng(4)
        for _ in range(20):
            vals = rng.normal(size=6)
            w = rng.dirichlet(np.ones(6))
            ws = WeightedSample(vals, w)
            gamma = float(rng.uniform(1.0, 8.0))
            theta = solve_expectile(ws, gamma).value
            grid = np.linspace(vals.min(), vals.max(), 4001)
            losses = [expectile_objective(ws, g, gamma) for g in grid]
            assert expectile_objective(ws, theta, gamma) <= min(losses) + 1e-9

    def test_root_residual_vanishes(self):
        rng = np.random.default_rng(9)
        for _ in range(30):
            ws = WeightedSample(rng.normal(size=8))
            gamma = float(rng.uniform(1.0, 10.0))
            theta = solve_expectile(ws, gamma).value
            assert abs(psi_residual(ws, theta, gamma)) < 1e-10

    def test_degenerate_sample(self):
        ws = WeightedSample([3.0, 3.0])
        assert solve_expectile(ws, 5.0).value == pytest.approx(3.0)

    def test_rejects_gamma_below_one(self):
        with pytest.raises(InputError):
            solve_expectile(UNIFORM_012, 0.5)


class TestSolveQuantile:
    def test_boundary_level(self):
        assert solve_quantile(UNIFORM_012, 1.0 / 3.0) == 0.0

    def test_median(self):
        assert solve_quantile(UNIFORM_012, 0.5) == 1.0

    def test_top_of_support(self):
        assert solve_quantile(UNIFORM_012, 0.99) == 2.0

    def test_rejects_levels_outside_unit(self):
        with pytest.raises(InputError):
            solve_quantile(UNIFORM_012, 0.0)
        with pytest.raises(InputError):
            solve_quantile(UNIFORM_012, 1.0)


class TestMarginalBound:
    def test_lambda_one_is_mean(self):
        assert marginal_bound(UNIFORM_012, 1.0).value == pytest.approx(1.0, abs=1e-12)

    # Frozen from the fractional-greedy LP oracle (see test_oracle_bounds).
    def test_lambda_two(self):
        out = marginal_bound(UNIFORM_012, 2.0)
        assert out.q == 0.0
        assert out.value == pytest.approx(0.5, abs=1e-12)
        assert out.tau == pytest.approx(1.0 / 3.0)

    def test_lambda_four(self):
        out = marginal_bound(UNIFORM_012, 4.0)
        assert out.q == 0.0
        assert out.value == pytest.approx(0.25, abs=1e-12)


class TestCvarForm:
    def test_lambda_one_collapses_to_mean(self):
        assert marginal_bound_cvar_form(1.0, 1.0, 1.0) == pytest.approx(1.0)

    def test_matches_direct_bound_on_uniform(self):
        # E[Y | Y > 0] = 1.5 for the uniform three-point sample
        val = marginal_bound_cvar_form(1.0, 1.5, 2.0)
        assert val == pytest.approx(marginal_bound(UNIFORM_012, 2.0).value, abs=1e-12)

    def test_linearity_at_zero_mean(self):
        for lam, c in [(2.0, 0.7), (3.0, 1.4)]:
            assert marginal_bound_cvar_form(0.0, c, lam) == pytest.approx(-(lam - 1) * c)

    def test_rejects_cvar_below_mean(self):
        with pytest.raises(InputError):
            marginal_bound_cvar_form(1.0, 0.5, 2.0)


# ---------------------------------------------------------------------------
# properties

finite_floats = st.floats(-50.0, 50.0)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(finite_floats, min_size=1, max_size=10),
    st.floats(1.0, 10.0),
    st.floats(-5.0, 5.0),
    st.floats(0.1, 4.0),
)
def test_translation_and_scale_equivariance(values, param, shift, scale):
    ws = WeightedSample(values)
    moved = WeightedSample(scale * np.asarray(values) + shift)
    for solver in (lambda s: solve_expectile(s, param).value, lambda s: marginal_bound(s, param).value):
        base = solver(ws)
        assert solver(moved) == pytest.approx(scale * base + shift, abs=1e-8 * max(1, abs(base)) + 1e-8)


@settings(max_examples=60, deadline=None)
@given(st.lists(finite_floats, min_size=2, max_size=10), st.floats(1.0, 8.0), st.floats(0.0, 3.0))
def test_bounds_shrink_as_model_loosens(values, param, bump):
    ws = WeightedSample(values)
    assert solve_expectile(ws, param).value >= solve_expectile(ws, param + bump).value - 1e-10
    assert marginal_bound(ws, param).value >= marginal_bound(ws, param + bump).value - 1e-10


@settings(max_examples=60, deadline=None)
@given(st.lists(finite_floats, min_size=2, max_size=10), st.floats(1.0, 9.0))
def test_feasible_set_ordering(values, param):
    # marginal(g) <= expectile-bound(g) <= marginal(sqrt g), lower-bound side
    ws = WeightedSample(values)
    lo = marginal_bound(ws, param).value
    mid = solve_expectile(ws, param).value
    hi = marginal_bound(ws, np.sqrt(param)).value
    assert lo <= mid + 1e-9
    assert mid <= hi + 1e-9


@settings(max_examples=40, deadline=None)
@given(st.lists(finite_floats, min_size=1, max_size=8))
def test_parameter_one_gives_mean(values):
    ws = WeightedSample(values)
    assert solve_expectile(ws, 1.0).value == pytest.approx(ws.mean, abs=1e-10)
    assert marginal_bound(ws, 1.0).value == pytest.approx(ws.mean, abs=1e-10)


@settings(max_examples=60, deadline=None)
@given(st.lists(finite_floats, min_size=1, max_size=10), st.floats(1.0, 10.0))
def test_bound_stays_inside_support(values, param):
    ws = WeightedSample(values)
    for val in (solve_expectile(ws, param).value, marginal_bound(ws, param).value):
        assert ws.values.min() - 1e-12 <= val <= ws.values.max() + 1e-12
