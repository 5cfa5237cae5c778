import numpy as np
import pytest

from stiga.bspline import (
    KnotVector,
    SplineSpace1D,
    eval_basis,
    eval_basis_derivs,
    find_span,
    greville_points,
    uniform_open_knots,
)


def naive_cox_de_boor(knots, j, q, t):
    """Direct recursion with the 0/0 := 0 rule; the independent oracle."""
    if q == 0:
        return 1.0 if knots[j] <= t < knots[j + 1] else 0.0
    out = 0.0
    d1 = knots[j + q] - knots[j]
    if d1 > 0.0:
        out += (t - knots[j]) / d1 * naive_cox_de_boor(knots, j, q - 1, t)
    d2 = knots[j + q + 1] - knots[j + 1]
    if d2 > 0.0:
        out += (knots[j + q + 1] - t) / d2 * naive_cox_de_boor(knots, j + 1, q - 1, t)
    return out


KVS = [
    KnotVector([0, 0, 1, 1], 1),
    KnotVector([0, 0, 0, 1, 1, 1], 2),
    KnotVector([0, 0, 0, 0.5, 1, 1, 1], 2),
    uniform_open_knots(5, 3),
    uniform_open_knots(7, 4),
    KnotVector([0, 0, 0, 0.25, 0.25, 0.75, 1, 1, 1], 2),  # repeated interior knot
]


class TestFindSpan:
    def test_single_element(self):
        kv = KnotVector([0, 0, 1, 1], 1)
        assert find_span(kv, 0.3) == 1

    def test_interior_knot(self):
        kv = KnotVector([0, 0, 0, 0.5, 1, 1, 1], 2)
        assert find_span(kv, 0.75) == 3  # the span (0.5, 1)

    def test_right_end_maps_to_last_nonempty_span(self):
        for kv in KVS:
            span = find_span(kv, 1.0)
            assert kv.knots[span] < kv.knots[span + 1] == 1.0

    def test_outside_domain_rejected(self):
        kv = KVS[0]
        with pytest.raises(ValueError):
            find_span(kv, -0.1)
        with pytest.raises(ValueError):
            find_span(kv, 1.1)


class TestEvalBasis:
    def test_linear_hats(self):
        kv = KnotVector([0, 0, 1, 1], 1)
        np.testing.assert_allclose(eval_basis(kv, 0.5), [0.5, 0.5], atol=1e-15)

    def test_bernstein(self):
        kv = KnotVector([0, 0, 0, 1, 1, 1], 2)
        np.testing.assert_allclose(eval_basis(kv, 0.5), [0.25, 0.5, 0.25], atol=1e-14)

    def test_hand_run_of_recursion(self):
        # values of the three active quadratics at t = 0.25, worked by hand
        kv = KnotVector([0, 0, 0, 0.5, 1, 1, 1], 2)
        np.testing.assert_allclose(eval_basis(kv, 0.25), [0.25, 0.625, 0.125], atol=1e-15)

    def test_against_naive_recursion(self):
        rng = np.random.default_rng(7)
        for kv in KVS:
            p = kv.degree
            for t in rng.uniform(0.0, 1.0 - 1e-9, size=25):
                span = find_span(kv, t)
                vals = eval_basis(kv, t)
                ref = [naive_cox_de_boor(kv.knots, span - p + a, p, t) for a in range(p + 1)]
                np.testing.assert_allclose(vals, ref, atol=1e-14)

    def test_last_function_interpolates_at_one(self):
        for kv in KVS:
            vals = eval_basis(kv, 1.0)
            assert vals[-1] == pytest.approx(1.0, abs=1e-14)
            np.testing.assert_allclose(vals[:-1], 0.0, atol=1e-14)


class TestDerivatives:
    def test_hat_slopes(self):
        kv = KnotVector([0, 0, 1, 1], 1)
        d = eval_basis_derivs(kv, 0.5, 1)
        np.testing.assert_allclose(d[1], [-1.0, 1.0], atol=1e-15)

    def test_derivative_rows_sum_to_zero(self):
        rng = np.random.default_rng(11)
        for kv in KVS:
            for t in rng.uniform(0, 1, size=10):
                d = eval_basis_derivs(kv, t, kv.degree)
                for order in range(1, kv.degree + 1):
                    assert abs(d[order].sum()) < 1e-9 * max(1.0, np.abs(d[order]).max())

    def test_first_derivative_matches_finite_differences(self):
        step = 1e-6
        rng = np.random.default_rng(3)
        for kv in KVS:
            spans = kv.span_starts
            for _ in range(10):
                # stay inside one span so the difference quotient is smooth
                e = rng.integers(len(spans))
                a, b = kv.knots[spans[e]], kv.knots[spans[e] + 1]
                t = rng.uniform(a + 5 * step, b - 5 * step)
                span = find_span(kv, t)
                d = eval_basis_derivs(kv, t, 1, span=span)
                fd = (eval_basis(kv, t + step, span=span) - eval_basis(kv, t - step, span=span)) / (2 * step)
                np.testing.assert_allclose(d[1], fd, atol=1e-5)

    def test_orders_above_degree_are_exact_zeros(self):
        kv = KnotVector([0, 0, 0, 1, 1, 1], 2)
        d = eval_basis_derivs(kv, 0.3, 5)
        assert d.shape == (6, 3)
        assert np.all(d[3:] == 0.0)

    def test_second_derivative_of_bernstein(self):
        # (1-t)^2, 2t(1-t), t^2 have second derivatives 2, -4, 2
        kv = KnotVector([0, 0, 0, 1, 1, 1], 2)
        d = eval_basis_derivs(kv, 0.37, 2)
        np.testing.assert_allclose(d[2], [2.0, -4.0, 2.0], atol=1e-12)

    def test_negative_order_rejected(self):
        with pytest.raises(ValueError):
            eval_basis_derivs(KVS[0], 0.5, -1)


class TestGreville:
    def test_linear(self):
        np.testing.assert_allclose(greville_points(KnotVector([0, 0, 1, 1], 1)), [0, 1])

    def test_quadratic(self):
        kv = KnotVector([0, 0, 0, 1, 1, 1], 2)
        np.testing.assert_allclose(greville_points(kv), [0, 0.5, 1])

    def test_monotone_and_in_range(self):
        for kv in KVS:
            g = greville_points(kv)
            assert np.all(np.diff(g) >= -1e-15)
            assert g[0] >= 0.0 and g[-1] <= 1.0

    def test_refinement_grows_count(self):
        coarse = uniform_open_knots(4, 2)
        fine = uniform_open_knots(8, 2)
        assert greville_points(fine).size == greville_points(coarse).size + 4


class TestUniformOpenKnots:
    def test_two_linear_elements(self):
        np.testing.assert_allclose(uniform_open_knots(2, 1).knots, [0, 0, 0.5, 1, 1])

    def test_four_quadratic_elements(self):
        np.testing.assert_allclose(
            uniform_open_knots(4, 2).knots, [0, 0, 0, 0.25, 0.5, 0.75, 1, 1, 1]
        )

    def test_bernstein_case(self):
        np.testing.assert_allclose(uniform_open_knots(1, 3).knots, [0, 0, 0, 0, 1, 1, 1, 1])

    def test_mesh_data(self):
        kv = uniform_open_knots(8, 2)
        assert kv.h == pytest.approx(1 / 8)
        assert kv.beta == pytest.approx(1.0)
        assert kv.num_elements == 8

    def test_invalid_element_count(self):
        with pytest.raises(ValueError):
            uniform_open_knots(0, 2)


class TestKnotVectorValidation:
    def test_not_open_rejected(self):
        with pytest.raises(ValueError):
            KnotVector([0, 0.5, 1], 1)

    def test_decreasing_rejected(self):
        with pytest.raises(ValueError):
            KnotVector([0, 0, 0.6, 0.4, 1, 1], 1)

    def test_wrong_interval_rejected(self):
        with pytest.raises(ValueError):
            KnotVector([0, 0, 0.5, 2, 2], 1)

    def test_degree_zero_rejected(self):
        with pytest.raises(ValueError):
            KnotVector([0, 1], 0)

    def test_degenerate_span_warns(self):
        knots = [0, 0, 1e-12, 0.5, 1, 1]
        with pytest.warns(UserWarning):
            KnotVector(knots, 1)


class TestBasisInvariants:
    def test_partition_of_unity(self):
        rng = np.random.default_rng(1)
        for kv in KVS:
            ts = rng.uniform(0.0, 1.0, size=1000)
            for t in ts:
                assert abs(eval_basis(kv, t).sum() - 1.0) <= 1e-13

    def test_nonnegativity(self):
        rng = np.random.default_rng(2)
        for kv in KVS:
            for t in rng.uniform(0.0, 1.0, size=200):
                assert np.all(eval_basis(kv, t) >= -1e-15)

    def test_local_support(self):
        rng = np.random.default_rng(5)
        for kv in KVS:
            p = kv.degree
            space = SplineSpace1D(kv, "none")
            for t in rng.uniform(0.0, 1.0, size=50):
                row = space.collocation_matrix([t], 0)[0]
                for j in range(kv.num_basis):
                    inside = kv.knots[j] <= t <= kv.knots[j + p + 1]
                    if not inside:
                        assert row[j] == 0.0

    def test_continuity_at_simple_interior_knots(self):
        # left and right limits from the two adjacent polynomial pieces
        for kv in (uniform_open_knots(4, 2), uniform_open_knots(5, 3)):
            p = kv.degree
            for knot_idx in kv.span_starts[1:]:
                t = kv.knots[knot_idx]
                right = eval_basis_derivs(kv, t, 0, span=int(knot_idx))[0]
                left = eval_basis_derivs(kv, t, 0, span=int(knot_idx - 1))[0]
                # overlap: functions knot_idx - p .. knot_idx - 1
                np.testing.assert_allclose(right[:-1], left[1:], atol=1e-12)
                assert abs(left[0]) <= 1e-12  # function ending at this knot
                assert abs(right[-1]) <= 1e-12  # function starting here

    def test_constrained_spaces_vanish_at_ends(self):
        for kv in KVS:
            if kv.num_basis >= 3:
                both = SplineSpace1D(kv, "zero_both_ends")
                assert np.all(np.abs(both.collocation_matrix([0.0], 0)) <= 1e-14)
                assert np.all(np.abs(both.collocation_matrix([1.0], 0)) <= 1e-14)
            leftc = SplineSpace1D(kv, "zero_left_end")
            assert np.all(np.abs(leftc.collocation_matrix([0.0], 0)) <= 1e-14)

    def test_constraint_needs_enough_functions(self):
        kv = KnotVector([0, 0, 1, 1], 1)  # two basis functions
        with pytest.raises(ValueError, match="removes every"):
            SplineSpace1D(kv, "zero_both_ends")

    def test_dof_counts(self):
        kv = uniform_open_knots(6, 2)  # l = 8
        assert SplineSpace1D(kv, "none").dof_count == 8
        assert SplineSpace1D(kv, "zero_both_ends").dof_count == 6
        assert SplineSpace1D(kv, "zero_left_end").dof_count == 7

    def test_unknown_constraint_rejected(self):
        with pytest.raises(ValueError):
            SplineSpace1D(KVS[0], "clamped")
