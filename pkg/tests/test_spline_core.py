"""Tests for clamped knot vectors and B-spline evaluation."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.interpolate import BSpline

from requnet.spline_core import (
    BSplineId,
    b_table,
    deriv_bound,
    eval_b,
    eval_n,
    eval_n_deriv,
    make_knots,
    n_deriv_table,
    n_table,
    span_index,
)


def scipy_basis(q, K, x):
    """Normalized basis from scipy, used as an independent oracle."""
    t = make_knots(q, K).array
    x = np.asarray(x, dtype=float)
    # scipy evaluates half-open spans; nudge x = 1 to its left limit
    xe = np.where(x == 1.0, np.nextafter(1.0, 0.0), x)
    return BSpline.design_matrix(xe, t, q).toarray()


class TestMakeKnots:
    """Clamped uniform knot construction."""

    @pytest.mark.parametrize(
        "q,K,expected",
        [
            (2, 2, (0, 0, 0, 0.5, 1, 1, 1)),
            (2, 4, (0, 0, 0, 0.25, 0.5, 0.75, 1, 1, 1)),
            (0, 2, (0, 0.5, 1)),
        ],
    )
    def test_examples(self, q, K, expected):
        assert make_knots(q, K).knots == pytest.approx(expected, abs=0)

    @given(st.integers(0, 6), st.integers(2, 40))
    def test_invariants(self, q, K):
        kv = make_knots(q, K)
        a = kv.array
        assert len(a) == 2 * q + K + 1
        assert np.all(a[: q + 1] == 0) and np.all(a[q + K :] == 1)
        assert np.all(np.diff(a) >= 0)
        # 1-based interior knots a_{q+1+j} = j / K
        for j in range(1, K):
            assert kv.a(q + 1 + j) == j / K

    @pytest.mark.parametrize("q,K", [(-1, 4), (2, 1), (0, 0)])
    def test_rejects_bad_input(self, q, K):
        with pytest.raises(ValueError):
            make_knots(q, K)

    def test_deterministic(self):
        assert make_knots(3, 7) == make_knots(3, 7)


class TestEvalB:
    """Unnormalized recursion."""

    def test_base_case_interior(self):
        kv = make_knots(2, 2)
        # m=0, j=q+1 lives on [0, 1/2) with height K
        assert eval_b(BSplineId(0, 3), kv, 0.25) == 2.0

    def test_quadratic_closed_form_at_zero(self):
        kv = make_knots(2, 2)
        assert eval_b(BSplineId(2, 1), kv, 0.0) == pytest.approx(2.0, abs=1e-15)

    def test_outside_support(self):
        assert eval_b(BSplineId(2, 1), make_knots(2, 2), 0.9) == 0.0

    @pytest.mark.parametrize("q", [2, 3, 4])
    @pytest.mark.parametrize("K", [2, 4, 8, 16])
    def test_first_and_last_closed_forms(self, q, K):
        """B_{q-1}^2 = K^3 (1/K - x)_+^2 and its mirror image."""
        kv = make_knots(q, K)
        x = np.linspace(0, 1, 1001)
        first = K**3 * np.maximum(1 / K - x, 0) ** 2
        last = K**3 * np.maximum(x - 1 + 1 / K, 0) ** 2
        tab = b_table(kv, 2, x)
        np.testing.assert_allclose(tab[:, q - 2], first, atol=1e-12)
        np.testing.assert_allclose(tab[:, q + K - 1], last, atol=1e-12)

    def test_rejects_bad_index(self):
        kv = make_knots(2, 4)
        with pytest.raises(ValueError):
            eval_b(BSplineId(3, 1), kv, 0.5)
        with pytest.raises(ValueError):
            eval_b(BSplineId(2, kv.n_splines(2) + 1), kv, 0.5)
        with pytest.raises(ValueError):
            eval_b(BSplineId(2, 0), kv, 0.5)

    def test_rejects_points_outside_cube(self):
        with pytest.raises(ValueError):
            eval_b(BSplineId(1, 1), make_knots(2, 4), 1.5)


class TestEvalN:
    """Normalized splines against scipy."""

    @pytest.mark.parametrize("q", [0, 1, 2, 3, 5])
    @pytest.mark.parametrize("K", [2, 3, 8])
    def test_matches_scipy(self, q, K):
        x = np.linspace(0, 1, 777)
        np.testing.assert_allclose(n_table(make_knots(q, K), q, x), scipy_basis(q, K, x), atol=1e-13)

    def test_example(self):
        assert eval_n(BSplineId(2, 1), make_knots(2, 2), 0.0) == pytest.approx(1.0, abs=1e-15)

    @pytest.mark.parametrize("q", [2, 3, 4])
    @pytest.mark.parametrize("K", [2, 4, 8, 16])
    def test_partition_of_unity(self, q, K):
        x = np.arange(2001) / 2001
        tab = n_table(make_knots(q, K), q, x)
        assert np.max(np.abs(tab.sum(axis=1) - 1)) <= 1e-12

    def test_partition_of_unity_at_one(self):
        tab = n_table(make_knots(3, 5), 3, [1.0])
        assert tab.sum() == pytest.approx(1.0, abs=1e-14)
        assert tab[0, -1] == pytest.approx(1.0)

    @given(st.integers(1, 5), st.integers(2, 12), st.floats(0, 1))
    @settings(max_examples=200)
    def test_support_and_bounds(self, q, K, x):
        kv = make_knots(q, K)
        row = n_table(kv, q, [x])[0]
        assert np.all(row >= -1e-15) and np.all(row <= 1 + 1e-15)
        for j in range(1, kv.n_basis + 1):
            lo, hi = kv.support(q, j)
            inside = lo <= x < hi or (x == 1.0 and hi == 1.0 and lo < hi)
            if not inside:
                assert row[j - 1] == 0.0

    def test_scalar_and_array_agree(self):
        kv = make_knots(3, 6)
        sid = BSplineId(3, 4)
        xs = np.array([0.1, 0.5, 0.9])
        assert [eval_n(sid, kv, float(t)) for t in xs] == pytest.approx(list(eval_n(sid, kv, xs)))


class TestEvalNDeriv:
    """Derivatives against scipy and finite differences."""

    def test_order_zero_is_value(self):
        kv = make_knots(2, 4)
        sid = BSplineId(2, 3)
        assert eval_n_deriv(sid, kv, 0.3, 0) == eval_n(sid, kv, 0.3)

    @pytest.mark.parametrize("q,K", [(2, 4), (3, 8), (4, 5)])
    def test_matches_scipy(self, q, K):
        x = np.linspace(0, 1, 301)[:-1]
        t = make_knots(q, K).array
        for order in range(1, q + 1):
            expect = np.stack(
                [BSpline(t, np.eye(q + K)[j], q)(x, nu=order) for j in range(q + K)], axis=1
            )
            got = n_deriv_table(make_knots(q, K), q, x, order)
            # scipy is left-continuous at knots for the top derivative; skip knots there
            keep = np.ones(len(x), bool) if order < q else np.abs(x * K - np.round(x * K)) > 1e-9
            np.testing.assert_allclose(got[keep], expect[keep], atol=1e-8 * K**order)

    @pytest.mark.parametrize("K", [2, 4, 8])
    def test_midpoint_finite_difference(self, K):
        q = 2
        kv = make_knots(q, K)
        h = 1e-5
        for cell in range(K):
            x = (cell + 0.5) / K
            for j in range(1, q + K + 1):
                sid = BSplineId(q, j)
                fd = (eval_n(sid, kv, x + h) - eval_n(sid, kv, x - h)) / (2 * h)
                got = eval_n_deriv(sid, kv, x, 1)
                assert got == pytest.approx(fd, rel=1e-6, abs=1e-9)

    @pytest.mark.parametrize("q", [2, 3, 4])
    @pytest.mark.parametrize("K", [2, 8])
    def test_uniform_bound(self, q, K):
        x = np.linspace(0, 1, 2001)
        for order in range(q + 1):
            sup = np.max(np.abs(n_deriv_table(make_knots(q, K), q, x, order)))
            assert sup <= deriv_bound(K, q, order) * (1 + 1e-12)

    def test_rejects_order_above_m(self):
        with pytest.raises(ValueError):
            eval_n_deriv(BSplineId(2, 1), make_knots(2, 4), 0.5, 3)


class TestSpanIndex:
    def test_cells(self):
        kv = make_knots(2, 4)
        assert list(span_index(kv, [0.0, 0.24, 0.25, 0.99, 1.0])) == [2, 2, 3, 5, 5]

    def test_bound_formula(self):
        assert deriv_bound(3, 4, 2) == 36 * math.factorial(4) / math.factorial(2)
