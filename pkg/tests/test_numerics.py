import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from glmphase.numerics import (BracketError, FixedPointDivergenceError,
                               FixedPointOptions, NonFiniteIntegrandError,
                               bisect, damped_fixed_point, gauss_hermite,
                               gauss_panels, integrate_1d)

GAUSSIAN_MOMENTS = {0: 1.0, 1: 0.0, 2: 1.0, 3: 0.0, 4: 3.0, 5: 0.0,
                    6: 15.0, 7: 0.0, 8: 105.0, 9: 0.0, 10: 945.0}


class TestGaussHermite:
    def test_order_one_is_the_mean(self):
        rule = gauss_hermite(1)
        assert rule.nodes == pytest.approx([0.0])
        assert rule.weights == pytest.approx([1.0])

    def test_order_two_matches_second_moment(self):
        rule = gauss_hermite(2)
        assert sorted(rule.nodes) == pytest.approx([-1.0, 1.0])
        assert rule.weights == pytest.approx([0.5, 0.5])

    def test_fourth_moment(self):
        rule = gauss_hermite(5)
        assert rule.expect(lambda z: z ** 4) == pytest.approx(3.0, abs=1e-12)

    def test_rejects_zero_order(self):
        with pytest.raises(ValueError):
            gauss_hermite(0)

    def test_weights_sum_to_one(self):
        for order in (1, 2, 7, 99):
            rule = gauss_hermite(order)
            assert rule.weights.sum() == pytest.approx(1.0, abs=1e-12)

    def test_second_moment_normalization(self):
        for order in (2, 10, 99):
            rule = gauss_hermite(order)
            assert rule.expect(lambda z: z * z) == pytest.approx(1.0, abs=1e-10)

    @pytest.mark.parametrize("order", [3, 6, 99])
    def test_exact_monomials_up_to_degree(self, order):
        rule = gauss_hermite(order)
        for k in range(0, min(2 * order - 1, 10) + 1):
            assert rule.expect(lambda z: z ** k) == pytest.approx(
                GAUSSIAN_MOMENTS[k], abs=1e-10 * max(1.0, GAUSSIAN_MOMENTS[k]))


class TestGaussPanels:
    def test_plain_panels_normalize(self):
        rule = gauss_panels()
        assert rule.weights.sum() == pytest.approx(1.0, abs=1e-10)
        assert rule.expect(lambda z: z * z) == pytest.approx(1.0, abs=1e-10)

    def test_resolves_narrow_feature(self):
        # indicator of a width-1e-4 window: mass = width * pdf
        c, w = 0.7, 1e-4
        rule = gauss_panels((c,), (w,))
        est = rule.expect(lambda z: ((z > c - w) & (z < c + w)).astype(float))
        exact = 2 * w * math.exp(-c * c / 2) / math.sqrt(2 * math.pi)
        assert est == pytest.approx(exact, rel=1e-6)


class TestIntegrate1d:
    def test_linear(self):
        assert integrate_1d(lambda x: x, 0.0, 1.0) == pytest.approx(0.5)

    def test_gaussian_normalization(self):
        f = lambda y: math.exp(-y * y / 2) / math.sqrt(2 * math.pi)
        assert integrate_1d(f, -8.0, 8.0, tol=1e-12) == pytest.approx(1.0, abs=1e-10)

    def test_sine(self):
        assert integrate_1d(math.sin, 0.0, math.pi, tol=1e-10) == pytest.approx(
            2.0, abs=1e-9)

    def test_nonfinite_integrand_reports_abscissa(self):
        def f(x):
            return math.inf if x > 0.5 else 1.0
        with pytest.raises(NonFiniteIntegrandError) as exc:
            integrate_1d(f, 0.0, 1.0)
        assert exc.value.x > 0.5

    def test_bad_interval(self):
        with pytest.raises(ValueError):
            integrate_1d(lambda x: x, 1.0, 0.0)

    def test_halving_tol_bounded_work_and_error(self):
        # smooth integrand: halving tol at most doubles evaluations and the
        # reported error does not increase
        exact = 2.0
        prev_err, prev_count = None, None
        for tol in (1e-6, 5e-7, 2.5e-7):
            count = 0
            def f(x):
                nonlocal count
                count += 1
                return math.sin(x)
            err = abs(integrate_1d(f, 0.0, math.pi, tol=tol) - exact)
            if prev_err is not None:
                assert count <= 2.05 * prev_count + 8
                assert err <= prev_err + 1e-15
            prev_err, prev_count = err, count


class TestBisect:
    def test_linear_root(self):
        assert bisect(lambda x: x - 2.0, 0.0, 5.0, tol=1e-12) == pytest.approx(2.0)

    def test_sqrt_two(self):
        root = bisect(lambda x: x * x - 2.0, 0.0, 2.0, tol=1e-10)
        assert root == pytest.approx(math.sqrt(2.0), abs=1e-9)

    def test_atanh_half(self):
        # closed-form inverse as the oracle
        root = bisect(lambda x: math.tanh(x) - 0.5, 0.0, 3.0, tol=1e-12)
        assert root == pytest.approx(math.atanh(0.5), abs=1e-10)

    def test_no_sign_change(self):
        with pytest.raises(BracketError):
            bisect(lambda x: x + 1.0, 0.0, 1.0)

    @given(st.floats(min_value=-3.0, max_value=3.0))
    def test_finds_planted_root(self, root):
        got = bisect(lambda x: x - root, -4.0, 4.0, tol=1e-12)
        assert got == pytest.approx(root, abs=1e-10)


class TestDampedFixedPoint:
    def test_contraction_to_zero(self):
        res = damped_fixed_point(lambda x: 0.5 * x, 1.0,
                                 FixedPointOptions(tol=1e-12, max_iter=200))
        assert res.converged
        assert res.x == pytest.approx(0.0, abs=1e-10)

    def test_dottie_number(self):
        res = damped_fixed_point(math.cos, 1.0,
                                 FixedPointOptions(tol=1e-13, max_iter=500))
        assert res.converged
        assert res.x == pytest.approx(0.7390851332151607, abs=1e-9)

    def test_identity_converges_immediately(self):
        res = damped_fixed_point(lambda x: x, 0.3, FixedPointOptions())
        assert res.converged and res.iterations == 1
        assert res.x == 0.3

    def test_divergence_carries_trajectory(self):
        with pytest.raises(FixedPointDivergenceError) as exc:
            damped_fixed_point(lambda x: x * 1e300, 1.0,
                               FixedPointOptions(max_iter=10))
        assert len(exc.value.trajectory) >= 1

    @given(st.floats(min_value=0.0, max_value=0.9))
    def test_damping_independent_fixed_point(self, damping):
        # contraction F: fixed point x* = 2 regardless of damping
        opts = FixedPointOptions(damping=damping, tol=1e-12, max_iter=5000)
        res = damped_fixed_point(lambda x: 0.5 * x + 1.0, 0.0, opts)
        assert res.converged
        assert res.x == pytest.approx(2.0, abs=1e-9)

    def test_option_validation(self):
        with pytest.raises(ValueError):
            FixedPointOptions(damping=1.0)
        with pytest.raises(ValueError):
            FixedPointOptions(tol=0.0)
        with pytest.raises(ValueError):
            FixedPointOptions(max_iter=0)
