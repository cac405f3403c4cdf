import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rayfem.special import (
    DomainError,
    bessel_j,
    bessel_j_orders,
    bessel_j_prime,
    bessel_y0,
    bessel_y1,
    hankel1_0,
    hankel1_1,
)

mpmath.mp.dps = 40


def mp_j(n, x):
    return float(mpmath.besselj(n, x))


def mp_y(n, x):
    return float(mpmath.bessely(n, x))


class TestBesselJ:
    def test_origin(self):
        assert bessel_j(0, 0.0) == 1.0
        assert bessel_j(1, 0.0) == 0.0
        assert bessel_j(7, 0.0) == 0.0

    def test_first_zero(self):
        assert abs(bessel_j(0, 2.4048255577)) < 1e-9

    def test_negative_order_rejected(self):
        with pytest.raises(DomainError):
            bessel_j(-1, 1.0)
        with pytest.raises(DomainError):
            bessel_j(1.5, 1.0)

    def test_negative_argument_rejected(self):
        with pytest.raises(DomainError):
            bessel_j(0, -1.0)

    @pytest.mark.parametrize("x", [1e-3, 0.5, 3.9, 4.1, 10.0, 24.9, 25.1, 77.7, 500.0, 1e4])
    @pytest.mark.parametrize("n", [0, 1, 2, 5, 17, 40])
    def test_against_mpmath(self, n, x):
        ref = mp_j(n, x)
        got = bessel_j(n, x)
        # absolute floor relative to the envelope, since J has zeros
        scale = max(abs(ref), 1e-3 * math.sqrt(2 / (math.pi * x)) if x > 1 else abs(ref))
        assert abs(got - ref) <= 1e-10 * max(scale, 1e-300) + 1e-300

    def test_frozen_values(self):
        # mpmath at 40 digits
        assert bessel_j(3, 5.0) == pytest.approx(0.364831230613667, rel=1e-12)
        assert bessel_j(0, 100.0) == pytest.approx(0.019985850304223122, rel=1e-10)
        assert bessel_j(25, 30.0) == pytest.approx(0.08429274064303173, rel=1e-10)

    def test_orders_table_matches_single(self):
        x = np.array([0.3, 6.0, 31.0])
        table = bessel_j_orders(30, x)
        assert table.shape == (31, 3)
        for n in (0, 4, 30):
            np.testing.assert_allclose(table[n], [bessel_j(n, v) for v in x], rtol=1e-12, atol=1e-300)

    def test_miller_agrees_with_series(self):
        # recurrence regime vs the arbitrary-precision series for x <= 20, orders <= 50
        for x in (4.5, 9.0, 15.0, 20.0):
            table = bessel_j_orders(50, x)
            ref = np.array([mp_j(n, x) for n in range(51)])
            np.testing.assert_allclose(table, ref, rtol=1e-10, atol=1e-10 * np.abs(ref).max())


class TestBesselJPrime:
    def test_order_zero_identity(self):
        for x in (0.2, 3.0, 40.0):
            assert bessel_j_prime(0, x) == -bessel_j(1, x)

    def test_order_one_at_origin(self):
        assert bessel_j_prime(1, 0.0) == pytest.approx(0.5)

    def test_finite_difference(self):
        step = 1e-5
        fd = (bessel_j(3, 5.0 + step) - bessel_j(3, 5.0 - step)) / (2 * step)
        assert abs(bessel_j_prime(3, 5.0) - fd) < 1e-7

    @pytest.mark.parametrize("x", [0.1, 1.0, 7.3, 33.0, 100.0])
    def test_wronskian(self, x):
        # J_l Y_l' - J_l' Y_l = 2/(pi x) at l = 0, with Y_0' = -Y_1
        w = bessel_j(0, x) * (-bessel_y1(x)) - bessel_j_prime(0, x) * bessel_y0(x)
        assert w == pytest.approx(2 / (math.pi * x), rel=1e-8)

    @given(st.integers(0, 40), st.floats(0.1, 100.0))
    @settings(max_examples=60, deadline=None)
    def test_recurrence_identity(self, n, x):
        # from J_n' = n/x J_n - J_{n+1} and J_{n+1}' = J_n - (n+1)/x J_{n+1}
        a, b = bessel_j(n, x), bessel_j(n + 1, x)
        lhs = b * bessel_j_prime(n, x) - a * bessel_j_prime(n + 1, x)
        rhs = (2 * n + 1) / x * a * b - a * a - b * b
        assert abs(lhs - rhs) < 1e-10


class TestHankel:
    def test_real_part_is_j0(self):
        for x in (0.5, 12.0, 3000.0):
            assert hankel1_0(x).real == bessel_j(0, x)

    def test_small_argument_oracle(self):
        ref = complex(mpmath.hankel1(0, 0.5))
        assert abs(hankel1_0(0.5) - ref) <= 1e-10 * abs(ref)

    def test_large_argument_envelope(self):
        assert abs(hankel1_0(1000.0)) == pytest.approx(math.sqrt(2 / (math.pi * 1000.0)), rel=1e-2)

    @pytest.mark.parametrize("x", [1e-3, 0.07, 2.0, 4.0, 8.5, 26.0, 250.0, 2 * math.pi * 160 * 2.8, 1e6])
    def test_relative_accuracy(self, x):
        for fn, n in ((hankel1_0, 0), (hankel1_1, 1)):
            ref = complex(mpmath.hankel1(n, x))
            assert abs(fn(x) - ref) <= 1e-10 * abs(ref)

    def test_y_functions(self):
        for x in (0.3, 5.0, 60.0):
            assert bessel_y0(x) == pytest.approx(mp_y(0, x), rel=1e-10, abs=1e-14)
            assert bessel_y1(x) == pytest.approx(mp_y(1, x), rel=1e-10, abs=1e-14)

    def test_nonpositive_rejected(self):
        with pytest.raises(DomainError):
            hankel1_0(0.0)
        with pytest.raises(DomainError):
            hankel1_0(-2.0)

    def test_vectorised(self):
        x = np.array([0.5, 5.0, 50.0])
        np.testing.assert_allclose(hankel1_0(x), [hankel1_0(v) for v in x], rtol=1e-15)
