"""Tests for the time weights and the scalar inequalities built on them."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from screened_vlasov.weights import (
    envelope_integral_margin,
    gamma_eval,
    log_inequality_margin,
    phi_eval,
    phi_limit,
)

from conftest import T_GRID


class TestGamma:
    def test_value_at_zero(self):
        value, slope, curvature = gamma_eval(0.0)
        assert value == 1.0
        assert slope == 1.0
        assert curvature == -0.01

    def test_value_at_one_matches_formula(self):
        # Frozen: 0.01*log(2) + 0.99 + 1 evaluated at 40-digit precision.
        value, slope, curvature = gamma_eval(1.0)
        assert value == pytest.approx(1.9969314718055995, abs=1e-15)
        assert slope == pytest.approx(0.995, abs=1e-16)
        assert curvature == pytest.approx(-0.0025, abs=1e-18)

    def test_comparable_to_linear_clock(self):
        t = np.linspace(0.0, 1.0e4, 4001)
        value, slope, curvature = gamma_eval(t)
        ratio = value / (t + 1.0)
        assert np.all(ratio > 0.99)
        assert np.all(ratio <= 1.0 + 1e-15)
        assert np.all(curvature < 0.0)
        assert np.all(np.diff(slope) < 0.0)

    def test_vectorized_matches_scalar(self):
        t = np.array([0.0, 0.5, 2.0, 40.0])
        vec = gamma_eval(t)
        for i, ti in enumerate(t):
            scal = gamma_eval(float(ti))
            assert vec.value[i] == scal.value
            assert vec.slope[i] == scal.slope
            assert vec.curvature[i] == scal.curvature

    def test_rejects_negative_time(self):
        with pytest.raises(ValueError):
            gamma_eval(-0.1)


class TestPhi:
    def test_low_orders_are_one(self):
        t = np.linspace(0.0, 100.0, 57)
        for n in (0, 1, 2):
            assert np.all(phi_eval(n, t) == 1.0)

    def test_frozen_values(self):
        # phi_3(4) = exp(2/5), phi_4(4) = exp(2/3); sqrt(4) = 2 exactly.
        assert phi_eval(3, 4.0) == pytest.approx(math.exp(0.4), rel=1e-15)
        assert phi_eval(4, 4.0) == pytest.approx(math.exp(2.0 / 3.0), rel=1e-15)

    def test_one_at_time_zero(self):
        for n in range(0, 12):
            assert phi_eval(n, 0.0) == 1.0

    def test_nondecreasing_in_time_and_order(self):
        t = np.linspace(0.0, 400.0, 801)
        previous = np.ones_like(t)
        for n in range(0, 12):
            current = np.asarray(phi_eval(n, t))
            assert np.all(np.diff(current) >= 0.0)
            assert np.all(current >= previous - 1e-15)
            previous = current

    def test_large_time_limit(self):
        for n in range(0, 9):
            assert phi_eval(n, 1.0e16) == pytest.approx(phi_limit(n), rel=1e-6)

    def test_ratio_log_concavity_in_order(self):
        # phi_{n-1} * phi_{n+1} <= phi_n**2 for n >= 3.
        for n in range(3, 20):
            for t in T_GRID:
                gap = phi_eval(n, t) ** 2 - phi_eval(n - 1, t) * phi_eval(n + 1, t)
                assert gap >= -1e-15

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            phi_eval(-1, 1.0)
        with pytest.raises(ValueError):
            phi_eval(3, -1.0)


class TestLogInequality:
    def test_frozen_value(self):
        # Frozen: log(2) - 2/3 at 40-digit precision = 0.026480513893278643.
        assert log_inequality_margin(2.0, 1.0) == pytest.approx(
            0.026480513893278643, abs=1e-15
        )

    def test_equality_at_equal_arguments(self):
        assert log_inequality_margin(3.7, 3.7) == 0.0

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            log_inequality_margin(1.0, 2.0)
        with pytest.raises(ValueError):
            log_inequality_margin(1.0, 0.0)

    @settings(max_examples=200, deadline=None)
    @given(
        b=st.floats(min_value=1e-6, max_value=1e6),
        factor=st.floats(min_value=1.0, max_value=1e6),
    )
    def test_nonnegative_on_domain(self, b, factor):
        assert log_inequality_margin(b * factor, b) >= -1e-12


class TestEnvelopeIntegral:
    def test_rhs_anchors(self):
        # min(50/9*n^2*phi_n, 500*phi_{n-1}) at n=1, 2 where phi factors are 1.
        assert envelope_integral_margin(1, 4.0).rhs == pytest.approx(50.0 / 9.0, rel=1e-15)
        assert envelope_integral_margin(2, 25.0).rhs == pytest.approx(200.0 / 9.0, rel=1e-15)

    def test_lhs_matches_independent_quadrature(self):
        # Frozen: mpmath quad at 40-digit precision with the crossover split.
        assert envelope_integral_margin(1, 4.0).lhs == pytest.approx(
            1.6579050746243502, rel=1e-9
        )
        assert envelope_integral_margin(2, 25.0).lhs == pytest.approx(
            12.88307094389869, rel=1e-9
        )

    def test_zero_time(self):
        result = envelope_integral_margin(3, 0.0)
        assert result.lhs == 0.0
        assert result.margin == result.rhs

    def test_margin_positive_on_sweep(self):
        for n in (1, 2, 3, 5, 10, 20):
            for t in T_GRID:
                result = envelope_integral_margin(n, t)
                assert result.margin >= -1e-8 * result.rhs, (n, t)

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            envelope_integral_margin(0, 1.0)
        with pytest.raises(ValueError):
            envelope_integral_margin(2, -1.0)
