import math

import numpy as np
import pytest

from hamjump.exprrate import (
    Interval,
    RateExpressionError,
    _interval_cos,
    _interval_sin,
    compile_rate_expression,
)


class TestIntervalTrig:
    def test_sin_contains_true_range(self, rng):
        for _ in range(200):
            lo = float(rng.uniform(-20, 20))
            hi = lo + float(rng.uniform(0, 10))
            iv = _interval_sin(Interval(lo, hi))
            samples = np.sin(np.linspace(lo, hi, 500))
            assert iv.lo <= samples.min() + 1e-12
            assert iv.hi >= samples.max() - 1e-12

    def test_sin_peak_detection(self):
        iv = _interval_sin(Interval(1.0, 2.0))  # contains pi/2
        assert iv.hi == 1.0
        assert iv.lo == pytest.approx(min(math.sin(1.0), math.sin(2.0)))

    def test_sin_unbounded_is_unit(self):
        iv = _interval_sin(Interval(0.0, math.inf))
        assert (iv.lo, iv.hi) == (-1.0, 1.0)

    def test_cos_contains_true_range(self, rng):
        for _ in range(100):
            lo = float(rng.uniform(-20, 20))
            hi = lo + float(rng.uniform(0, 10))
            iv = _interval_cos(Interval(lo, hi))
            samples = np.cos(np.linspace(lo, hi, 500))
            assert iv.lo <= samples.min() + 1e-12
            assert iv.hi >= samples.max() - 1e-12


class TestIntervalArithmetic:
    def test_zero_times_unbounded(self):
        z = Interval(0.0, 0.0)
        half_line = Interval(0.0, math.inf)
        prod = z * half_line
        assert (prod.lo, prod.hi) == (0.0, 0.0)

    def test_product_corners(self):
        a = Interval(-2.0, 3.0)
        b = Interval(-1.0, 4.0)
        prod = a * b
        assert prod.lo == -8.0 and prod.hi == 12.0


class TestCompile:
    def test_bounds_enclose_samples(self, rng):
        compiled = compile_rate_expression("2 + 0.5*sin(x_norm + v_norm) - 0.25*cos(v_norm)")
        s = rng.uniform(0, 50, 2000)
        t = rng.uniform(0, 50, 2000)
        vals = compiled.evaluate(s, t)
        assert np.all(vals >= compiled.lambda1 - 1e-12)
        assert np.all(vals <= compiled.lambda2 + 1e-12)

    def test_lipschitz_bound_holds(self, rng):
        compiled = compile_rate_expression("2 + 0.5*sin(3*x_norm) + 0.1*cos(x_norm*0 + v_norm)")
        s = rng.uniform(0, 20, 1000)
        t = rng.uniform(0, 20, 1000)
        s2 = s + rng.normal(scale=0.5, size=1000)
        t2 = t + rng.normal(scale=0.5, size=1000)
        s2, t2 = np.abs(s2), np.abs(t2)
        gap = np.abs(compiled.evaluate(s, t) - compiled.evaluate(s2, t2))
        dist = np.abs(s - s2) + np.abs(t - t2)
        assert np.all(gap <= compiled.lambda_lip * dist + 1e-9)

    def test_derivative_bound_is_scaled(self):
        compiled = compile_rate_expression("5 + sin(3*x_norm)")
        assert compiled.lambda_lip == pytest.approx(3.0)
        assert compiled.lambda1 == pytest.approx(4.0)
        assert compiled.lambda2 == pytest.approx(6.0)

    def test_constant_expression(self):
        compiled = compile_rate_expression("1.5")
        assert compiled.lambda1 == compiled.lambda2 == 1.5
        assert compiled.lambda_lip == 0.0

    def test_unbounded_detected(self):
        compiled = compile_rate_expression("1 + x_norm")
        assert compiled.lambda2 == math.inf

    @pytest.mark.parametrize(
        "expr",
        [
            "1 / v_norm",
            "exp(x_norm)",
            "x_norm ** 2",
            "__import__('os')",
            "unknown_name + 1",
            "sin(x_norm, v_norm)",
            "1 if x_norm else 2",
        ],
    )
    def test_grammar_rejections(self, expr):
        with pytest.raises(RateExpressionError):
            compile_rate_expression(expr)

    def test_syntax_error(self):
        with pytest.raises(RateExpressionError):
            compile_rate_expression("2 +")
