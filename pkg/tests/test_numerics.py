import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ammrg.errors import DimensionError, NumericError
from ammrg.numerics import cosine, dot, log_sum_exp, matvec, softmax

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def mp_lse(values):
    mpmath.mp.dps = 50
    return float(mpmath.log(mpmath.fsum(mpmath.exp(mpmath.mpf(float(v))) for v in values)))


def test_lse_constant_vector():
    assert log_sum_exp([0.0, 0.0, 0.0]) == pytest.approx(math.log(3), abs=1e-15)


def test_lse_no_overflow():
    assert log_sum_exp([1000.0, 1000.0]) == pytest.approx(1000 + math.log(2), rel=1e-15)


def test_lse_matches_high_precision():
    assert log_sum_exp([1.0, 2.0, 3.0]) == pytest.approx(mp_lse([1, 2, 3]), abs=1e-14)
    assert log_sum_exp([1.0, 2.0, 3.0]) == pytest.approx(3.40760596, abs=1e-8)


def test_lse_empty_rejected():
    with pytest.raises(DimensionError):
        log_sum_exp([])


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(1, 12), elements=finite))
def test_lse_against_mpmath(v):
    assert log_sum_exp(v) == pytest.approx(mp_lse(v), rel=1e-12, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(1, 12), elements=finite), finite)
def test_lse_shift(v, c):
    assert log_sum_exp(v + c) == pytest.approx(log_sum_exp(v) + c, rel=1e-12, abs=1e-9)


def test_softmax_examples():
    np.testing.assert_allclose(softmax([0.0, 0.0]), [0.5, 0.5])
    assert softmax([123.4]).tolist() == [1.0]
    mpmath.mp.dps = 30
    e = mpmath.exp(1 / mpmath.sqrt(2))
    oracle = [float(e / (e + 1)), float(1 / (e + 1))]
    np.testing.assert_allclose(softmax([1 / math.sqrt(2), 0.0]), oracle, atol=1e-12)
    np.testing.assert_allclose(oracle, [0.669762, 0.330238], atol=1e-6)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(1, 16), elements=st.floats(-700, 700)))
def test_softmax_on_simplex(v):
    p = softmax(v)
    assert np.all(p >= 0)
    assert abs(p.sum() - 1.0) < 1e-9


def test_linear_algebra_helpers():
    v = np.array([1.0, -2.0, 3.0])
    np.testing.assert_array_equal(matvec(np.eye(3), v), v)
    assert dot(v, v) == 14.0
    assert cosine(v, v) == pytest.approx(1.0)
    assert cosine(np.zeros(3), v) == 0.0
    with pytest.raises(DimensionError):
        matvec(np.eye(3), np.ones(2))


def test_non_finite_rejected():
    with pytest.raises(NumericError):
        softmax([0.0, float("nan")])
    with pytest.raises(NumericError):
        log_sum_exp([float("inf"), 0.0])
