import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qfisher import mathkit
from qfisher.errors import DomainError


@pytest.mark.parametrize("x, expected", [(1.0, 0.0), (0.5, 0.5723649429247001), (5.0, math.log(24))])
def test_log_gamma_examples(x, expected):
    assert mathkit.log_gamma(x) == pytest.approx(expected, rel=1e-13, abs=1e-15)


@given(st.floats(1e-3, 1e6))
def test_log_gamma_against_mpmath(x):
    exact = float(mpmath.loggamma(mpmath.mpf(x)))
    assert mathkit.log_gamma(x) == pytest.approx(exact, rel=1e-13, abs=1e-14)


@pytest.mark.parametrize("x", [0.0, -1.0, float("nan")])
def test_log_gamma_rejects_nonpositive(x):
    with pytest.raises(DomainError):
        mathkit.log_gamma(x)


@pytest.mark.parametrize("x, y, expected", [(1, 1, 1.0), (0.5, 0.5, math.pi), (2, 3, 1 / 12)])
def test_beta_examples(x, y, expected):
    assert mathkit.beta_fn(x, y) == pytest.approx(expected, rel=1e-13)


def test_beta_rejects_nonpositive():
    with pytest.raises(DomainError):
        mathkit.beta_fn(0.0, 1.0)


@given(st.floats(1e-2, 50), st.floats(1e-2, 50))
def test_beta_is_symmetric_bit_for_bit(x, y):
    assert mathkit.beta_fn(x, y) == mathkit.beta_fn(y, x)


@given(st.floats(1e-2, 50), st.floats(1e-2, 50))
def test_beta_against_gamma_ratio(x, y):
    exact = float(mpmath.beta(x, y))
    assert mathkit.beta_fn(x, y) == pytest.approx(exact, rel=1e-11)


@pytest.mark.parametrize("n, expected", [(1, 2.0), (2, math.pi), (3, 4 * math.pi / 3)])
def test_unit_ball_volume_examples(n, expected):
    assert mathkit.unit_ball_volume(n) == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("n", [0, -2, 1.5])
def test_unit_ball_volume_rejects_bad_dimension(n):
    with pytest.raises(DomainError):
        mathkit.unit_ball_volume(n)


@pytest.mark.parametrize("n", range(3, 30))
def test_unit_ball_volume_recursion(n):
    lhs = mathkit.unit_ball_volume(n)
    rhs = mathkit.unit_ball_volume(n - 2) * 2 * math.pi / n
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_q_exp_examples():
    assert mathkit.q_exp(1.0, 1.0) == pytest.approx(math.e)
    assert mathkit.q_exp(0.5, 1.0) == pytest.approx(2.25)
    for q in (0.3, 1.0, 2.0, 3.5):
        assert mathkit.q_exp(q, 0.0) == 1.0


def test_q_exp_clamps_at_zero():
    # q = 2: (1 - x)_+^(-1) would be negative for x > 1 without the clamp
    assert mathkit.q_exp(0.5, -3.0) == 0.0


def test_q_log_examples():
    assert mathkit.q_log(1.0, math.e) == pytest.approx(1.0)
    assert mathkit.q_log(2.0, 2.0) == pytest.approx(0.5)
    for q in (0.3, 1.0, 2.0):
        assert mathkit.q_log(q, 1.0) == 0.0


def test_q_log_rejects_nonpositive():
    with pytest.raises(DomainError):
        mathkit.q_log(2.0, 0.0)


@given(st.floats(0.05, 3.0), st.floats(-5, 5))
def test_q_log_inverts_q_exp(q, x):
    if not 1 + (1 - q) * x > 1e-6:
        return
    assert mathkit.q_log(q, mathkit.q_exp(q, x)) == pytest.approx(x, abs=1e-10, rel=1e-10)


@given(st.floats(-10, 10), st.sampled_from([1 - 1e-8, 1 + 1e-8]))
def test_q_exp_continuous_at_one(x, q):
    assert abs(mathkit.q_exp(q, x) - math.exp(x)) <= 1e-6 * math.exp(x)


def test_q_exp_takes_classical_branch_near_one():
    assert mathkit.q_exp(1 + 1e-13, 2.0) == math.exp(2.0)


def test_q_functions_act_elementwise():
    x = np.array([0.0, 0.5, 1.0])
    np.testing.assert_allclose(mathkit.q_exp(1.0, x), np.exp(x))
    np.testing.assert_allclose(mathkit.q_log(1.0, np.exp(x)), x, atol=1e-15)


@given(st.floats(0.05, 20), st.floats(1e4, 1e9))
def test_log_beta_with_one_large_argument(x, y):
    mpmath.mp.dps = 30
    exact = float(mpmath.log(mpmath.beta(x, y)))
    assert mathkit.log_beta(x, y) == pytest.approx(exact, abs=1e-12, rel=1e-13)
