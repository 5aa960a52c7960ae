import math

import numpy as np
import pytest
from scipy import special

from app.utils.gamma import lower_gamma_window, regularized_gamma


@pytest.mark.parametrize("s", [1, 2, 3, 5, 8])
def test_regularized_pair_sums_to_one(s):
    x = np.array([0.0, 1e-9, 0.3, 2.0, s + 1.0, 15.0, 80.0])
    p, q = regularized_gamma(s, x)
    assert np.allclose(p + q, 1.0, rtol=0, atol=1e-14)


@pytest.mark.parametrize("s", [1, 2, 3, 4, 6])
def test_matches_scipy(s):
    x = np.array([1e-6, 0.01, 0.5, 1.7, 4.0, 9.0, 30.0])
    p, q = regularized_gamma(s, x)
    assert np.allclose(p, special.gammainc(s, x), rtol=1e-12, atol=0)
    assert np.allclose(q, special.gammaincc(s, x), rtol=1e-12, atol=1e-300)


def test_window_of_order_one_is_exponential_difference():
    a, b = 0.25, 3.0
    assert float(lower_gamma_window(1, a, b)) == pytest.approx(math.exp(-a) - math.exp(-b), rel=1e-13)


def test_window_against_scipy():
    rng = np.random.default_rng(5)
    for s in range(1, 6):
        a = rng.uniform(0, 5, size=20)
        b = a + rng.uniform(0, 10, size=20)
        expected = math.gamma(s) * (special.gammainc(s, b) - special.gammainc(s, a))
        assert np.allclose(lower_gamma_window(s, a, b), expected, rtol=1e-11, atol=1e-300)


def test_window_keeps_relative_accuracy_for_tiny_arguments():
    a, b = 1e-12, 2e-12
    assert float(lower_gamma_window(2, a, b)) == pytest.approx((b**2 - a**2) / 2, rel=1e-10)


def test_window_far_in_the_tail():
    # Both endpoints above s + 1: the difference of upper sums stays accurate.
    value = float(lower_gamma_window(3, 40.0, 41.0))
    expected = 2.0 * (special.gammaincc(3, 40.0) - special.gammaincc(3, 41.0))
    assert value == pytest.approx(expected, rel=1e-10)


def test_rejects_non_integer_order():
    with pytest.raises(ValueError):
        regularized_gamma(0, 1.0)
    with pytest.raises(ValueError):
        regularized_gamma(2.5, 1.0)


def test_rejects_negative_argument():
    with pytest.raises(ValueError):
        regularized_gamma(2, -0.1)
