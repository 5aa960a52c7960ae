import numpy as np
import pytest

from app.services.testfunctions import edge_polynomial, gaussian_test_function, polynomial


def test_edge_polynomial_expands_powers():
    assert edge_polynomial(1, 2, {(1, 1): 2}) == {(2, 0, 0, 0): 1, (1, 1, 0, 0): -2, (0, 2, 0, 0): 1}


def test_closing_edge_wraps_around():
    assert edge_polynomial(1, 2, {(2, 1): 1}) == {(1, 0, 0, 0): 1, (0, 1, 0, 0): -1}


def test_edge_polynomial_evaluates_to_the_product():
    powers = {(1, 1): 1, (2, 2): 2}
    phi = gaussian_test_function(2, 3, poly=edge_polynomial(2, 3, powers))
    rng = np.random.default_rng(5)
    z = rng.normal(size=(4, 3, 2)) + 1j * rng.normal(size=(4, 3, 2))
    expected = (z[:, 1, 0] - z[:, 0, 0]) * (z[:, 2, 1] - z[:, 1, 1]) ** 2
    assert np.allclose(polynomial(phi, z), expected)


def test_empty_powers_give_the_constant():
    assert edge_polynomial(1, 3, {}) == {(0,) * 6: 1}


@pytest.mark.parametrize("powers", [{(3, 1): 1}, {(1, 2): 1}, {(1, 1): -1}])
def test_edge_polynomial_rejects_bad_factors(powers):
    with pytest.raises(ValueError):
        edge_polynomial(1, 2, powers)
