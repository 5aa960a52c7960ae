import random

import pytest
import sympy

from app.services.grassmann import (
    GeneratorUniverse,
    anomaly_form_factor,
    contract_eta,
    generator,
    is_zero,
    propagator_form_factor,
    scalar,
    wbar_symbol,
    wedge,
    zero,
)

U = GeneratorUniverse(d=2, k=3)


def _g(alpha, i):
    return generator(U, alpha, i)


def _random_homogeneous(rng: random.Random, degree: int):
    """Sum of a few degree-homogeneous monomials with small symbolic coefficients."""
    gens = [(a, i) for a in range(1, U.k) for i in range(1, U.d + 1)]
    element = zero(U)
    for _ in range(3):
        picks = rng.sample(gens, degree)
        term = scalar(U, rng.randint(1, 3) * wbar_symbol(*rng.choice(gens)))
        for alpha, i in picks:
            term = wedge(term, _g(alpha, i))
        element = element + term
    return element


def test_generator_count():
    assert U.size == 4
    assert GeneratorUniverse(d=4, k=5).size == 16


def test_universe_rejects_bad_sizes():
    with pytest.raises(ValueError):
        GeneratorUniverse(d=0, k=3)
    with pytest.raises(ValueError):
        GeneratorUniverse(d=2, k=1)


def test_generator_squares_to_zero():
    assert is_zero(wedge(_g(1, 1), _g(1, 1)))


def test_wedge_is_antisymmetric():
    assert wedge(_g(1, 1), _g(1, 2)).terms == (-wedge(_g(1, 2), _g(1, 1))).terms


def test_coefficients_commute():
    a = _g(1, 1).scale(wbar_symbol(1, 1))
    b = _g(1, 2).scale(wbar_symbol(1, 2))
    product = wedge(a, b)
    assert product.terms == {0b11: wbar_symbol(1, 1) * wbar_symbol(1, 2)}


def test_wedge_is_associative():
    rng = random.Random(3)
    a, b, c = (_random_homogeneous(rng, 1) for _ in range(3))
    assert wedge(wedge(a, b), c).terms == wedge(a, wedge(b, c)).terms


def test_contract_single_generator():
    assert contract_eta(1, _g(1, 1)).terms == {0: wbar_symbol(1, 1)}


def test_contract_two_form():
    result = contract_eta(1, wedge(_g(1, 1), _g(1, 2)))
    assert result.terms == {0b10: wbar_symbol(1, 1), 0b01: -wbar_symbol(1, 2)}


def test_contract_twice_vanishes():
    x = wedge(_g(1, 1), _g(1, 2)) + _g(1, 1) + wedge(wedge(_g(1, 1), _g(2, 1)), _g(1, 2))
    assert is_zero(contract_eta(1, contract_eta(1, x)))


def test_contract_rejects_closing_vertex():
    with pytest.raises(ValueError):
        contract_eta(3, _g(1, 1))


def test_contract_is_graded_derivation():
    rng = random.Random(11)
    for _ in range(10):
        p, q = rng.randint(1, 2), rng.randint(1, 2)
        a, b = _random_homogeneous(rng, p), _random_homogeneous(rng, q)
        for alpha in (1, 2):
            left = contract_eta(alpha, wedge(a, b))
            sign = -1 if p % 2 else 1
            right = wedge(contract_eta(alpha, a), b) + wedge(a, contract_eta(alpha, b)).scale(sign)
            assert (left - right).terms == {}


def test_mismatched_universes_rejected():
    other = GeneratorUniverse(d=1, k=3)
    with pytest.raises(ValueError):
        wedge(_g(1, 1), generator(other, 1, 1))


def test_is_zero_basics():
    assert is_zero(zero(U))
    assert not is_zero(_g(1, 1))


def test_d1_two_vertex_propagator_factor():
    form = propagator_form_factor(1, 2)
    assert form.terms == {0: wbar_symbol(1, 1) ** 2}
    assert form.degrees() == {0}


def test_d1_two_vertex_anomaly_factor():
    form = anomaly_form_factor(1, 2)
    assert form.terms == {1: wbar_symbol(1, 1)}
    assert form.degrees() == {1}


def test_d2_three_vertex_anomaly_factor_is_top_form():
    form = anomaly_form_factor(2, 3)
    assert set(form.terms) == {0b1111}
    assert sympy.expand(form.terms[0b1111]) != 0


@pytest.mark.parametrize("d,k", [(2, 2), (3, 3), (3, 2)])
def test_propagator_factor_vanishes_for_k_le_d(d, k):
    assert is_zero(propagator_form_factor(d, k))


@pytest.mark.parametrize("d,k", [(1, 2), (1, 3), (2, 3), (2, 4), (3, 4)])
def test_propagator_factor_nonzero_with_degree(d, k):
    form = propagator_form_factor(d, k)
    assert not is_zero(form)
    assert form.degrees() == {(d - 1) * k}


@pytest.mark.parametrize("d,k", [(2, 2), (3, 3), (3, 2)])
def test_anomaly_factor_vanishes_for_k_le_d(d, k):
    assert is_zero(anomaly_form_factor(d, k))


@pytest.mark.parametrize("d", [1, 2, 3])
def test_anomaly_factor_survives_at_d_plus_one(d):
    form = anomaly_form_factor(d, d + 1)
    assert not is_zero(form)
    assert form.degrees() == {d + d * (d - 1)}


def test_leading_component_of_zero_raises():
    with pytest.raises(ValueError):
        zero(U).leading_component()


@pytest.mark.slow
def test_vanishing_table():
    for d in range(1, 5):
        for k in range(2, d + 1):
            assert is_zero(propagator_form_factor(d, k)), (d, k)
            assert is_zero(anomaly_form_factor(d, k)), (d, k)
    for d in range(1, 4):
        for k in range(d + 1, d + 4):
            form = propagator_form_factor(d, k)
            assert not is_zero(form), (d, k)
            assert form.degrees() == {(d - 1) * k}
        assert not is_zero(anomaly_form_factor(d, d + 1)), d
