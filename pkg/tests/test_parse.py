from fractions import Fraction

from app.utils.parse import parse_float_list, parse_int_matrix, parse_point, parse_rational_matrix


def test_int_matrix():
    assert parse_int_matrix("0,1;2,0") == [[0, 1], [2, 0]]
    assert parse_int_matrix(" 3 , 0 , 1 ") == [[3, 0, 1]]


def test_int_matrix_rejects_garbage():
    assert parse_int_matrix("0,1;2") is None
    assert parse_int_matrix("0,-1") is None
    assert parse_int_matrix("a,b") is None
    assert parse_int_matrix("0,1;") is None
    assert parse_int_matrix("") is None


def test_rational_matrix():
    assert parse_rational_matrix("1/2,0;0,-3") == [[Fraction(1, 2), Fraction(0)], [Fraction(0), Fraction(-3)]]


def test_rational_matrix_rejects_garbage():
    assert parse_rational_matrix("1/0") is None
    assert parse_rational_matrix("1,2;3") is None
    assert parse_rational_matrix("x") is None


def test_float_list():
    assert parse_float_list("1e-2, 5e-3") == [1e-2, 5e-3]
    assert parse_float_list("1e-2,,5e-3") is None


def test_point():
    assert parse_point("1+2j, 0") == [1 + 2j, 0j]
    assert parse_point("0.5 - 1j") == [0.5 - 1j]
    assert parse_point("1+") is None
