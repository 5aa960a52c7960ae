from fractions import Fraction
from typing import Mapping

import numpy as np
import sympy

from app.models.schemas import TestFunction


def gaussian_test_function(
    d: int,
    k: int,
    centers: list[list[complex]] | None = None,
    width: float = 1.0,
    poly: dict[tuple[int, ...], Fraction] | None = None,
) -> TestFunction:
    """Build Φ from complex centers; missing centers default to the origin."""
    centers = centers if centers is not None else [[0j] * d for _ in range(k)]
    return TestFunction(
        d=d,
        k=k,
        centers=[[(complex(c).real, complex(c).imag) for c in row] for row in centers],
        width=width,
        poly=dict(poly or {}),
    )


def center_array(phi: TestFunction) -> np.ndarray:
    """Centers as a complex (k, d) array."""
    return np.array([[complex(re, im) for re, im in row] for row in phi.centers], dtype=complex)


def _terms(phi: TestFunction) -> dict[tuple[int, ...], Fraction]:
    return phi.poly or {(0,) * (2 * phi.k * phi.d): Fraction(1)}


def _gaussian(phi: TestFunction, z: np.ndarray) -> np.ndarray:
    diff = z - center_array(phi)
    return np.exp(-np.sum(np.abs(diff) ** 2, axis=(-2, -1)) / (2.0 * phi.width**2))


def _poly(phi: TestFunction, z: np.ndarray, terms) -> np.ndarray:
    kd = phi.k * phi.d
    flat = z.reshape(*z.shape[:-2], kd)
    total = np.zeros(flat.shape[:-1], dtype=complex)
    for key, coeff in terms.items():
        value = np.full(flat.shape[:-1], complex(coeff))
        for u in range(kd):
            if key[u]:
                value = value * flat[..., u] ** key[u]
            if key[kd + u]:
                value = value * np.conj(flat[..., u]) ** key[kd + u]
        total = total + value
    return total


def polynomial(phi: TestFunction, z: np.ndarray) -> np.ndarray:
    return _poly(phi, np.asarray(z, dtype=complex), _terms(phi))


def evaluate(phi: TestFunction, z: np.ndarray) -> np.ndarray:
    """Φ at points z of shape (..., k, d)."""
    z = np.asarray(z, dtype=complex)
    return _poly(phi, z, _terms(phi)) * _gaussian(phi, z)


def dbar(phi: TestFunction, z: np.ndarray, alpha: int, i: int) -> np.ndarray:
    """∂Φ/∂z̄^α_i at points z of shape (..., k, d)."""
    z = np.asarray(z, dtype=complex)
    kd = phi.k * phi.d
    u = (alpha - 1) * phi.d + (i - 1)
    lowered = {}
    for key, coeff in _terms(phi).items():
        if key[kd + u]:
            new = list(key)
            new[kd + u] -= 1
            lowered[tuple(new)] = lowered.get(tuple(new), 0) + coeff * key[kd + u]
    center = center_array(phi)[alpha - 1, i - 1]
    shift = -(z[..., alpha - 1, i - 1] - center) / (2.0 * phi.width**2)
    return (_poly(phi, z, lowered) + shift * _poly(phi, z, _terms(phi))) * _gaussian(phi, z)


def poly_expression(phi: TestFunction, z_syms, zbar_syms) -> sympy.Expr:
    """The polynomial part of Φ in the given holomorphic and antiholomorphic symbols."""
    kd = phi.k * phi.d
    expr = sympy.Integer(0)
    for key, coeff in _terms(phi).items():
        mono = sympy.Rational(coeff.numerator, coeff.denominator)
        for u in range(kd):
            mono *= z_syms[u] ** key[u] * zbar_syms[u] ** key[kd + u]
        expr += mono
    return expr


def edge_polynomial(d: int, k: int, powers: Mapping[tuple[int, int], int]) -> dict[tuple[int, ...], Fraction]:
    """Exponent table of ∏ (z^{α+1}_i − z^α_i)^p over powers {(α, i): p}, with z^{k+1} = z^1.

    Holomorphic only; feed it to gaussian_test_function as poly.
    """
    z = [[sympy.Symbol(f"z_{a}_{i}") for i in range(1, d + 1)] for a in range(1, k + 1)]
    expr = sympy.Integer(1)
    for (alpha, i), power in powers.items():
        if not (1 <= alpha <= k and 1 <= i <= d) or power < 0:
            raise ValueError(f"Edge factor ({alpha}, {i})^{power} does not fit (C^{d})^{k}")
        expr *= (z[alpha % k][i - 1] - z[alpha - 1][i - 1]) ** power
    flat = [s for row in z for s in row]
    padding = (0,) * (k * d)
    return {
        tuple(monom) + padding: Fraction(int(coeff))
        for monom, coeff in sympy.Poly(sympy.expand(expr), *flat).terms()
    }
