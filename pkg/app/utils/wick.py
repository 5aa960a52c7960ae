"""Polynomial moments of shifted circular complex Gaussians.

Variables are numbered u = α·d + i (0-based). The covariance couples only
variables with the same coordinate index i:
    ⟨(w_u − m_u)(w̄_v − m̄_v)⟩ = δ_{i_u i_v} C[α_u, α_v],   ⟨ξ ξ⟩ = 0.
Moments follow from the Gaussian integration-by-parts rule
    E[w_u F] = m_u E[F] + Σ_v C_uv E[∂F/∂w̄_v].
All quantities carry a leading batch axis so a whole quadrature block is
processed at once.
"""

import numpy as np

Term = tuple[tuple[int, ...], tuple[int, ...], complex]


def expectation(terms: list[Term], mean: np.ndarray, cov: np.ndarray, d: int) -> np.ndarray:
    """Σ coeff · E[∏ w^a w̄^b] for a batch.

    mean: (n, V) complex, cov: (n, k, k), terms: (holomorphic exponents,
    antiholomorphic exponents, coefficient) with exponent tuples of length V.
    """
    mbar = np.conj(mean)
    memo: dict[tuple[tuple[int, ...], tuple[int, ...]], np.ndarray] = {}

    def moment(holo: tuple[int, ...], anti: tuple[int, ...]):
        key = (holo, anti)
        if key in memo:
            return memo[key]
        u = next((u for u, a in enumerate(holo) if a), None)
        if u is None:
            value = 1.0
            for v, b in enumerate(anti):
                if b:
                    value = value * mbar[:, v] ** b
        else:
            lowered = holo[:u] + (holo[u] - 1,) + holo[u + 1 :]
            value = mean[:, u] * moment(lowered, anti)
            for v, b in enumerate(anti):
                if b and v % d == u % d:
                    anti_lowered = anti[:v] + (b - 1,) + anti[v + 1 :]
                    value = value + b * cov[:, u // d, v // d] * moment(lowered, anti_lowered)
        memo[key] = value
        return value

    total = np.zeros(mean.shape[0], dtype=complex)
    for holo, anti, coeff in terms:
        total = total + coeff * moment(holo, anti)
    return total
