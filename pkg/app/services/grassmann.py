"""Exact exterior algebra over the antiholomorphic generators dw̄_i^α.

After the wheel change of coordinates w^α = z^{α+1} − z^α only the generators
dw̄_i^α with 1 ≤ α ≤ k−1 and 1 ≤ i ≤ d survive. They are numbered
lexicographically on (α, i), and a monomial is stored as a bitset over that
order. Coefficients are sympy polynomials in the commuting symbols w̄_i^α with
rational coefficients, so every identity checked here is exact.

An element is a sparse map bitset -> coefficient with zero coefficients purged.
The largest case of interest (d=4, k=5) has 16 generators, far too many for a
dense table but a handful of surviving terms in practice.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, NamedTuple

import sympy


class GeneratorIndex(NamedTuple):
    alpha: int
    i: int


@dataclass(frozen=True)
class GeneratorUniverse:
    d: int
    k: int

    def __post_init__(self):
        if self.d < 1 or self.k < 2:
            raise ValueError(f"Generator universe needs d >= 1 and k >= 2, got d={self.d}, k={self.k}")

    @property
    def size(self) -> int:
        return self.d * (self.k - 1)

    def position(self, alpha: int, i: int) -> int:
        if not (1 <= alpha <= self.k - 1 and 1 <= i <= self.d):
            raise ValueError(f"Generator (alpha={alpha}, i={i}) outside 1..{self.k - 1} x 1..{self.d}")
        return (alpha - 1) * self.d + (i - 1)

    def index(self, position: int) -> GeneratorIndex:
        return GeneratorIndex(position // self.d + 1, position % self.d + 1)

    @cached_property
    def symbols(self) -> tuple[sympy.Symbol, ...]:
        """w̄_i^α in generator order."""
        return tuple(wbar_symbol(*self.index(p)) for p in range(self.size))


def wbar_symbol(alpha: int, i: int) -> sympy.Symbol:
    return sympy.Symbol(f"wbar_{alpha}_{i}")


@dataclass(frozen=True)
class GrassmannElement:
    universe: GeneratorUniverse
    terms: Mapping[int, sympy.Expr] = field(default_factory=dict)

    def __add__(self, other: "GrassmannElement") -> "GrassmannElement":
        _check_universe(self, other)
        merged = dict(self.terms)
        for mask, coeff in other.terms.items():
            merged[mask] = merged.get(mask, 0) + coeff
        return _canonical(self.universe, merged)

    def __neg__(self) -> "GrassmannElement":
        return GrassmannElement(self.universe, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other: "GrassmannElement") -> "GrassmannElement":
        return self + (-other)

    def scale(self, factor) -> "GrassmannElement":
        return _canonical(self.universe, {m: factor * c for m, c in self.terms.items()})

    def __xor__(self, other: "GrassmannElement") -> "GrassmannElement":
        return wedge(self, other)

    def degrees(self) -> set[int]:
        """Antiholomorphic form degrees present."""
        return {mask.bit_count() for mask in self.terms}

    def generators_of(self, mask: int) -> list[GeneratorIndex]:
        return [self.universe.index(p) for p in range(self.universe.size) if mask >> p & 1]

    def leading_component(self) -> tuple[int, sympy.Expr]:
        """Smallest bitset with a nonzero coefficient."""
        if not self.terms:
            raise ValueError("The zero element has no leading component")
        mask = min(self.terms)
        return mask, self.terms[mask]


def _check_universe(a: GrassmannElement, b: GrassmannElement):
    if a.universe != b.universe:
        raise ValueError(f"Elements live over different generator sets: {a.universe} vs {b.universe}")


def _canonical(universe: GeneratorUniverse, raw: Mapping[int, sympy.Expr]) -> GrassmannElement:
    terms = {}
    for mask, coeff in raw.items():
        coeff = sympy.expand(coeff)
        if coeff != 0:
            terms[mask] = coeff
    return GrassmannElement(universe, terms)


def reorder_sign(left: int, right: int) -> int:
    """Sign of sorting the concatenation left·right into increasing order."""
    swaps = 0
    rest = right
    while rest:
        low = rest & -rest
        q = low.bit_length() - 1
        swaps += (left >> (q + 1)).bit_count()
        rest ^= low
    return -1 if swaps % 2 else 1


def zero(universe: GeneratorUniverse) -> GrassmannElement:
    return GrassmannElement(universe, {})


def scalar(universe: GeneratorUniverse, value) -> GrassmannElement:
    return _canonical(universe, {0: sympy.sympify(value)})


def generator(universe: GeneratorUniverse, alpha: int, i: int) -> GrassmannElement:
    return GrassmannElement(universe, {1 << universe.position(alpha, i): sympy.Integer(1)})


def wedge(a: GrassmannElement, b: GrassmannElement) -> GrassmannElement:
    _check_universe(a, b)
    out: dict[int, sympy.Expr] = {}
    for ma, ca in a.terms.items():
        for mb, cb in b.terms.items():
            if ma & mb:
                continue
            mask = ma | mb
            out[mask] = out.get(mask, 0) + reorder_sign(ma, mb) * ca * cb
    return _canonical(a.universe, out)


def wedge_all(universe: GeneratorUniverse, factors) -> GrassmannElement:
    result = scalar(universe, 1)
    for f in factors:
        result = wedge(result, f)
    return result


def contract_eta(alpha: int, x: GrassmannElement) -> GrassmannElement:
    """η^α = Σ_i w̄_i^α ∂/∂(dw̄_i^α), a graded derivation of degree −1."""
    universe = x.universe
    if not 1 <= alpha <= universe.k - 1:
        raise ValueError(f"Vertex index alpha={alpha} outside 1..{universe.k - 1}")
    out: dict[int, sympy.Expr] = {}
    for i in range(1, universe.d + 1):
        p = universe.position(alpha, i)
        bit = 1 << p
        sym = universe.symbols[p]
        for mask, coeff in x.terms.items():
            if not mask & bit:
                continue
            sign = -1 if (mask & (bit - 1)).bit_count() % 2 else 1
            reduced = mask ^ bit
            out[reduced] = out.get(reduced, 0) + sign * sym * coeff
    return _canonical(universe, out)


def is_zero(x: GrassmannElement) -> bool:
    return not x.terms


def _closing_edge_form(universe: GeneratorUniverse) -> GrassmannElement:
    """∏_i (Σ_α dw̄_i^α), the form factor of the edge joining vertex k to vertex 1."""
    k = universe.k
    return wedge_all(
        universe,
        (
            sum((generator(universe, a, i) for a in range(2, k)), generator(universe, 1, i))
            for i in range(1, universe.d + 1)
        ),
    )


def _vertex_blocks(universe: GeneratorUniverse) -> list[GrassmannElement]:
    """η^α ∏_i dw̄_i^α for each α < k."""
    return [
        contract_eta(a, wedge_all(universe, (generator(universe, a, i) for i in range(1, universe.d + 1))))
        for a in range(1, universe.k)
    ]


def propagator_form_factor(d: int, k: int) -> GrassmannElement:
    """Form factor of k propagators around a wheel, after the change of coordinates.

    (Σ_α η^α ∏_i Σ_α dw̄_i^α) ∧ ∏_α (η^α ∏_i dw̄_i^α), of degree (d−1)k.
    """
    universe = GeneratorUniverse(d, k)
    closing = _closing_edge_form(universe)
    head = zero(universe)
    for a in range(1, k):
        head = head + contract_eta(a, closing)
    return wedge_all(universe, [head, *_vertex_blocks(universe)])


def anomaly_form_factor(d: int, k: int) -> GrassmannElement:
    """Same product with the heat kernel on the closing edge, so no η acts there.

    Degree d + (k−1)(d−1).
    """
    universe = GeneratorUniverse(d, k)
    return wedge_all(universe, [_closing_edge_form(universe), *_vertex_blocks(universe)])
