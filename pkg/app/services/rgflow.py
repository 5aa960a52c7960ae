"""Homotopy RG flow W(P, I) mod ħ² on a finite-dimensional toy field space.

W(P, I) = Σ_Γ ħ^{h(Γ)} W_Γ(P, I) / |Aut Γ| over connected graphs with
h(Γ) = Σ_v g_v + loops(Γ) ≤ 1, where a vertex of type (g, m) is the degree-m
part of the ħ^g component of I.

Formal series are cut off by weighted degree, field degree plus twice the ħ
power, at max_weight. On at-least-cubic input every graph's output weight is
at least the weight of each of its vertices, so everything below the cap is
computed exactly.

Coordinates may be odd. Polynomials are stored with commuting sympy symbols
and read with their odd factors in increasing index order; every product and
derivative that touches odd coordinates goes through super_mul and left_diff,
which carry the Koszul signs.
"""

import itertools
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import NamedTuple, Sequence

import networkx as nx
import sympy
from networkx.algorithms import isomorphism
from sympy.polys.domains import QQ
from sympy.polys.rings import PolyElement, PolyRing, ring

from app.errors import TruncationOverflowError, ValenceMismatchError
from app.services.grassmann import reorder_sign

logger = logging.getLogger(__name__)

MAX_FIELD_DIM = 6
MAX_GRAPH_VERTICES = 5


@dataclass(frozen=True)
class ToyFieldSpace:
    dim: int
    parity: tuple[int, ...] = ()

    def __post_init__(self):
        if not 1 <= self.dim <= MAX_FIELD_DIM:
            raise ValueError(f"Toy field space needs 1 <= dim <= {MAX_FIELD_DIM}, got {self.dim}")
        parity = self.parity or (0,) * self.dim
        if len(parity) != self.dim:
            raise ValueError(f"Parity vector {parity} does not match dim={self.dim}")
        if any(p not in (0, 1) for p in parity):
            raise ValueError(f"Parity entries must be 0 (even) or 1 (odd), got {parity}")
        object.__setattr__(self, "parity", tuple(parity))

    @cached_property
    def symbols(self) -> tuple[sympy.Symbol, ...]:
        return sympy.symbols(f"x1:{self.dim + 1}")

    @cached_property
    def odd(self) -> tuple[int, ...]:
        return tuple(a for a, p in enumerate(self.parity) if p)


def propagator(space: ToyFieldSpace, entries) -> sympy.Matrix:
    """Graded-symmetric N x N matrix of exact rationals, P_ab = (-1)^{|a||b|} P_ba.

    The propagator is even: entries pairing an even with an odd coordinate vanish.
    """
    matrix = sympy.Matrix(entries).applyfunc(sympy.Rational)
    if matrix.shape != (space.dim, space.dim):
        raise ValueError(f"Propagator must be {space.dim} x {space.dim}, got {matrix.shape}")
    for a, b in itertools.product(range(space.dim), repeat=2):
        pa, pb = space.parity[a], space.parity[b]
        if pa != pb and matrix[a, b] != 0:
            raise ValueError(f"Propagator entry ({a + 1}, {b + 1}) pairs an even with an odd coordinate")
        if matrix[a, b] != (-1) ** (pa * pb) * matrix[b, a]:
            raise ValueError(f"Propagator is not graded-symmetric at ({a + 1}, {b + 1})")
    return matrix


def _odd_mask(monom: Sequence[int], odd: Sequence[int]) -> int:
    return sum(1 << rank for rank, position in enumerate(odd) if monom[position])


def super_mul(p: PolyElement, q: PolyElement, odd: Sequence[int]) -> PolyElement:
    """Product in the free supercommutative algebra whose generators at the positions in odd anticommute."""
    if not odd:
        return p * q
    out = {}
    for ma, ca in p.terms():
        for mb, cb in q.terms():
            if any(ma[i] and mb[i] for i in odd):
                continue
            monom = tuple(a + b for a, b in zip(ma, mb))
            sign = reorder_sign(_odd_mask(ma, odd), _odd_mask(mb, odd))
            out[monom] = out.get(monom, 0) + sign * ca * cb
    return p.ring.from_dict({m: c for m, c in out.items() if c})


def left_diff(p: PolyElement, position: int, odd: Sequence[int]) -> PolyElement:
    """Left derivative by the generator at position; an odd one picks up a sign per odd factor in front of it."""
    if position not in odd:
        return p.diff(p.ring.gens[position])
    out = {}
    for monom, coeff in p.terms():
        if not monom[position]:
            continue
        passed = sum(monom[i] for i in odd if i < position)
        reduced = monom[:position] + (0,) + monom[position + 1 :]
        out[reduced] = -coeff if passed % 2 else coeff
    return p.ring.from_dict(out)


def embed(target: PolyRing, space: ToyFieldSpace, expr: sympy.Expr, offset: int) -> PolyElement:
    """Copy a polynomial in x1..xN onto the generators target.gens[offset : offset + N]."""
    if expr == 0:
        return target.zero
    terms = {}
    for monom, coeff in sympy.Poly(expr, *space.symbols).terms():
        full = [0] * target.ngens
        full[offset : offset + space.dim] = monom
        terms[tuple(full)] = target.domain.from_sympy(coeff)
    return target.from_dict(terms)


def _weight(monom: Sequence[int], hbar: int) -> int:
    return sum(monom) + 2 * hbar


@dataclass(frozen=True)
class FormalSeries:
    """I_0 + ħ I_1 with polynomial components and a weighted-degree cap."""

    space: ToyFieldSpace
    components: tuple[sympy.Expr, sympy.Expr]
    max_weight: int

    @classmethod
    def build(cls, space: ToyFieldSpace, c0, c1=0, max_weight: int = 4, interaction: bool = False) -> "FormalSeries":
        """Checked constructor: terms above max_weight raise, and an interaction must be at least cubic at ħ⁰."""
        components = (sympy.expand(sympy.sympify(c0)), sympy.expand(sympy.sympify(c1)))
        for hbar, comp in enumerate(components):
            if comp == 0:
                continue
            for monom, _ in sympy.Poly(comp, *space.symbols).terms():
                if _weight(monom, hbar) > max_weight:
                    raise TruncationOverflowError(
                        f"Term of degree {sum(monom)} at hbar^{hbar} exceeds weight cap {max_weight}"
                    )
                if any(monom[a] > 1 for a in space.odd):
                    raise ValueError(f"Odd coordinate appears squared in a term at hbar^{hbar}")
                if interaction and sum(monom[a] for a in space.odd) % 2:
                    raise ValueError(f"Interaction term at hbar^{hbar} has odd total parity")
        series = cls(space, components, max_weight)
        if interaction and any(m < 3 for m in series.degrees(0)):
            raise ValueError(f"Interaction must be at least cubic at hbar^0, found degrees {sorted(series.degrees(0))}")
        return series

    @classmethod
    def truncated(cls, space: ToyFieldSpace, c0, c1, max_weight: int) -> "FormalSeries":
        """Drop everything above the cap; used for results, which live modulo that filtration."""
        kept = []
        for hbar, comp in enumerate((c0, c1)):
            comp = sympy.expand(sympy.sympify(comp))
            if comp == 0:
                kept.append(sympy.Integer(0))
                continue
            poly = sympy.Poly(comp, *space.symbols)
            kept.append(
                sympy.Add(
                    *(
                        coeff * sympy.Mul(*(s**e for s, e in zip(space.symbols, monom)))
                        for monom, coeff in poly.terms()
                        if _weight(monom, hbar) <= max_weight
                    )
                )
            )
        return cls(space, (kept[0], kept[1]), max_weight)

    def component(self, hbar: int) -> sympy.Expr:
        return self.components[hbar]

    def homogeneous(self, hbar: int, degree: int) -> sympy.Expr:
        comp = self.components[hbar]
        if comp == 0:
            return sympy.Integer(0)
        poly = sympy.Poly(comp, *self.space.symbols)
        return sympy.Add(
            *(
                coeff * sympy.Mul(*(s**e for s, e in zip(self.space.symbols, monom)))
                for monom, coeff in poly.terms()
                if sum(monom) == degree
            )
        )

    def degrees(self, hbar: int) -> set[int]:
        comp = self.components[hbar]
        if comp == 0:
            return set()
        return {sum(monom) for monom, _ in sympy.Poly(comp, *self.space.symbols).terms()}

    def vertex_types(self) -> list[tuple[int, int]]:
        return sorted((hbar, m) for hbar in (0, 1) for m in self.degrees(hbar))

    def __add__(self, other: "FormalSeries") -> "FormalSeries":
        return FormalSeries.truncated(
            self.space,
            self.components[0] + other.components[0],
            self.components[1] + other.components[1],
            min(self.max_weight, other.max_weight),
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, FormalSeries):
            return NotImplemented
        return self.space == other.space and all(
            sympy.expand(a - b) == 0 for a, b in zip(self.components, other.components)
        )


class VertexType(NamedTuple):
    hbar: int
    valence: int
    external: int


@dataclass(frozen=True)
class Graph:
    """Connected graph with typed vertices; adjacency[v][v] counts self-loops."""

    vertices: tuple[VertexType, ...]
    adjacency: tuple[tuple[int, ...], ...]
    _aut: dict = field(default_factory=dict, compare=False, hash=False, repr=False)

    @property
    def edge_count(self) -> int:
        size = len(self.vertices)
        return sum(self.adjacency[u][v] for u in range(size) for v in range(u, size))

    @property
    def loops(self) -> int:
        return self.edge_count - len(self.vertices) + 1

    @property
    def external(self) -> int:
        return sum(v.external for v in self.vertices)

    @property
    def hbar_order(self) -> int:
        return sum(v.hbar for v in self.vertices) + self.loops

    @property
    def output_weight(self) -> int:
        return self.external + 2 * self.hbar_order

    def edges(self) -> list[tuple[int, int]]:
        """Every edge with multiplicity, self-loops as (v, v)."""
        size = len(self.vertices)
        return [(u, v) for u in range(size) for v in range(u, size) for _ in range(self.adjacency[u][v])]

    def to_networkx(self) -> nx.Graph:
        graph = nx.Graph()
        for v, vt in enumerate(self.vertices):
            graph.add_node(v, kind=(vt, self.adjacency[v][v]))
        for u, v in itertools.combinations(range(len(self.vertices)), 2):
            if self.adjacency[u][v]:
                graph.add_edge(u, v, count=self.adjacency[u][v])
        return graph

    @property
    def vertex_automorphisms(self) -> int:
        if "vertex" not in self._aut:
            graph = self.to_networkx()
            matcher = isomorphism.GraphMatcher(graph, graph, node_match=_node_match, edge_match=_edge_match)
            self._aut["vertex"] = sum(1 for _ in matcher.isomorphisms_iter())
        return self._aut["vertex"]

    @property
    def aut_full(self) -> int:
        """Automorphisms acting on half-edges, external tails included."""
        size = len(self.vertices)
        order = self.vertex_automorphisms
        for u, v in itertools.combinations(range(size), 2):
            order *= math.factorial(self.adjacency[u][v])
        for v in range(size):
            loops = self.adjacency[v][v]
            order *= math.factorial(loops) * 2**loops * math.factorial(self.vertices[v].external)
        return order

    @property
    def aut_internal(self) -> int:
        return self.aut_full // math.prod(math.factorial(v.external) for v in self.vertices)


_node_match = isomorphism.categorical_node_match("kind", None)
_edge_match = isomorphism.categorical_edge_match("count", 0)


def _adjacencies(half_edges: list[int]):
    """Symmetric nonnegative matrices whose rows use up half_edges (self-loops count twice)."""
    size = len(half_edges)
    matrix = [[0] * size for _ in range(size)]
    remaining = list(half_edges)

    def fill(u, v):
        if u == size:
            yield tuple(tuple(row) for row in matrix)
            return
        if v == size:
            if remaining[u] == 0:
                yield from fill(u + 1, u + 1)
            return
        if v == u:
            for loops in range(remaining[u] // 2 + 1):
                matrix[u][u] = loops
                remaining[u] -= 2 * loops
                yield from fill(u, u + 1)
                remaining[u] += 2 * loops
            matrix[u][u] = 0
            return
        for count in range(min(remaining[u], remaining[v]) + 1):
            matrix[u][v] = matrix[v][u] = count
            remaining[u] -= count
            remaining[v] -= count
            yield from fill(u, v + 1)
            remaining[u] += count
            remaining[v] += count
        matrix[u][v] = matrix[v][u] = 0

    yield from fill(0, 0)


def _invariant(graph: Graph) -> tuple:
    return (tuple(sorted(graph.vertices)), graph.edge_count, tuple(sorted(graph.adjacency[v][v] for v in range(len(graph.vertices)))))


@lru_cache(maxsize=64)
def enumerate_graphs(
    max_vertices: int,
    max_external: int,
    genus_cap: int,
    vertex_types: tuple[tuple[int, int], ...] = ((0, 3),),
    max_hbar: int = 1,
) -> tuple[Graph, ...]:
    """Isomorphism classes of connected graphs built from the given (ħ order, valence) vertex types.

    Each class appears once. Loops are capped by genus_cap, the total ħ order
    Σ g_v + loops by max_hbar, and the number of external legs by max_external.
    """
    if not 1 <= max_vertices <= MAX_GRAPH_VERTICES:
        raise ValueError(f"max_vertices must lie in 1..{MAX_GRAPH_VERTICES}, got {max_vertices}")
    if genus_cap not in (0, 1):
        raise ValueError(f"genus_cap must be 0 or 1, got {genus_cap}")

    buckets: dict[tuple, list[tuple[Graph, nx.Graph]]] = {}
    for size in range(1, max_vertices + 1):
        for types in itertools.combinations_with_replacement(sorted(set(vertex_types)), size):
            if sum(g for g, _ in types) > max_hbar:
                continue
            if size > 1 and any(m == 0 for _, m in types):
                continue
            for externals in itertools.product(*(range(m + 1) for _, m in types)):
                if sum(externals) > max_external:
                    continue
                half = [m - e for (_, m), e in zip(types, externals)]
                if sum(half) % 2:
                    continue
                loops = sum(half) // 2 - size + 1
                if not 0 <= loops <= genus_cap or sum(g for g, _ in types) + loops > max_hbar:
                    continue
                vertices = tuple(VertexType(g, m, e) for (g, m), e in zip(types, externals))
                for adjacency in _adjacencies(half):
                    candidate = Graph(vertices, adjacency)
                    nx_graph = candidate.to_networkx()
                    if not nx.is_connected(nx_graph):
                        continue
                    reps = buckets.setdefault(_invariant(candidate), [])
                    if any(
                        nx.is_isomorphic(nx_graph, rep, node_match=_node_match, edge_match=_edge_match)
                        for _, rep in reps
                    ):
                        continue
                    reps.append((candidate, nx_graph))
    graphs = tuple(g for reps in buckets.values() for g, _ in reps)
    logger.debug("Enumerated %d graphs (V <= %d, genus <= %d)", len(graphs), max_vertices, genus_cap)
    return graphs


def pairing_count(graph: Graph) -> int:
    """Brute-force count of half-edge pairings on labelled vertices that realize the graph.

    External legs may sit on any slots, so vertices of one (ħ order, valence)
    type are interchangeable.
    """
    target = graph.to_networkx()
    slots = [(v, s) for v, vt in enumerate(graph.vertices) for s in range(vt.valence)]
    size = len(graph.vertices)
    count = 0
    for external in itertools.combinations(slots, graph.external):
        chosen = set(external)
        legs = Counter(v for v, _ in external)
        vertices = tuple(VertexType(vt.hbar, vt.valence, legs[v]) for v, vt in enumerate(graph.vertices))
        internal = [slot for slot in slots if slot not in chosen]
        for matching in _perfect_matchings(internal):
            adjacency = [[0] * size for _ in range(size)]
            for (u, _), (v, _) in matching:
                adjacency[u][v] += 1
                if u != v:
                    adjacency[v][u] += 1
            realized = Graph(vertices, tuple(tuple(row) for row in adjacency)).to_networkx()
            if nx.is_isomorphic(realized, target, node_match=_node_match, edge_match=_edge_match):
                count += 1
    return count


def _perfect_matchings(items: list):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for index, partner in enumerate(rest):
        for matching in _perfect_matchings(rest[:index] + rest[index + 1 :]):
            yield [(first, partner), *matching]


def expected_pairing_count(graph: Graph) -> int:
    """∏_t n_t! ∏_v m_v! / |Aut_full|, with n_t the number of vertices of each type."""
    by_type = Counter((vt.hbar, vt.valence) for vt in graph.vertices)
    numerator = math.prod(math.factorial(c) for c in by_type.values())
    numerator *= math.prod(math.factorial(vt.valence) for vt in graph.vertices)
    return numerator // graph.aut_full


def graph_weight(graph: Graph, p: sympy.Matrix, interaction: FormalSeries) -> FormalSeries:
    """ħ^{h(Γ)} [∏_edges Σ P_ab ∂_a^{(u)} ∂_b^{(v)}] ∏_v I_v(y^{(v)}) on the diagonal y^{(v)} = x."""
    space = interaction.space
    dim = space.dim
    size = len(graph.vertices)
    copies, *_ = ring([f"y{v}_{a}" for v in range(size) for a in range(dim)], QQ)
    odd = tuple(v * dim + a for v in range(size) for a in space.odd)
    product = copies.one
    for v, vt in enumerate(graph.vertices):
        piece = interaction.homogeneous(vt.hbar, vt.valence) if vt.hbar <= 1 else sympy.Integer(0)
        if piece == 0:
            raise ValenceMismatchError(f"Interaction has no hbar^{vt.hbar} term of degree {vt.valence}")
        product = super_mul(product, embed(copies, space, piece, v * dim), odd)

    pairs = [(a, b, copies.domain.from_sympy(p[a, b])) for a in range(dim) for b in range(dim) if p[a, b] != 0]
    for u, v in graph.edges():
        contracted = copies.zero
        for a, b, entry in pairs:
            contracted += left_diff(left_diff(product, v * dim + b, odd), u * dim + a, odd).mul_ground(entry)
        product = contracted
        if not product:
            break

    on_diagonal = _on_diagonal(product, space, size)
    order = graph.hbar_order
    c0, c1 = (on_diagonal, 0) if order == 0 else (0, on_diagonal)
    return FormalSeries.truncated(space, c0, c1, interaction.max_weight)


def _on_diagonal(product: PolyElement, space: ToyFieldSpace, size: int) -> sympy.Expr:
    """Set every copy y^{(v)} to x, sorting the odd factors into x-order."""
    dim = space.dim
    total = sympy.Integer(0)
    for monom, coeff in product.terms():
        exponents = [sum(monom[v * dim + a] for v in range(size)) for a in range(dim)]
        if any(exponents[a] > 1 for a in space.odd):
            continue
        order = [a for v in range(size) for a in space.odd if monom[v * dim + a]]
        swaps = sum(1 for i, j in itertools.combinations(order, 2) if i > j)
        total += (-1) ** swaps * product.ring.domain.to_sympy(coeff) * sympy.Mul(
            *(x**e for x, e in zip(space.symbols, exponents))
        )
    return total


def _flow_graphs(interaction: FormalSeries, genus_cap: int) -> list[Graph]:
    cap = interaction.max_weight
    max_vertices = max(1, cap - 2)
    if max_vertices > MAX_GRAPH_VERTICES:
        raise ValueError(f"Weight cap {cap} needs graphs beyond {MAX_GRAPH_VERTICES} vertices")
    graphs = enumerate_graphs(max_vertices, cap, genus_cap, tuple(interaction.vertex_types()), 1)
    return [g for g in graphs if g.output_weight <= cap]


def _sum_graphs(p: sympy.Matrix, interaction: FormalSeries, graphs: list[Graph]) -> FormalSeries:
    space = interaction.space
    total = FormalSeries(space, (sympy.Integer(0), sympy.Integer(0)), interaction.max_weight)
    for graph in graphs:
        contribution = graph_weight(graph, p, interaction)
        total = total + FormalSeries(
            space,
            tuple(c / graph.aut_internal for c in contribution.components),
            interaction.max_weight,
        )
    return total


def rg_flow(p: sympy.Matrix, interaction: FormalSeries) -> FormalSeries:
    """W(P, I) mod ħ², exact in rationals below the weight cap."""
    if any(m < 3 for m in interaction.degrees(0)):
        raise ValueError("rg_flow needs an interaction that is at least cubic at hbar^0")
    return _sum_graphs(p, interaction, _flow_graphs(interaction, genus_cap=1))


def rg_flow_tree(p: sympy.Matrix, interaction: FormalSeries) -> FormalSeries:
    """Genus-0 graphs built from ħ⁰ vertices only: the tree-level part of W(P, I)."""
    if any(m < 3 for m in interaction.degrees(0)):
        raise ValueError("rg_flow_tree needs an interaction that is at least cubic at hbar^0")
    graphs = [
        g for g in _flow_graphs(interaction, genus_cap=0) if all(vt.hbar == 0 for vt in g.vertices)
    ]
    return _sum_graphs(p, interaction, graphs)
