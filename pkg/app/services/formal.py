"""Brute-force oracle for the RG flow: ħ·log(exp(ħ∂_P) exp(I/ħ)) mod ħ².

Fields are scaled x → λx and ħ → λ²ħ. Then ħ∂_P = ½ ħ Σ P_ab ∂_a ∂_b keeps the
λ-degree, every term of I/ħ has λ-degree at least one once the ħ-constant of
I is set aside, and all series can be cut at a fixed λ-degree exactly.

ħ itself is not carried: a term λ^w x^m of the series stands for
ħ^{(w-m)/2} x^m, so ħ·log(...) has ħ-order (w-m)/2 + 1.
"""

import math

import sympy
from sympy.polys.domains import QQ
from sympy.polys.ring_series import rs_exp, rs_log, rs_trunc
from sympy.polys.rings import PolyElement, PolyRing, ring

from app.services.rgflow import FormalSeries, left_diff, super_mul


def _scaled(target: PolyRing, space, expr: sympy.Expr, shift: int) -> PolyElement:
    """expr with every degree-m term carrying λ^{m + shift}; λ is the first generator of target."""
    if expr == 0:
        return target.zero
    return target.from_dict(
        {
            (sum(monom) + shift, *monom): target.domain.from_sympy(coeff)
            for monom, coeff in sympy.Poly(expr, *space.symbols).terms()
        }
    )


def super_exp(p: PolyElement, lam: PolyElement, prec: int, odd) -> PolyElement:
    """exp(p) mod λ^prec for p without λ-constant term."""
    if not odd:
        return rs_exp(p, lam, prec)
    result = p.ring.one
    power = p.ring.one
    for r in range(1, prec):
        power = rs_trunc(super_mul(power, p, odd), lam, prec)
        if not power:
            break
        result += power.mul_ground(QQ(1, math.factorial(r)))
    return result


def super_log(p: PolyElement, lam: PolyElement, prec: int, odd) -> PolyElement:
    """log(p) mod λ^prec for p whose λ-constant term is 1."""
    if not odd:
        return rs_log(p, lam, prec)
    excess = p - 1
    result = p.ring.zero
    power = p.ring.one
    for r in range(1, prec):
        power = rs_trunc(super_mul(power, excess, odd), lam, prec)
        if not power:
            break
        result += power.mul_ground(QQ((-1) ** (r + 1), r))
    return result


def _laplacian(term: PolyElement, p: sympy.Matrix, odd) -> PolyElement:
    dim = p.shape[0]
    out = term.ring.zero
    for a in range(dim):
        for b in range(dim):
            if p[a, b] != 0:
                entry = term.ring.domain.from_sympy(p[a, b] / 2)
                out += left_diff(left_diff(term, 1 + b, odd), 1 + a, odd).mul_ground(entry)
    return out


def exp_log_flow(p: sympy.Matrix, interaction: FormalSeries) -> FormalSeries:
    space = interaction.space
    xs = space.symbols
    prec = interaction.max_weight - 1
    series, lam, *_ = ring(["lam", *(str(x) for x in xs)], QQ)
    odd = tuple(1 + a for a in space.odd)

    constant = interaction.homogeneous(1, 0)
    scaled = _scaled(series, space, interaction.component(0), -2)
    scaled += _scaled(series, space, interaction.component(1) - constant, 0)
    exponential = super_exp(scaled, lam, prec, odd)

    flowed = series.zero
    term = exponential
    s = 0
    while term:
        flowed += term.mul_ground(QQ(1, math.factorial(s)))
        term = _laplacian(term, p, odd)
        s += 1

    logarithm = super_log(flowed, lam, prec, odd)
    components = [sympy.Integer(0), constant]
    for monom, coeff in logarithm.terms():
        degree = sum(monom[1:])
        order = (monom[0] - degree) // 2 + 1
        if order in (0, 1):
            components[order] += series.domain.to_sympy(coeff) * sympy.Mul(
                *(x**e for x, e in zip(xs, monom[1:]))
            )
    return FormalSeries.truncated(space, components[0], components[1], interaction.max_weight)
