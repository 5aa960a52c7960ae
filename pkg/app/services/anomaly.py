"""Wheel weights with the heat kernel K_ε on one distinguished edge.

The distinguished edge is rotated to the closing edge z^k → z^1. That edge
contributes (4πε)^{−d} (−1/4ε)^{|n^k|} (x̄_k)^{n^k} e^{−|x_k|²/4ε} and no
Schwinger integral, so only t_1..t_{k−1} are integrated. The form factor has
no η on that edge; it vanishes identically for k ≤ d.
"""

import logging
import math
from typing import Sequence

from scipy import integrate

from app.config import settings
from app.models.schemas import AnomalyScanReport, AnomalyWheelData, RegulatorWindow, TestFunction, WeightEstimate, WheelData
from app.services import scheduler, testfunctions
from app.services.weights import (
    check_feasible,
    default_eps_grid,
    gaussian_weight,
    prepare,
    regulator_windows,
    summarize_sweep,
)

logger = logging.getLogger(__name__)

STABILITY_RTOL = 1e-3
DEFAULT_L_GRID = [10.0**-j for j in range(7)]
TRIANGLE_EDGE_POWERS = {(1, 1): 1, (2, 2): 1}


def _relabel(alpha: int, shift: int, k: int) -> int:
    return (alpha - 1 + shift) % k + 1


def rotate_wheel(awd: AnomalyWheelData, phi: TestFunction, shift: int) -> tuple[AnomalyWheelData, TestFunction]:
    """Relabel vertices α → α + shift (mod k), carrying n, the centers and Φ's polynomial along."""
    wd = awd.wd
    d, k = wd.d, wd.k
    n = [[0] * k for _ in range(d)]
    centers = [None] * k
    for a in range(1, k + 1):
        b = _relabel(a, shift, k)
        centers[b - 1] = phi.centers[a - 1]
        for i in range(d):
            n[i][b - 1] = wd.n[i][a - 1]

    kd = k * d
    poly = {}
    for key, coeff in phi.poly.items():
        moved = [0] * (2 * kd)
        for a in range(1, k + 1):
            b = _relabel(a, shift, k)
            for i in range(d):
                src, dst = (a - 1) * d + i, (b - 1) * d + i
                moved[dst] = key[src]
                moved[kd + dst] = key[kd + src]
        poly[tuple(moved)] = coeff

    rotated = AnomalyWheelData(wd=WheelData(k=k, n=n), distinguished_edge=_relabel(awd.distinguished_edge, shift, k))
    return rotated, phi.model_copy(update={"centers": centers, "poly": poly})


def _normalized(awd: AnomalyWheelData, phi: TestFunction) -> tuple[WheelData, TestFunction]:
    if awd.distinguished_edge != awd.wd.k:
        awd, phi = rotate_wheel(awd, phi, awd.wd.k - awd.distinguished_edge)
    return awd.wd, phi


def anomaly_weight(awd: AnomalyWheelData, phi: TestFunction, win: RegulatorWindow) -> WeightEstimate:
    """W̃^{k,(n)}_{ε<L}(Φ) by Gaussian reduction over the k−1 propagator edges."""
    check_feasible(awd.wd, "gaussian")
    wd, phi = _normalized(awd, phi)
    integrand = prepare("anomaly", wd, phi)
    if integrand.exact_zero:
        return WeightEstimate(value=0j, scheme="gaussian", exact_zero=True)
    return gaussian_weight(integrand, [(win.eps, win.L)] * (wd.k - 1), eps_closing=win.eps)


def anomaly_t_bound(d: int, k: int, win: RegulatorWindow) -> float:
    """∏_{α<k} ∫_ε^L t^{−d/(k−1)} dt; logarithmic at k = d + 1."""
    if k < 2:
        raise ValueError(f"Need k >= 2, got {k}")
    p = 1.0 - d / (k - 1)
    if p == 0.0:
        return math.log(win.L / win.eps) ** (k - 1)
    return ((win.L**p - win.eps**p) / p) ** (k - 1)


def _verdict(report: AnomalyScanReport, d: int, k: int) -> str:
    if any(r.inconclusive or not r.converged for r in report.inner) or any(v is None for v in report.limits):
        return "inconclusive"
    if k > d + 1:
        if report.relative_to_first is not None and report.relative_to_first < settings.sweep_rtol:
            return "vanishing"
        return "inconclusive"
    last = report.limits[-1]
    if len(report.limits) >= 2 and last != 0 and abs(last - report.limits[-2]) <= STABILITY_RTOL * abs(last):
        return "stable"
    return "inconclusive"


async def anomaly_limit_scan(
    awd: AnomalyWheelData,
    phi: TestFunction,
    eps_ratios: Sequence[float] | None = None,
    L_grid: Sequence[float] | None = None,
) -> AnomalyScanReport:
    """ε → 0 at each fixed L, then L → 0 along the outer grid.

    The inner grid is given as ratios ε/L so every inner sweep stays below its L.
    relative_to_first compares the final limit with the magnitude scale of the
    sweep at the first L.
    """
    d, k = awd.wd.d, awd.wd.k
    if k < d + 1:
        raise ValueError(f"The anomaly scan needs k >= d + 1, got d={d}, k={k}")
    ratios = list(eps_ratios) if eps_ratios is not None else default_eps_grid(1.0)
    L_grid = list(L_grid) if L_grid is not None else list(DEFAULT_L_GRID)
    if any(b >= a for a, b in zip(L_grid, L_grid[1:])):
        raise ValueError(f"L grid must be strictly decreasing, got {L_grid}")
    if not ratios or max(ratios) >= 1.0:
        raise ValueError(f"eps ratios must lie below 1, got {ratios}")

    windows = [regulator_windows(L, [r * L for r in ratios]) for L in L_grid]
    check_feasible(awd.wd, "gaussian")
    prepare("anomaly", *_normalized(awd, phi))
    flat = [win for row in windows for win in row]
    estimates = await scheduler.evaluate_grid(
        lambda win: anomaly_weight(awd, phi, win), flat, f"anomaly weight d={d} k={k}"
    )

    report = AnomalyScanReport(L_grid=L_grid)
    for index, L in enumerate(L_grid):
        chunk = estimates[index * len(ratios) : (index + 1) * len(ratios)]
        inner = summarize_sweep(
            L,
            [r * L for r in ratios],
            chunk,
            envelope=lambda eps, L=L: anomaly_t_bound(d, k, RegulatorWindow(eps=eps, L=L)),
        )
        report.inner.append(inner)
        report.limits.append(inner.limit)
        logger.info("Anomaly d=%d k=%d at L=%g: limit %r (converged=%s)", d, k, L, inner.limit, inner.converged)

    known = [v for v in report.limits if v is not None]
    if known:
        report.iterated_limit = known[-1]
        scale = report.inner[0].scale
        if scale > 0:
            report.relative_to_first = abs(known[-1]) / scale
        elif report.limits[0] is not None:
            report.relative_to_first = 0.0 if known[-1] == 0 else math.inf
    report.verdict = _verdict(report, d, k)
    return report


def _two_vertex_parts(n: Sequence[int], sigma: float) -> tuple[int, float]:
    if len(n) != 2 or min(n) < 0:
        raise ValueError(f"Two-vertex derivative orders must be two nonnegative integers, got {n}")
    return 1 + n[0] + n[1], sigma**2


def two_vertex_anomaly(n: Sequence[int], sigma: float, win: RegulatorWindow) -> float:
    """W̃ at d = 1, k = 2 for Φ = (z² − z¹)^m e^{−(|z¹|² + |z²|²)/2σ²}, m = 1 + n¹ + n².

    After the Gaussian reduction only t is left:
        (−1)^{|n|} m! σ^{2m+4} t^{n²} ε^{1+n¹} / 4 (t(σ² + ε) + εσ²)^{m+1}.
    """
    m, s2 = _two_vertex_parts(n, sigma)
    eps = win.eps
    sign = (-1) ** (n[0] + n[1])

    def integrand(s):
        t = math.exp(s)
        return t * t ** n[1] * eps ** (1 + n[0]) / (4.0 * (t * (s2 + eps) + eps * s2) ** (m + 1))

    value, _ = integrate.quad(integrand, math.log(eps), math.log(win.L), epsabs=0.0, epsrel=1e-12, limit=200)
    return sign * math.factorial(m) * s2 ** (m + 2) * value


def two_vertex_anomaly_limit(n: Sequence[int], sigma: float) -> float:
    """ε → 0 limit of two_vertex_anomaly, the same for every L."""
    m, s2 = _two_vertex_parts(n, sigma)
    tail, _ = integrate.quad(lambda u: u ** n[1] / (1.0 + u) ** (m + 1), 1.0, math.inf, epsabs=0.0, epsrel=1e-12)
    return (-1) ** (n[0] + n[1]) * math.factorial(m) * s2 / 4.0 * tail


def triangle_anomaly_limit(sigma: float) -> float:
    """ε → 0 limit at d = 2, k = 3, n = 0 for Φ = (z²_1 − z¹_1)(z³_2 − z²_2) e^{−Σ|z^α|²/2σ²}.

    For t ~ ε the integrand reduces to −σ⁴ε / 36 (ε + t_1 + t_2)³, whose integral over
    t_1, t_2 > ε is −σ⁴/216.
    """
    return -(sigma**4) / 216.0


def closed_form_limit(awd: AnomalyWheelData, phi: TestFunction) -> float | None:
    """The exact iterated limit when Φ is centred at the origin with one of the edge polynomials above."""
    wd, phi = _normalized(awd, phi)
    if any(c != (0.0, 0.0) for row in phi.centers for c in row):
        return None
    if (wd.d, wd.k) == (1, 2):
        n = wd.n[0]
        if phi.poly == testfunctions.edge_polynomial(1, 2, {(1, 1): 1 + sum(n)}):
            return two_vertex_anomaly_limit(n, phi.width)
    if (wd.d, wd.k) == (2, 3) and not any(map(any, wd.n)):
        if phi.poly == testfunctions.edge_polynomial(2, 3, TRIANGLE_EDGE_POWERS):
            return triangle_anomaly_limit(phi.width)
    return None
