"""Analytic wheel weights and the identities behind their ε → 0 convergence.

A wheel with k vertices at z^1..z^k carries one regulated propagator on each
edge α: z^α → z^{α+1} (z^{k+1} = z^1) and the holomorphic derivatives
(∂/∂z^α)^{n^α} on the outgoing edge of every vertex. In the coordinates

    w^α = z^{α+1} − z^α  (α < k),    w^k = z^k

the edge variables are x_α = w^α for α < k and x_k = Σ_{α<k} w^α. The
antiholomorphic form factor of the product is computed exactly in grassmann.
Its first nonzero component c_S(w̄) is the scalar integrand paired with Φ.

Two evaluation schemes:
    gaussian  integrate w exactly against the Gaussian part of Φ with complex
              Wick moments, then run adaptive Gauss–Legendre in log t
    direct    integrate each t_α in closed form with the incomplete gamma
              function, then sample z with scrambled Sobol points drawn from Φ's Gaussian
"""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Literal, Sequence

import numpy as np
import sympy
from scipy.stats import norm

from app.config import settings
from app.errors import DegenerateSampleError, InfeasibleSchemeError, NonConvergenceError
from app.models.schemas import ConvergenceReport, RegulatorWindow, TestFunction, WeightEstimate, WheelData
from app.services import grassmann, scheduler, testfunctions
from app.services.kernels import radial_edge_factor
from app.utils import wick
from app.utils.quadrature import adaptive_gauss_legendre, replicate_estimate, sobol_batches

logger = logging.getLogger(__name__)

Scheme = Literal["direct", "gaussian"]
Kind = Literal["wheel", "anomaly"]

SCHEMES = ("direct", "gaussian")
MAX_DIRECT_DK = 8
MAX_GAUSSIAN_K = 6
PREPARED_CACHE_SIZE = 64
TAIL = 3
NOISE_FLOOR = 1e-13
ENVELOPE_SLACK = 2.0


def holo_symbol(alpha: int, i: int) -> sympy.Symbol:
    return sympy.Symbol(f"w_{alpha}_{i}")


def coordinate_transform(k: int) -> np.ndarray:
    """Real unimodular T with z = T w."""
    transform = np.zeros((k, k))
    transform[:, k - 1] = 1.0
    for a in range(k - 1):
        transform[a, a : k - 1] = -1.0
    return transform


def edge_monomials(wd: WheelData) -> sympy.Expr:
    """∏_α (x̄_α)^{n^α} written in the symbols w̄^α_i with α < k."""
    d, k = wd.d, wd.k
    expr = sympy.Integer(1)
    for a in range(1, k):
        for i, power in enumerate(wd.column(a), start=1):
            expr *= grassmann.wbar_symbol(a, i) ** power
    for i, power in enumerate(wd.column(k), start=1):
        expr *= sum(grassmann.wbar_symbol(a, i) for a in range(1, k)) ** power
    return expr


def edge_prefactor(d: int, orders: Sequence[int], t: np.ndarray, eps_closing: float | None = None) -> np.ndarray:
    """∏ (4πt_α)^{−d} (4t_α)^{−1} (−1/4t_α)^{|n^α|} over the integrated edges.

    With eps_closing set, the last edge is the heat kernel K_ε and contributes
    (4πε)^{−d} (−1/4ε)^{|n^k|} instead of a t-integral.
    """
    out = np.ones(len(t))
    for a in range(t.shape[1]):
        ta = t[:, a]
        out = out * (4.0 * math.pi * ta) ** (-d) / (4.0 * ta) * (-0.25 / ta) ** orders[a]
    if eps_closing is not None:
        out = out * (4.0 * math.pi * eps_closing) ** (-d) * (-0.25 / eps_closing) ** orders[-1]
    return out


@dataclass(frozen=True)
class WheelIntegrand:
    """Everything both schemes need, prepared once per (kind, wheel, Φ)."""

    kind: Kind
    d: int
    k: int
    orders: tuple[int, ...]
    scalar_factor: sympy.Expr
    terms: tuple[wick.Term, ...]
    phi: TestFunction
    g0: np.ndarray
    h: np.ndarray
    offset: float

    @property
    def exact_zero(self) -> bool:
        return not self.terms


def _form_factor(kind: Kind, d: int, k: int) -> grassmann.GrassmannElement:
    if kind == "wheel":
        return grassmann.propagator_form_factor(d, k)
    return grassmann.anomaly_form_factor(d, k)


def _build(kind: Kind, wd: WheelData, phi: TestFunction) -> WheelIntegrand:
    d, k = wd.d, wd.k
    sigma2 = phi.width**2
    transform = coordinate_transform(k)
    centers = testfunctions.center_array(phi)
    common = dict(
        kind=kind,
        d=d,
        k=k,
        orders=tuple(wd.order(a) for a in range(1, k + 1)),
        phi=phi,
        g0=transform.T @ transform / (2.0 * sigma2),
        h=centers.T @ transform / (2.0 * sigma2),
        offset=float(np.sum(np.abs(centers) ** 2) / (2.0 * sigma2)),
    )

    form = _form_factor(kind, d, k)
    if grassmann.is_zero(form):
        logger.info("%s form factor vanishes identically at d=%d, k=%d", kind, d, k)
        return WheelIntegrand(scalar_factor=sympy.Integer(0), terms=(), **common)

    _, leading = form.leading_component()
    scalar_factor = sympy.expand(leading * edge_monomials(wd))

    holo = [holo_symbol(a, i) for a in range(1, k + 1) for i in range(1, d + 1)]
    anti = [grassmann.wbar_symbol(a, i) for a in range(1, k + 1) for i in range(1, d + 1)]
    z, zbar = [], []
    for a in range(1, k + 1):
        for i in range(1, d + 1):
            z.append(holo_symbol(k, i) - sum(holo_symbol(b, i) for b in range(a, k)))
            zbar.append(grassmann.wbar_symbol(k, i) - sum(grassmann.wbar_symbol(b, i) for b in range(a, k)))
    expr = sympy.expand(scalar_factor * testfunctions.poly_expression(phi, z, zbar))
    if expr == 0:
        return WheelIntegrand(scalar_factor=scalar_factor, terms=(), **common)

    size = k * d
    terms = tuple(
        (monom[:size], monom[size:], complex(coeff)) for monom, coeff in sympy.Poly(expr, *holo, *anti).terms()
    )
    logger.debug("Prepared %s integrand d=%d k=%d with %d Wick terms", kind, d, k, len(terms))
    return WheelIntegrand(scalar_factor=scalar_factor, terms=terms, **common)


@dataclass(frozen=True)
class _PrepareKey:
    kind: Kind
    wd_repr: str
    phi_repr: str
    wd: WheelData = field(compare=False)
    phi: TestFunction = field(compare=False)


@lru_cache(maxsize=PREPARED_CACHE_SIZE)
def _prepared(key: _PrepareKey) -> WheelIntegrand:
    return _build(key.kind, key.wd, key.phi)


def prepare(kind: Kind, wd: WheelData, phi: TestFunction) -> WheelIntegrand:
    """Build (or fetch) the integrand; grid drivers call this once before fanning out."""
    if (phi.d, phi.k) != (wd.d, wd.k):
        raise ValueError(f"Test function lives on (C^{phi.d})^{phi.k}, wheel needs (C^{wd.d})^{wd.k}")
    return _prepared(_PrepareKey(kind, repr(wd), repr(phi), wd, phi))


def gaussian_block(integrand: WheelIntegrand, s: np.ndarray, eps_closing: float | None = None) -> np.ndarray:
    """Integrand in s = log t after exact Gaussian integration over w."""
    t = np.exp(s)
    n = len(t)
    d, k = integrand.d, integrand.k
    inv = 1.0 / t
    closing = inv[:, k - 1] if eps_closing is None else np.full(n, 1.0 / eps_closing)
    m = np.zeros((n, k, k))
    m[:, : k - 1, : k - 1] = closing[:, None, None]
    diag = np.arange(k - 1)
    m[:, diag, diag] += inv[:, : k - 1]
    a = 0.25 * m + integrand.g0
    cov = np.linalg.inv(a)
    mean = np.einsum("nab,ib->nai", cov, integrand.h)
    quad = np.einsum("ia,nai->n", np.conj(integrand.h), mean).real
    gauss = (math.pi**k / np.linalg.det(a)) ** d * np.exp(quad - integrand.offset)
    moments = wick.expectation(list(integrand.terms), mean.reshape(n, k * d), cov, d)
    return edge_prefactor(d, integrand.orders, t, eps_closing) * gauss * moments * np.prod(t, axis=1)


def gaussian_weight(
    integrand: WheelIntegrand,
    box: Sequence[tuple[float, float]],
    eps_closing: float | None = None,
) -> WeightEstimate:
    lows = [math.log(lo) for lo, _ in box]
    highs = [math.log(hi) for _, hi in box]
    value, error, converged, evaluations = adaptive_gauss_legendre(
        lambda s: gaussian_block(integrand, s, eps_closing),
        lows,
        highs,
        cancellation_rtol=settings.quad_cancellation_rtol,
    )
    if not converged:
        logger.warning("%s weight d=%d k=%d did not converge: %r", integrand.kind, integrand.d, integrand.k, value)
        raise NonConvergenceError(
            f"t-quadrature for the {integrand.kind} weight stopped at order {settings.quad_max_order}", value, error
        )
    return WeightEstimate(value=value, error=error, scheme="gaussian", evaluations=evaluations)


def _vertex_densities(z: np.ndarray, centers: np.ndarray, sigma: float) -> np.ndarray:
    """Per-vertex complex normal densities N(c^β, σ²) at z of shape (n, k, d); returns (n, k)."""
    d = z.shape[-1]
    r2 = np.sum(np.abs(z - centers) ** 2, axis=-1)
    return (2.0 * math.pi * sigma**2) ** (-d) * np.exp(-r2 / (2.0 * sigma**2))


def _log_radial_density(u: np.ndarray, r_lo: float, r_hi: float) -> np.ndarray:
    """Density on C^d of a log-uniform radius in [r_lo, r_hi] times a uniform direction."""
    d = u.shape[-1]
    r = np.sqrt(np.sum(np.abs(u) ** 2, axis=-1))
    sphere = 2.0 * math.pi**d / math.factorial(d - 1)
    inside = (r >= r_lo) & (r <= r_hi)
    return np.where(inside, 1.0 / (sphere * np.maximum(r, r_lo) ** (2 * d) * math.log(r_hi / r_lo)), 0.0)


def _mixture_density(z, centers, sigma, r_lo, r_hi, weights) -> np.ndarray:
    """q = λ_0 p_0 + Σ_α λ_α p_α.

    p_0 is Φ's Gaussian. p_α draws every vertex but α+1 from it and places
    z^{α+1} at a log-uniform distance from z^α.
    """
    k = z.shape[1]
    vertex = _vertex_densities(z, centers, sigma)
    total = weights[0] * np.prod(vertex, axis=1)
    for a in range(k):
        head = (a + 1) % k
        others = np.prod(np.delete(vertex, head, axis=1), axis=1)
        total = total + weights[a + 1] * others * _log_radial_density(z[:, head] - z[:, a], r_lo, r_hi)
    return total


def _edge_component(noise, uniform, centers, sigma, alpha, r_lo, r_hi, rotations) -> np.ndarray:
    """Samples of p_α, each repeated under the phases e^{2πij/rotations} of its short edge."""
    z = centers + sigma * noise
    head = (alpha + 1) % z.shape[1]
    direction = noise[:, head] / np.sqrt(np.sum(np.abs(noise[:, head]) ** 2, axis=-1, keepdims=True))
    u = (r_lo * (r_hi / r_lo) ** uniform)[:, None] * direction
    phases = np.exp(2j * math.pi * np.arange(rotations) / rotations)
    z = np.repeat(z, rotations, axis=0)
    z[:, head] = z[:, alpha] + (u[:, None, :] * phases[None, :, None]).reshape(-1, u.shape[-1])
    return z


def _direct_weight(integrand: WheelIntegrand, win: RegulatorWindow, seed: int | None = None) -> WeightEstimate:
    """Closed-form t-integrals, then multiple importance sampling over z.

    Half of every Sobol set samples Φ's Gaussian; the rest is shared among the k
    edges, each sampled at log-uniform length between √ε/4 and a few widths so the
    near-diagonal region is covered at every scale.
    """
    d, k = integrand.d, integrand.k
    dk = d * k
    sigma = integrand.phi.width
    centers = testfunctions.center_array(integrand.phi)
    anti = [grassmann.wbar_symbol(a, i) for a in range(1, k) for i in range(1, d + 1)]
    scalar = sympy.lambdify(anti, integrand.scalar_factor, "numpy")
    rotations = settings.qmc_rotations
    r_lo = 0.25 * math.sqrt(win.eps)
    r_hi = 6.0 * min(sigma, math.sqrt(win.L))

    def f(z):
        edges = np.concatenate([np.diff(z, axis=1), (z[:, -1] - z[:, 0])[:, None, :]], axis=1)
        r2 = np.sum(np.abs(edges) ** 2, axis=-1)
        radial = np.prod([radial_edge_factor(d, integrand.orders[a], win, r2[:, a]) for a in range(k)], axis=0)
        xbar = np.conj(edges[:, : k - 1, :]).reshape(len(z), (k - 1) * d)
        return testfunctions.evaluate(integrand.phi, z) * scalar(*xbar.T) * radial

    estimates = []
    evaluations = 0
    for u in sobol_batches(2 * dk + 1, seed=seed):
        gaussian = norm.ppf(u[:, :-1])
        noise = (gaussian[:, :dk] + 1j * gaussian[:, dk:]).reshape(-1, k, d)
        if r_hi <= 2.0 * r_lo:
            samples = [centers + sigma * noise]
        else:
            half = len(u) // 2
            samples = [centers + sigma * noise[:half]]
            for a, part in enumerate(np.array_split(np.arange(half, len(u)), k)):
                samples.append(_edge_component(noise[part], u[part, -1], centers, sigma, a, r_lo, r_hi, rotations))
        counts = np.array([len(s) for s in samples], dtype=float)
        weights = counts / counts.sum()
        if len(samples) == 1:
            weights = np.concatenate([weights, np.zeros(k)])
        z = np.concatenate(samples)
        q = _mixture_density(z, centers, sigma, r_lo, max(r_hi, 2.0 * r_lo), weights)
        estimates.append(complex(np.mean(f(z) / q)))
        evaluations += len(z)
    value, error = replicate_estimate(estimates)
    return WeightEstimate(value=value, error=error, scheme="direct", evaluations=evaluations)


def check_feasible(wd: WheelData, scheme: str):
    if scheme not in SCHEMES:
        raise InfeasibleSchemeError(f"Unknown scheme {scheme!r}, expected one of {SCHEMES}")
    if scheme == "direct" and wd.d * wd.k > MAX_DIRECT_DK:
        raise InfeasibleSchemeError(f"Direct scheme needs d*k <= {MAX_DIRECT_DK}, got {wd.d * wd.k}")
    if scheme == "gaussian" and wd.k > MAX_GAUSSIAN_K:
        raise InfeasibleSchemeError(f"Gaussian scheme needs k <= {MAX_GAUSSIAN_K}, got {wd.k}")


def wheel_weight(
    wd: WheelData,
    phi: TestFunction,
    win: RegulatorWindow,
    scheme: Scheme = "gaussian",
    t_box: Sequence[tuple[float, float]] | None = None,
    seed: int | None = None,
) -> WeightEstimate:
    """W^{k,(n)}_{ε<L}(Φ).

    t_box restricts each t_α to its own interval instead of [ε, L]; the
    gaussian scheme only. k ≤ d returns an exact zero without integrating.
    """
    check_feasible(wd, scheme)
    integrand = prepare("wheel", wd, phi)
    if integrand.exact_zero:
        return WeightEstimate(value=0j, scheme=scheme, exact_zero=True)
    if scheme == "direct":
        if t_box is not None:
            raise InfeasibleSchemeError("Box-restricted t domains need the gaussian scheme")
        return _direct_weight(integrand, win, seed)
    box = list(t_box) if t_box is not None else [(win.eps, win.L)] * wd.k
    if len(box) != wd.k or any(not 0 < lo < hi for lo, hi in box):
        raise ValueError(f"t_box needs {wd.k} intervals 0 < lo < hi, got {box}")
    return gaussian_weight(integrand, box)


def compare_schemes(wd: WheelData, phi: TestFunction, win: RegulatorWindow) -> tuple[WeightEstimate, WeightEstimate, bool]:
    """Run both schemes; they agree when the gap is inside the combined error bars."""
    direct = wheel_weight(wd, phi, win, "direct")
    gaussian = wheel_weight(wd, phi, win, "gaussian")
    agree = abs(direct.value - gaussian.value) <= direct.error + gaussian.error
    return direct, gaussian, agree


def default_eps_grid(L: float, points: int | None = None, eps0: float | None = None) -> list[float]:
    points = points or settings.sweep_points
    eps0 = min(eps0 or settings.sweep_eps0, L / 2.0)
    return [eps0 * 2.0**-m for m in range(points)]


def regulator_windows(L: float, eps_grid: Sequence[float]) -> list[RegulatorWindow]:
    ConvergenceReport(L=L, eps_grid=list(eps_grid))
    return [RegulatorWindow(eps=eps, L=L) for eps in eps_grid]


def richardson(eps_grid: Sequence[float], values: Sequence[complex], rate: float) -> list[complex]:
    """Remove a c·ε^rate term between neighbouring grid points."""
    out = []
    for m in range(len(values) - 1):
        factor = (eps_grid[m] / eps_grid[m + 1]) ** rate
        out.append((factor * values[m + 1] - values[m]) / (factor - 1.0))
    return out


def _richardson_errors(eps_grid: Sequence[float], errors: Sequence[float], rate: float) -> list[float]:
    out = []
    for m in range(len(errors) - 1):
        factor = (eps_grid[m] / eps_grid[m + 1]) ** rate
        out.append((factor * errors[m + 1] + errors[m]) / (factor - 1.0))
    return out


def _power_rate(eps: Sequence[float], deltas: Sequence[float]) -> float | None:
    points = [(e, delta) for e, delta in zip(eps, deltas) if delta > 0]
    if len(points) < 2:
        return None
    return float(np.polyfit(np.log([e for e, _ in points]), np.log([delta for _, delta in points]), 1)[0])


def _falling(deltas: Sequence[float], noise: Sequence[float]) -> bool:
    """Each difference is below its predecessor unless it is already inside the noise."""
    return all(b < a or b <= nb for a, b, nb in zip(deltas, deltas[1:], noise[1:]))


def _settled(values: Sequence[complex], errors: Sequence[float], scale: float, rtol: float) -> bool:
    deltas = [abs(b - a) for a, b in zip(values, values[1:])]
    if len(deltas) < TAIL:
        return False
    if all(delta == 0 for delta in deltas):
        return True
    floor = NOISE_FLOOR * scale
    noise = [max(errors[m] + errors[m + 1], floor) for m in range(len(deltas))]
    reference = abs(values[-1]) if abs(values[-1]) >= rtol * scale else scale
    return _falling(deltas[-TAIL:], noise[-TAIL:]) and deltas[-1] <= rtol * reference


def summarize_sweep(
    L: float,
    eps_grid: Sequence[float],
    estimates: Sequence[WeightEstimate | None],
    envelope: Callable[[float], float] | None = None,
    rtol: float | None = None,
) -> ConvergenceReport:
    """Cauchy differences, fitted decay rate and the convergence verdict of a sweep.

    Converged: the last three differences fall (or sit inside the error bars)
    and the last is below rtol relative to the final value. A limit that is
    negligible next to the sweep's scale is measured against that scale instead.
    If the raw values fail this test, the sequence Richardson-extrapolated at
    the tail rate is tried; its last entry then becomes the limit. A rise in the
    tail larger than the neighbouring error bars marks the sweep inconclusive.
    """
    rtol = settings.sweep_rtol if rtol is None else rtol
    values = [e.value if e is not None else None for e in estimates]
    errors = [e.error if e is not None else None for e in estimates]
    report = ConvergenceReport(L=L, eps_grid=list(eps_grid), values=values, error_bars=errors)
    if any(v is None for v in values):
        report.inconclusive = True
        report.note = "some grid points failed to evaluate"
        return report

    deltas = [abs(b - a) for a, b in zip(values, values[1:])]
    report.cauchy_deltas = deltas
    report.scale = max(abs(v) for v in values) if values else 0.0
    report.fitted_rate = _power_rate(eps_grid[1:], deltas)
    report.tail_rate = _power_rate(eps_grid[-TAIL:], deltas[-TAIL:])
    if envelope is not None:
        report.envelope_ratios = [abs(v) / envelope(eps) for v, eps in zip(values, eps_grid)]

    if deltas and all(delta == 0 for delta in deltas):
        report.converged = True
        return report
    report.converged = _settled(values, errors, report.scale, rtol)

    noise = [errors[m] + errors[m + 1] for m in range(len(deltas))]
    rate = report.tail_rate
    if not report.converged and rate is not None and rate > 0 and _falling(deltas[-TAIL:], noise[-TAIL:]):
        report.extrapolated = richardson(eps_grid, values, rate)
        extrapolated_errors = _richardson_errors(eps_grid, errors, rate)
        if _settled(report.extrapolated, extrapolated_errors, report.scale, rtol):
            report.converged = True
            report.extrapolated_limit = report.extrapolated[-1]
            report.note = f"limit extrapolated at tail rate {rate:.3g}"

    if not report.converged:
        report.inconclusive = any(
            deltas[m] > deltas[m - 1] + noise[m] + noise[m - 1] for m in range(max(1, len(deltas) - 3), len(deltas))
        )
    return report


def envelope_holds(report: ConvergenceReport, slack: float = ENVELOPE_SLACK) -> bool:
    """|value|/envelope never exceeds slack times its value at the coarsest ε.

    The coarsest point fixes the constant, so the check asks that the weight
    grow no faster than the bound as ε shrinks.
    """
    ratios = report.envelope_ratios
    if not ratios or not all(math.isfinite(r) for r in ratios):
        return False
    return max(ratios) <= slack * max(ratios[0], NOISE_FLOOR * max(ratios))


async def epsilon_sweep(
    wd: WheelData,
    phi: TestFunction,
    L: float,
    eps_grid: Sequence[float] | None = None,
    scheme: Scheme = "gaussian",
) -> ConvergenceReport:
    grid = list(eps_grid) if eps_grid is not None else default_eps_grid(L)
    windows = regulator_windows(L, grid)
    if wd.k <= wd.d:
        logger.info("Skipping sweep at d=%d, k=%d: weight vanishes identically", wd.d, wd.k)
        return ConvergenceReport(
            L=L,
            eps_grid=grid,
            values=[0j] * len(grid),
            error_bars=[0.0] * len(grid),
            cauchy_deltas=[0.0] * (len(grid) - 1),
            converged=True,
            skipped=True,
            note=f"k={wd.k} <= d={wd.d}: the wheel weight is identically zero",
        )
    check_feasible(wd, scheme)
    prepare("wheel", wd, phi)
    estimates = await scheduler.evaluate_grid(
        lambda win: wheel_weight(wd, phi, win, scheme), windows, f"wheel weight d={wd.d} k={wd.k}"
    )
    return summarize_sweep(L, grid, estimates, envelope=lambda eps: am_gm_bound(wd.d, wd.k, RegulatorWindow(eps=eps, L=L)))


def gaussian_matrix(t) -> np.ndarray:
    """(k−1)×(k−1) matrix with a_α = 1/t_α + 1/t_k on the diagonal and 1/t_k elsewhere."""
    t = np.asarray(t, dtype=float)
    if t.ndim != 1 or len(t) < 2 or np.any(t <= 0):
        raise ValueError(f"Need k >= 2 positive Schwinger parameters, got {t}")
    return np.full((len(t) - 1, len(t) - 1), 1.0 / t[-1]) + np.diag(1.0 / t[:-1])


def gaussian_det_identity(t) -> tuple[float, float]:
    """(1/det M, ∏t/Σt)."""
    matrix = gaussian_matrix(t)
    _, logdet = np.linalg.slogdet(matrix)
    t = np.asarray(t, dtype=float)
    return float(np.exp(-logdet)), float(np.prod(t) / np.sum(t))


def gaussian_det_identity_exact(t) -> tuple[sympy.Rational, sympy.Rational]:
    ts = [sympy.Rational(str(x)) for x in t]
    if len(ts) < 2 or any(x <= 0 for x in ts):
        raise ValueError(f"Need k >= 2 positive Schwinger parameters, got {t}")
    size = len(ts) - 1
    matrix = sympy.Matrix(size, size, lambda a, b: 1 / ts[-1] + (1 / ts[a] if a == b else 0))
    return 1 / matrix.det(), sympy.prod(ts) / sum(ts)


def derived_ibp_factor(wd: WheelData, alpha: int, i: int, t, w) -> complex:
    """Multiple of E produced by D_{α,i}: (−1)^{1+|n|} (w̄^α_i/4t_α) (w̄^α)^{n^α} / (4t_α)^{|n^α|}."""
    n = wd.column(alpha)
    order = sum(n)
    ta = float(t[alpha - 1])
    wbar = np.conj(np.asarray(w, dtype=complex)[alpha - 1])
    monomial = np.prod(wbar ** np.asarray(n))
    return complex((-1) ** (1 + order) * wbar[i - 1] / (4.0 * ta) * monomial / (4.0 * ta) ** order)


def ibp_identity_check(wd: WheelData, t, w) -> float:
    """Largest relative residual of D_{α,i} E = (derived factor)·E over all α < k and i.

    ∂̃_{α,j} = ∂/∂w^α_j − Σ_β (t_β/Σt) ∂/∂w^β_j and D_{α,i} = ∂̃_{α,i} ∏_j ∂̃_{α,j}^{n^α_j},
    applied to E = exp(−¼ Σ M_{αβ} w^α·w̄^β) by exact symbolic differentiation.
    """
    d, k = wd.d, wd.k
    t = np.asarray(t, dtype=float)
    w = np.asarray(w, dtype=complex)
    if t.shape != (k,) or w.shape != (k - 1, d):
        raise ValueError(f"Expected t of shape ({k},) and w of shape ({k - 1}, {d}), got {t.shape} and {w.shape}")
    scale = float(np.max(np.abs(w)))
    if scale == 0.0 or float(np.min(np.abs(w))) < 1e-6 * scale:
        raise DegenerateSampleError(f"Sample point has a vanishing component: {w.tolist()}")

    matrix = gaussian_matrix(t)
    holo = [[holo_symbol(a, i) for i in range(1, d + 1)] for a in range(1, k)]
    anti = [[grassmann.wbar_symbol(a, i) for i in range(1, d + 1)] for a in range(1, k)]
    exponent = sum(
        float(matrix[a, b]) * holo[a][i] * anti[b][i] for a in range(k - 1) for b in range(k - 1) for i in range(d)
    )
    gaussian = sympy.exp(-exponent / 4)
    weights = [float(t[b] / t.sum()) for b in range(k - 1)]

    def tilde(f, a, j):
        return sympy.diff(f, holo[a][j]) - sum(weights[b] * sympy.diff(f, holo[b][j]) for b in range(k - 1))

    values = {}
    for a in range(k - 1):
        for i in range(d):
            values[holo[a][i]] = complex(w[a, i])
            values[anti[a][i]] = complex(np.conj(w[a, i]))
    base_value = complex(gaussian.evalf(subs=values))

    residual = 0.0
    for a in range(k - 1):
        lowered = gaussian
        for j, power in enumerate(wd.column(a + 1)):
            for _ in range(power):
                lowered = tilde(lowered, a, j)
        for i in range(d):
            ratio = complex(tilde(lowered, a, i).evalf(subs=values)) / base_value
            claimed = derived_ibp_factor(wd, a + 1, i + 1, t, w)
            residual = max(residual, abs(ratio - claimed) / abs(claimed))
    return residual


def am_gm_bound(d: int, k: int, win: RegulatorWindow) -> float:
    """(1−d/k)^{−k} (L^{1−d/k} − ε^{1−d/k})^k, which bounds ∫_{[ε,L]^k} dt/(Σt)^d."""
    if k <= d:
        raise ValueError(f"The t-integral bound needs k > d, got d={d}, k={k}")
    p = 1.0 - d / k
    return p ** (-k) * (win.L**p - win.eps**p) ** k


def _t_integral(d: int, k: int, win: RegulatorWindow) -> complex:
    def integrand(s):
        t = np.exp(s)
        return np.prod(t, axis=1) / np.sum(t, axis=1) ** d

    lows, highs = [math.log(win.eps)] * k, [math.log(win.L)] * k
    value, error, converged, _ = adaptive_gauss_legendre(integrand, lows, highs)
    if not converged:
        raise NonConvergenceError(f"t-integral at d={d}, k={k} did not converge", value, error)
    return value


def t_integral_bound_check(d: int, k: int, win: RegulatorWindow) -> tuple[float, float]:
    """(∫_{[ε,L]^k} dt/(Σt)^d, AM-GM bound)."""
    bound = am_gm_bound(d, k, win)
    return float(_t_integral(d, k, win).real), bound


def leading_wick_term(d: int, k: int, t) -> np.ndarray:
    """(4π)^{−dk} ∏t^{−d} (∏t/Σt)^d, the n = 0 Gaussian integrand without Φ."""
    t = np.asarray(t, dtype=float)
    prod = np.prod(t, axis=-1)
    return (4.0 * math.pi) ** (-d * k) * prod ** (-d) * (prod / np.sum(t, axis=-1)) ** d


def leading_wick_integral(d: int, k: int, win: RegulatorWindow) -> float:
    return (4.0 * math.pi) ** (-d * k) * float(_t_integral(d, k, win).real)
