import itertools
import logging
from functools import lru_cache
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.stats import qmc

from app.config import settings

logger = logging.getLogger(__name__)

Integrand = Callable[[np.ndarray], np.ndarray]


@lru_cache(maxsize=32)
def gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    return leggauss(order)


def _tensor_sums(f: Integrand, lows, highs, order: int, chunk_points: int | None = None) -> tuple[complex, float]:
    lows = np.asarray(lows, dtype=float)
    highs = np.asarray(highs, dtype=float)
    dim = len(lows)
    chunk_points = chunk_points or settings.quad_chunk_points
    x, w = gauss_legendre(order)
    half = 0.5 * (highs - lows)
    nodes = [lows[j] + half[j] * (x + 1.0) for j in range(dim)]
    weights = [half[j] * w for j in range(dim)]

    lead = 0
    while lead < dim and order ** (dim - lead) > chunk_points:
        lead += 1
    if lead < dim:
        grids = np.meshgrid(*nodes[lead:], indexing="ij")
        wgrids = np.meshgrid(*weights[lead:], indexing="ij")
        tail_pts = np.stack([g.ravel() for g in grids], axis=-1)
        tail_wts = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=1)
    else:
        tail_pts = np.zeros((1, 0))
        tail_wts = np.ones(1)

    total = 0j
    magnitude = 0.0
    for idx in itertools.product(range(order), repeat=lead):
        head = np.array([nodes[j][idx[j]] for j in range(lead)])
        head_w = float(np.prod([weights[j][idx[j]] for j in range(lead)])) if lead else 1.0
        pts = np.hstack([np.broadcast_to(head, (len(tail_pts), lead)), tail_pts])
        values = f(pts)
        total += head_w * complex(np.sum(tail_wts * values))
        magnitude += abs(head_w) * float(np.sum(np.abs(tail_wts * values)))
    return total, magnitude


def tensor_gauss_legendre(
    f: Integrand,
    lows,
    highs,
    order: int,
    chunk_points: int | None = None,
) -> complex:
    """Tensor-product Gauss–Legendre rule over a box.

    f receives points of shape (n, dim) and returns n values. The grid is walked
    in blocks over its leading axes so no block exceeds chunk_points.
    """
    return _tensor_sums(f, lows, highs, order, chunk_points)[0]


def adaptive_gauss_legendre(
    f: Integrand,
    lows,
    highs,
    rtol: float | None = None,
    min_order: int | None = None,
    max_order: int | None = None,
    atol: float = 0.0,
    cancellation_rtol: float = 0.0,
) -> tuple[complex, float, bool, int]:
    """Double the per-axis order until two successive rules agree.

    Returns (value, error, converged, evaluations) with error = |Q_q − Q_{q/2}|.
    Agreement means error ≤ max(rtol·|Q|, atol, cancellation_rtol·∫|f|); the last
    term accepts integrals that cancel down to rounding noise.
    """
    rtol = settings.quad_rtol if rtol is None else rtol
    order = min_order or settings.quad_min_order
    max_order = max_order or settings.quad_max_order
    dim = len(lows)
    previous, _ = _tensor_sums(f, lows, highs, order)
    evaluations = order**dim
    while True:
        order *= 2
        if order > max_order:
            return previous, float("inf"), False, evaluations
        current, magnitude = _tensor_sums(f, lows, highs, order)
        evaluations += order**dim
        error = abs(current - previous)
        logger.debug("Gauss-Legendre order %d: %r (change %.3e, |f| mass %.3e)", order, current, error, magnitude)
        if error <= max(rtol * abs(current), atol, cancellation_rtol * magnitude):
            return current, error, True, evaluations
        previous = current


def sobol_batches(dim: int, log2_points: int | None = None, replicates: int | None = None, seed: int | None = None):
    """Independent scrambled Sobol point sets in the open unit cube."""
    log2_points = log2_points or settings.qmc_log2_points
    replicates = replicates or settings.qmc_replicates
    rng = np.random.default_rng(settings.seed if seed is None else seed)
    for _ in range(replicates):
        engine = qmc.Sobol(d=dim, scramble=True, seed=rng)
        yield np.clip(engine.random_base2(m=log2_points), 1e-15, 1.0 - 1e-15)


def replicate_estimate(values: list[complex]) -> tuple[complex, float]:
    """Mean of replicate estimates and a three-standard-error bar."""
    arr = np.asarray(values, dtype=complex)
    mean = complex(arr.mean())
    if len(arr) < 2:
        return mean, float("inf")
    spread = np.sqrt(np.var(arr.real, ddof=1) + np.var(arr.imag, ddof=1))
    return mean, float(3.0 * spread / np.sqrt(len(arr)))
