"""Heat kernel, regulated propagator and Bochner–Martinelli kernel on C^d.

Conventions:
    heat kernel      k_t(z, w) = (4πt)^{−d} exp(−|z−w|²/4t), so ∫ k_t = 1
    propagator       P_j = c_d (−1)^{j−1} (z̄_j − w̄_j) |z−w|^{−2d} γ(d; |z−w|²/4L, |z−w|²/4ε)
    Bochner–Martinelli  ω_j = (d−1)! c_d (−1)^{j−1} (z̄_j − w̄_j) |z−w|^{−2d}
with c_d = (2πi)^{−d}. The propagator therefore tends to ω_BM as ε → 0, L → ∞.
Its t-representation is c_d (−1)^{j−1} (z̄_j − w̄_j) 4^{−d} ∫_ε^L t^{−d−1} e^{−|z−w|²/4t} dt.
"""

import logging
import math

import numpy as np
from scipy import integrate

from app.errors import DiagonalSingularityError, NonConvergenceError
from app.models.schemas import GreensReport, KernelValue, RegulatorWindow, TestFunction
from app.services import testfunctions
from app.utils.gamma import lower_gamma_window
from app.utils.quadrature import adaptive_gauss_legendre

logger = logging.getLogger(__name__)

GREENS_RTOL = {1: 1e-9, 2: 1e-7}
GREENS_MAX_ORDER_D2 = 64


def normalization(d: int) -> complex:
    return 1.0 / (2j * math.pi) ** d


def as_point(coords) -> np.ndarray:
    point = np.atleast_1d(np.asarray(coords, dtype=complex))
    if not np.all(np.isfinite(point)):
        raise ValueError(f"Point has non-finite components: {coords}")
    return point


def _separation(z, w) -> tuple[np.ndarray, np.ndarray, float]:
    z, w = as_point(z), as_point(w)
    if z.shape != w.shape:
        raise ValueError(f"Points live in different dimensions: {z.shape} vs {w.shape}")
    diff = z - w
    r2 = float(np.sum(np.abs(diff) ** 2))
    if r2 == 0.0:
        raise DiagonalSingularityError(f"Kernel evaluated on the diagonal z = w = {z}")
    return z, diff, r2


def _check_index(j: int, d: int):
    if not 1 <= j <= d:
        raise ValueError(f"Form index j={j} outside 1..{d}")


def heat_kernel_scalar(t: float, z, w) -> float:
    if t <= 0:
        raise ValueError(f"Heat kernel needs t > 0, got {t}")
    z, w = as_point(z), as_point(w)
    d = z.shape[-1]
    r2 = np.sum(np.abs(z - w) ** 2, axis=-1)
    return (4.0 * math.pi * t) ** (-d) * np.exp(-r2 / (4.0 * t))


def propagator_coefficient(win: RegulatorWindow, j: int, z, w) -> complex:
    z, diff, r2 = _separation(z, w)
    d = len(z)
    _check_index(j, d)
    window = float(lower_gamma_window(d, r2 / (4.0 * win.L), r2 / (4.0 * win.eps)))
    sign = -1 if (j - 1) % 2 else 1
    return complex(normalization(d) * sign * np.conj(diff[j - 1]) * r2 ** (-d) * window)


def propagator_t_density(t: float, j: int, z, w) -> complex:
    """Integrand of the propagator in the Schwinger parameter t."""
    z, diff, r2 = _separation(z, w)
    d = len(z)
    _check_index(j, d)
    sign = -1 if (j - 1) % 2 else 1
    return complex(normalization(d) * sign * np.conj(diff[j - 1]) * 4.0 ** (-d) * t ** (-d - 1) * math.exp(-r2 / (4.0 * t)))


def propagator_form(win: RegulatorWindow, z, w) -> list[KernelValue]:
    d = len(as_point(z))
    return [KernelValue(coefficient=propagator_coefficient(win, j, z, w), form_index=j) for j in range(1, d + 1)]


def bochner_martinelli(j: int, z, w) -> complex:
    z, diff, r2 = _separation(z, w)
    d = len(z)
    _check_index(j, d)
    sign = -1 if (j - 1) % 2 else 1
    return complex(math.factorial(d - 1) * normalization(d) * sign * np.conj(diff[j - 1]) * r2 ** (-d))


def bochner_martinelli_form(z, w) -> list[KernelValue]:
    d = len(as_point(z))
    return [KernelValue(coefficient=bochner_martinelli(j, z, w), form_index=j) for j in range(1, d + 1)]


def radial_edge_factor(d: int, n: int, win: RegulatorWindow, r2: np.ndarray) -> np.ndarray:
    """t-integrated scalar factor of one wheel edge carrying n holomorphic derivatives.

    ∫_ε^L (4πt)^{−d} (4t)^{−1} (−1/4t)^n e^{−r²/4t} dt
        = (4π)^{−d} 4^{−1} (−1/4)^n (4/r²)^{d+n} γ(d+n; r²/4L, r²/4ε).
    The antiholomorphic monomials that accompany it are supplied by the caller.
    """
    s = d + n
    r2 = np.asarray(r2, dtype=float)
    window = lower_gamma_window(s, r2 / (4.0 * win.L), r2 / (4.0 * win.eps))
    return (4.0 * math.pi) ** (-d) * 0.25 * (-0.25) ** n * (4.0 / r2) ** s * window


def greens_sign(d: int) -> int:
    """Sign s with ∫ ω_BM ∧ ∂̄φ ∧ d^d z = s·φ(0) under the pairing used below."""
    return -1 if d % 2 else 1


def _pairing_density(phi: TestFunction, z: np.ndarray) -> np.ndarray:
    """(2i)^d Σ_j (−1)^{d−j} ω_j(z, 0) ∂φ/∂z̄_j at points z of shape (n, d)."""
    d = phi.d
    r2 = np.sum(np.abs(z) ** 2, axis=-1)
    total = np.zeros(len(z), dtype=complex)
    zk = z[:, None, :]
    for j in range(1, d + 1):
        sign = (-1) ** (j - 1) * (-1) ** (d - j)
        omega = math.factorial(d - 1) * normalization(d) * sign * np.conj(z[:, j - 1]) / r2**d
        total += omega * testfunctions.dbar(phi, zk, 1, j)
    return (2j) ** d * total


def _radius(phi: TestFunction) -> float:
    return float(np.max(np.abs(testfunctions.center_array(phi)))) + 12.0 * phi.width


def greens_equation_check(phi: TestFunction, rtol: float | None = None) -> GreensReport:
    """Pair ω_BM(·, 0) with ∂̄φ and compare with φ(0).

    d = 1 runs adaptive polar quadrature with scipy; d = 2 runs tensor Gauss–Legendre in
    coordinates z_1 = r cos ψ e^{iθ_1}, z_2 = r sin ψ e^{iθ_2}. The default rtol is the
    tightest each rule reaches: 1e-9 in the plane, 1e-7 for the four-dimensional tensor rule.
    """
    if phi.k != 1 or phi.d not in (1, 2):
        raise ValueError(f"Green's check needs a single-vertex test function on C^1 or C^2, got k={phi.k}, d={phi.d}")
    rtol = GREENS_RTOL[phi.d] if rtol is None else rtol
    R = _radius(phi)
    phi0 = complex(testfunctions.evaluate(phi, np.zeros((1, phi.d), dtype=complex)))

    if phi.d == 1:

        def polar(theta, r, part):
            z = np.array([[r * np.exp(1j * theta)]])
            value = _pairing_density(phi, z)[0] * r
            return value.real if part == 0 else value.imag

        parts = []
        errors = []
        for part in (0, 1):
            val, err = integrate.dblquad(
                polar, 0.0, R, 0.0, 2.0 * math.pi, args=(part,), epsabs=1e-12, epsrel=rtol
            )
            parts.append(val)
            errors.append(err)
        value = complex(parts[0], parts[1])
        error = float(math.hypot(*errors))
    else:

        def hopf(pts):
            r, psi, t1, t2 = pts.T
            z = np.stack([r * np.cos(psi) * np.exp(1j * t1), r * np.sin(psi) * np.exp(1j * t2)], axis=-1)
            jac = r**3 * np.cos(psi) * np.sin(psi)
            return _pairing_density(phi, z) * jac

        value, error, converged, _ = adaptive_gauss_legendre(
            hopf,
            [0.0, 0.0, 0.0, 0.0],
            [R, math.pi / 2, 2 * math.pi, 2 * math.pi],
            rtol=rtol,
            max_order=GREENS_MAX_ORDER_D2,
            atol=1e-12,
        )
        if not converged:
            logger.warning("Green's pairing on C^2 did not reach rtol=%g: %r", rtol, value)
            raise NonConvergenceError("Green's pairing quadrature did not converge", value, error)

    return GreensReport(d=phi.d, value=value, phi_at_origin=phi0, sign_convention=greens_sign(phi.d), error=error)
