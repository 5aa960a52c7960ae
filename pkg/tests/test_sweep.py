import time
from unittest.mock import patch

import pytest

from app.config import settings
from app.models.schemas import WeightEstimate, WheelData
from app.services.scheduler import evaluate_grid
from app.services.testfunctions import edge_polynomial, gaussian_test_function
from app.services.weights import default_eps_grid, envelope_holds, epsilon_sweep, richardson, summarize_sweep

GRID = default_eps_grid(1.0, points=12, eps0=1e-2)


def _estimates(values, error=0.0):
    return [WeightEstimate(value=complex(v), error=error, scheme="gaussian") for v in values]


def _phi(d, k):
    return gaussian_test_function(d, k, centers=[[0.5 * a] + [0.0] * (d - 1) for a in range(1, k + 1)])


def _triangle_phi():
    """Origin-centred Φ times (z²₁ - z¹₁)(z³₂ - z²₂)², on which the d=2 wheel weight is positive."""
    return gaussian_test_function(2, 3, poly=edge_polynomial(2, 3, {(1, 1): 1, (2, 2): 2}))


def _fake_weight(wd, phi, win, scheme="gaussian"):
    # Larger eps finishes last so completion order differs from grid order.
    time.sleep(0.02 if win.eps > 1e-3 else 0.0)
    return WeightEstimate(value=complex(2.0 + win.eps), scheme=scheme)


def test_default_grid_halves_and_stays_below_L():
    grid = default_eps_grid(1e-3, points=5, eps0=1e-2)
    assert grid[0] == pytest.approx(5e-4)
    assert all(b == pytest.approx(a / 2) for a, b in zip(grid, grid[1:]))


def test_linear_approach_converges_with_rate_one():
    report = summarize_sweep(1.0, GRID, _estimates([1.0 + eps for eps in GRID]))
    assert report.converged
    assert not report.inconclusive
    assert report.fitted_rate == pytest.approx(1.0, abs=1e-6)
    assert report.limit == pytest.approx(1.0 + GRID[-1])


def test_slow_monotone_approach_is_not_converged():
    grid = GRID[:4]
    report = summarize_sweep(1.0, grid, _estimates([1.0, 2.0, 2.5, 2.75]))
    assert not report.converged
    assert not report.inconclusive


def test_vanishing_limit_converges_by_extrapolation():
    slope = 1e-6 * (-1.5 + 1.0j)
    report = summarize_sweep(1.0, GRID, _estimates([slope * eps for eps in GRID]))
    assert report.converged
    assert not report.inconclusive
    assert report.tail_rate == pytest.approx(1.0, abs=1e-6)
    assert abs(report.limit) <= 1e-9 * report.scale
    assert "extrapolated" in report.note


def test_square_root_approach_converges_by_extrapolation():
    report = summarize_sweep(1.0, GRID, _estimates([1.0 + 0.3 * eps**0.5 for eps in GRID]))
    assert report.converged
    assert report.extrapolated_limit is not None
    assert report.tail_rate == pytest.approx(0.5, abs=1e-6)
    assert report.limit == pytest.approx(1.0, abs=1e-9)


def test_richardson_removes_the_leading_power():
    grid = GRID[:4]
    assert richardson(grid, [2.0 + 5.0 * eps for eps in grid], 1.0) == pytest.approx([2.0, 2.0, 2.0])
    assert richardson(grid, [eps**0.5 for eps in grid], 0.5) == pytest.approx([0.0, 0.0, 0.0], abs=1e-15)


def test_raw_convergence_needs_no_extrapolation():
    report = summarize_sweep(1.0, GRID, _estimates([1.0 + eps for eps in GRID]))
    assert report.extrapolated == []
    assert report.extrapolated_limit is None


def test_tail_rise_is_inconclusive():
    grid = GRID[:6]
    report = summarize_sweep(1.0, grid, _estimates([1.0, 0.5, 0.25, 0.2, 0.5, 1.5]))
    assert not report.converged
    assert report.inconclusive


def test_tail_rise_inside_error_bars_is_tolerated():
    grid = GRID[:6]
    report = summarize_sweep(1.0, grid, _estimates([1.0, 0.5, 0.25, 0.2, 0.5, 1.5], error=1.0))
    assert not report.inconclusive


def test_failed_point_marks_sweep_inconclusive():
    estimates = _estimates([1.0 + eps for eps in GRID])
    estimates[4] = None
    report = summarize_sweep(1.0, GRID, estimates)
    assert report.inconclusive
    assert not report.converged
    assert report.values[4] is None
    assert "failed" in report.note


def test_constant_sweep_counts_as_converged():
    report = summarize_sweep(1.0, GRID[:5], _estimates([3.0] * 5))
    assert report.converged
    assert report.fitted_rate is None


def test_envelope_ratios():
    report = summarize_sweep(1.0, GRID[:3], _estimates([2.0, 2.0, 2.0]), envelope=lambda eps: 4.0)
    assert report.envelope_ratios == [0.5, 0.5, 0.5]


def test_envelope_check():
    flat = summarize_sweep(1.0, GRID[:4], _estimates([1.0] * 4), envelope=lambda eps: 4.0)
    assert envelope_holds(flat)
    tracking = summarize_sweep(1.0, GRID[:4], _estimates([0.1 / eps for eps in GRID[:4]]), envelope=lambda eps: 1.0 / eps)
    assert envelope_holds(tracking)
    growing = summarize_sweep(1.0, GRID[:4], _estimates([1.0, 2.0, 4.0, 8.0]), envelope=lambda eps: 4.0)
    assert not envelope_holds(growing)
    assert not envelope_holds(summarize_sweep(1.0, GRID[:3], _estimates([1.0] * 3)))


def test_grid_must_decrease():
    with pytest.raises(ValueError):
        summarize_sweep(1.0, [1e-3, 1e-2], _estimates([1.0, 1.0]))


@pytest.mark.asyncio
async def test_scheduler_keeps_order_and_isolates_failures():
    def work(x):
        if x == 3:
            raise ArithmeticError("bad point")
        time.sleep(0.01 * (5 - x))
        return x * x

    results = await evaluate_grid(work, [0, 1, 2, 3, 4], "squares")
    assert results == [0, 1, 4, None, 16]


@pytest.mark.asyncio
async def test_sweep_skipped_when_weight_vanishes():
    wd = WheelData(k=2, n=[[0, 0], [0, 0]])
    with patch("app.services.weights.wheel_weight") as weight:
        report = await epsilon_sweep(wd, _phi(2, 2), 1.0, GRID[:4])
    weight.assert_not_called()
    assert report.skipped and report.converged
    assert report.values == [0j] * 4


@pytest.mark.asyncio
async def test_sweep_assembles_in_grid_order():
    wd = WheelData(k=2, n=[[0, 0]])
    with patch("app.services.weights.wheel_weight", side_effect=_fake_weight):
        report = await epsilon_sweep(wd, _phi(1, 2), 1.0, GRID)
    assert report.values == [complex(2.0 + eps) for eps in GRID]
    assert report.converged
    assert len(report.envelope_ratios) == len(GRID)


@pytest.mark.asyncio
async def test_sweep_survives_failing_point():
    wd = WheelData(k=2, n=[[0, 0]])

    def flaky(wd, phi, win, scheme="gaussian"):
        if win.eps == GRID[2]:
            raise FloatingPointError("overflow")
        return WeightEstimate(value=complex(1.0 + win.eps), scheme=scheme)

    with patch("app.services.weights.wheel_weight", side_effect=flaky):
        report = await epsilon_sweep(wd, _phi(1, 2), 1.0, GRID)
    assert report.values[2] is None
    assert report.inconclusive


@pytest.mark.asyncio
async def test_sweep_rejects_bad_grid():
    with pytest.raises(ValueError):
        await epsilon_sweep(WheelData(k=2, n=[[0, 0]]), _phi(1, 2), 1.0, [1e-3, 2e-3])


@pytest.mark.slow
@pytest.mark.asyncio
async def test_two_vertex_sweep_converges(monkeypatch):
    monkeypatch.setattr(settings, "quad_rtol", 1e-9)
    report = await epsilon_sweep(WheelData(k=2, n=[[0, 0]]), _phi(1, 2), 1.0)
    assert report.converged
    assert report.fitted_rate >= 0.5 - 0.05
    assert envelope_holds(report)


@pytest.mark.slow
@pytest.mark.asyncio
async def test_three_vertex_sweep_decays():
    wd = WheelData(k=3, n=[[0, 0, 0]])
    report = await epsilon_sweep(wd, _phi(1, 3), 1.0)
    assert report.converged
    assert not report.inconclusive
    assert report.fitted_rate >= 1.0 - 1 / 3 - 0.05
    assert envelope_holds(report)


@pytest.mark.slow
@pytest.mark.asyncio
async def test_three_vertex_sweep_in_two_dimensions():
    wd = WheelData(k=3, n=[[0, 0, 0], [0, 0, 0]])
    report = await epsilon_sweep(wd, _triangle_phi(), 1.0)
    assert report.converged
    assert not report.inconclusive
    assert report.limit.real > 0
    assert report.fitted_rate >= 1.0 - 2 / 3 - 0.05
    assert envelope_holds(report)
