import math
from fractions import Fraction
from unittest.mock import patch

import pytest

from app.models.schemas import AnomalyWheelData, RegulatorWindow, WeightEstimate, WheelData
from app.services.anomaly import (
    TRIANGLE_EDGE_POWERS,
    anomaly_limit_scan,
    anomaly_t_bound,
    anomaly_weight,
    closed_form_limit,
    rotate_wheel,
    triangle_anomaly_limit,
    two_vertex_anomaly,
    two_vertex_anomaly_limit,
)
from app.services.testfunctions import edge_polynomial, gaussian_test_function
from app.services.weights import envelope_holds

WIN = RegulatorWindow(eps=1e-3, L=1.0)
RATIOS = [1e-2 * 2.0**-m for m in range(12)]


def _awd(n, edge=None):
    return AnomalyWheelData(wd=WheelData(k=len(n[0]), n=n), distinguished_edge=edge)


def _phi(d, k, poly=None):
    centers = [[0.5 * a + 0.1j * a] + [0.0] * (d - 1) for a in range(1, k + 1)]
    return gaussian_test_function(d, k, centers=centers, poly=poly)


def _edge_phi(d, k, powers, centers=None):
    """Φ centred at the origin (unless told otherwise) times an edge polynomial."""
    return gaussian_test_function(d, k, centers=centers, poly=edge_polynomial(d, k, powers))


def test_default_edge_is_the_closing_edge():
    assert _awd([[0, 0, 0]]).distinguished_edge == 3


def test_edge_out_of_range_rejected():
    with pytest.raises(ValueError):
        _awd([[0, 0]], edge=3)


def test_rotation_relabels_everything():
    d, k = 1, 3
    poly = {(1, 0, 0, 0, 0, 2): Fraction(1, 2)}
    awd = _awd([[2, 0, 1]], edge=1)
    rotated, phi = rotate_wheel(awd, _phi(d, k, poly), 1)
    assert rotated.wd.n == [[1, 2, 0]]
    assert rotated.distinguished_edge == 2
    assert phi.centers[1] == _phi(d, k).centers[0]
    assert phi.poly == {(0, 1, 0, 2, 0, 0): Fraction(1, 2)}


def test_full_rotation_is_identity():
    awd = _awd([[1, 0, 2]], edge=2)
    phi = _phi(1, 3)
    rotated, rotated_phi = rotate_wheel(awd, phi, 3)
    assert rotated == awd
    assert rotated_phi == phi


def test_vanishes_identically_below_threshold():
    estimate = anomaly_weight(_awd([[1, 0], [0, 0]]), _phi(2, 2), WIN)
    assert estimate.exact_zero
    assert estimate.value == 0


def test_weight_independent_of_labelling():
    awd, phi = _awd([[1, 0]]), _phi(1, 2)
    base = anomaly_weight(awd, phi, WIN)
    assert base.value != 0
    for shift in (1, 2):
        rotated, rotated_phi = rotate_wheel(awd, phi, shift)
        assert anomaly_weight(rotated, rotated_phi, WIN).value == pytest.approx(base.value, rel=1e-12)


def test_t_bound_logarithmic_at_threshold():
    assert anomaly_t_bound(1, 2, WIN) == pytest.approx(math.log(1e3))
    assert anomaly_t_bound(2, 3, WIN) == pytest.approx(math.log(1e3) ** 2)


def test_t_bound_power_law_above_threshold():
    expected = ((1.0 - math.sqrt(1e-3)) / 0.5) ** 2
    assert anomaly_t_bound(1, 3, WIN) == pytest.approx(expected)


@pytest.mark.parametrize("n", [[0, 0], [1, 0]])
def test_two_vertex_weight_matches_reduced_integral(n):
    awd, phi = _awd([n]), _edge_phi(1, 2, {(1, 1): 1 + sum(n)})
    estimate = anomaly_weight(awd, phi, WIN)
    assert estimate.value.real == pytest.approx(two_vertex_anomaly(n, 1.0, WIN), rel=1e-5)
    assert abs(estimate.value.imag) <= 1e-8 * abs(estimate.value.real)


def test_two_vertex_closed_form_values():
    assert two_vertex_anomaly_limit([0, 0], 1.0) == pytest.approx(1 / 8, rel=1e-10)
    assert two_vertex_anomaly_limit([1, 0], 1.0) == pytest.approx(-1 / 16, rel=1e-10)
    assert two_vertex_anomaly_limit([0, 0], 2.0) == pytest.approx(4 / 8, rel=1e-10)
    deep = RegulatorWindow(eps=1e-9, L=1.0)
    assert two_vertex_anomaly([0, 0], 1.0, deep) == pytest.approx(1 / 8, rel=1e-6)
    with pytest.raises(ValueError):
        two_vertex_anomaly_limit([0, 0, 0], 1.0)


def test_closed_form_recognizes_its_families():
    assert closed_form_limit(_awd([[0, 0]]), _edge_phi(1, 2, {(1, 1): 1})) == pytest.approx(1 / 8)
    assert closed_form_limit(_awd([[1, 0]]), _edge_phi(1, 2, {(1, 1): 2})) == pytest.approx(-1 / 16)
    triangle = _edge_phi(2, 3, TRIANGLE_EDGE_POWERS)
    assert closed_form_limit(_awd([[0, 0, 0], [0, 0, 0]]), triangle) == triangle_anomaly_limit(1.0) == -1 / 216
    assert closed_form_limit(_awd([[1, 0]]), _edge_phi(1, 2, {(1, 1): 1})) is None
    assert closed_form_limit(_awd([[0, 0]]), _edge_phi(1, 2, {(1, 1): 1}, centers=[[0.5], [1.0]])) is None
    assert closed_form_limit(_awd([[1, 0, 0]]), _phi(1, 3)) is None


def _synthetic(value_at):
    def fake(awd, phi, win):
        return WeightEstimate(value=complex(value_at(win.eps, win.L)), scheme="gaussian")

    return fake


@pytest.mark.asyncio
async def test_scan_vanishing_verdict():
    with patch("app.services.anomaly.anomaly_weight", side_effect=_synthetic(lambda eps, L: L * (1.0 + eps))):
        report = await anomaly_limit_scan(_awd([[0, 0, 0]]), _phi(1, 3), RATIOS)
    assert report.verdict == "vanishing"
    assert report.relative_to_first < 1e-4
    assert len(report.inner) == len(report.L_grid) == 7


@pytest.mark.asyncio
async def test_scan_vanishing_when_every_inner_limit_is_zero():
    value = _synthetic(lambda eps, L: (-2.5e-7 + 1.7e-7j) * eps / L)
    with patch("app.services.anomaly.anomaly_weight", side_effect=value):
        report = await anomaly_limit_scan(_awd([[1, 0, 0]]), _phi(1, 3), RATIOS[:8], [1.0, 1e-2, 1e-4, 1e-6])
    assert all(inner.converged for inner in report.inner)
    assert all(inner.extrapolated_limit is not None for inner in report.inner)
    assert report.relative_to_first < 1e-4
    assert report.verdict == "vanishing"


@pytest.mark.asyncio
async def test_scan_builds_integrand_before_fanning_out():
    calls = []

    async def fake_grid(work, points, label):
        calls.append("grid")
        return [WeightEstimate(value=0.5 + 0j, scheme="gaussian") for _ in points]

    awd, phi = _awd([[1, 0]], edge=1), _phi(1, 2)
    with (
        patch("app.services.anomaly.prepare", side_effect=lambda *args: calls.append(args)),
        patch("app.services.anomaly.scheduler.evaluate_grid", side_effect=fake_grid),
    ):
        await anomaly_limit_scan(awd, phi, RATIOS[:4], [1.0, 0.1])
    rotated, rotated_phi = rotate_wheel(awd, phi, 1)
    assert calls == [("anomaly", rotated.wd, rotated_phi), "grid"]


@pytest.mark.asyncio
async def test_scan_inner_sweeps_stay_inside_bound_chain():
    with patch("app.services.anomaly.anomaly_weight", side_effect=_synthetic(lambda eps, L: 0.5 + eps)):
        report = await anomaly_limit_scan(_awd([[1, 0]]), _phi(1, 2), RATIOS, [1.0, 0.1])
    assert all(len(inner.envelope_ratios) == len(RATIOS) for inner in report.inner)
    assert all(envelope_holds(inner) for inner in report.inner)


@pytest.mark.asyncio
async def test_scan_stable_verdict():
    with patch("app.services.anomaly.anomaly_weight", side_effect=_synthetic(lambda eps, L: 0.5 + eps)):
        report = await anomaly_limit_scan(_awd([[1, 0]]), _phi(1, 2), RATIOS, [1.0, 0.1, 0.01])
    assert report.verdict == "stable"
    assert report.iterated_limit == pytest.approx(0.5, rel=1e-6)


@pytest.mark.asyncio
async def test_scan_drifting_limit_is_inconclusive():
    with patch("app.services.anomaly.anomaly_weight", side_effect=_synthetic(lambda eps, L: 1.0 + L)):
        report = await anomaly_limit_scan(_awd([[1, 0]]), _phi(1, 2), RATIOS, [1.0, 0.5])
    assert report.verdict == "inconclusive"


@pytest.mark.asyncio
async def test_scan_failed_point_is_inconclusive():
    def fake(awd, phi, win):
        if win.L == 0.1 and win.eps == 0.1 * RATIOS[3]:
            raise OverflowError("quadrature blew up")
        return WeightEstimate(value=complex(0.5 + win.eps), scheme="gaussian")

    with patch("app.services.anomaly.anomaly_weight", side_effect=fake):
        report = await anomaly_limit_scan(_awd([[1, 0]]), _phi(1, 2), RATIOS, [1.0, 0.1, 0.01])
    assert report.inner[1].inconclusive
    assert report.verdict == "inconclusive"


@pytest.mark.asyncio
async def test_scan_input_validation():
    with pytest.raises(ValueError):
        await anomaly_limit_scan(_awd([[0, 0], [0, 0]]), _phi(2, 2))
    with pytest.raises(ValueError):
        await anomaly_limit_scan(_awd([[1, 0]]), _phi(1, 2), RATIOS, [0.1, 1.0])
    with pytest.raises(ValueError):
        await anomaly_limit_scan(_awd([[1, 0]]), _phi(1, 2), [2.0, 1.0])


@pytest.mark.slow
@pytest.mark.asyncio
async def test_two_vertex_anomaly_is_stable():
    report = await anomaly_limit_scan(_awd([[1, 0]]), _phi(1, 2), RATIOS, [1.0, 1e-2, 1e-4, 1e-6])
    assert report.verdict == "stable"
    assert abs(report.iterated_limit) > 0
    assert all(envelope_holds(inner) for inner in report.inner)


@pytest.mark.slow
@pytest.mark.asyncio
async def test_three_vertex_anomaly_vanishes():
    report = await anomaly_limit_scan(_awd([[1, 0, 0]]), _phi(1, 3), RATIOS[:8], [1.0, 1e-2, 1e-4, 1e-6])
    assert report.verdict == "vanishing"
    assert all(inner.converged for inner in report.inner)
    assert all(envelope_holds(inner) for inner in report.inner)


@pytest.mark.slow
@pytest.mark.asyncio
@pytest.mark.parametrize("n", [[0, 0], [1, 0]])
async def test_two_vertex_anomaly_matches_closed_form(n):
    awd, phi = _awd([n]), _edge_phi(1, 2, {(1, 1): 1 + sum(n)})
    report = await anomaly_limit_scan(awd, phi, RATIOS, [1.0, 1e-2, 1e-4])
    assert report.verdict == "stable"
    assert report.iterated_limit.real == pytest.approx(two_vertex_anomaly_limit(n, 1.0), rel=1e-3)
    assert all(envelope_holds(inner) for inner in report.inner)


@pytest.mark.slow
@pytest.mark.asyncio
async def test_triangle_anomaly_matches_closed_form():
    awd, phi = _awd([[0, 0, 0], [0, 0, 0]]), _edge_phi(2, 3, TRIANGLE_EDGE_POWERS)
    report = await anomaly_limit_scan(awd, phi, RATIOS, [1.0, 1e-2, 1e-4])
    assert report.verdict == "stable"
    assert report.iterated_limit.real == pytest.approx(triangle_anomaly_limit(1.0), rel=1e-3)
    assert abs(report.iterated_limit.imag) <= 1e-3 * abs(report.iterated_limit.real)
    assert all(envelope_holds(inner) for inner in report.inner)
