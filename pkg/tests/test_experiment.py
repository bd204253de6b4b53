from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlijsf.analysis import FilterBand, visibility
from nlijsf.experiment import (
    DetectionModel,
    FitError,
    IncompleteDataError,
    ScanPlan,
    ScanRecord,
    calibrate_to_peak,
    expected_rates,
    expected_scan,
    fit_sweeps,
    quadratic_ratio,
    raman_fit,
    raman_subtract,
    run_scan,
    visibility_from_quadratic_ratio,
)
from nlijsf.physics import NM

POWERS_UW = [10, 20, 30, 40, 50, 60]


def test_paired_and_raster_plans():
    p = ScanPlan.paired((1558.5, 1559.0), (1548.4, 1547.9), 0.16, 0.16, 1, [60])
    assert len(p.points) == 4
    assert p.idler_centers[1] == pytest.approx(1548.24 * NM)
    r = ScanPlan.raster((1558.5, 1559.0), (1548.4, 1547.9), 0.16, 0.16, 1, [60])
    assert len(r.points) == 16
    assert r.avg_powers == pytest.approx((60e-6,))


@pytest.mark.parametrize("kw", [
    dict(signal_centers=(1e-6,), idler_centers=(), band_width=1e-10, integration_time=1, avg_powers=(1e-6,)),
    dict(signal_centers=(1e-6,), idler_centers=(1e-6,), band_width=0, integration_time=1, avg_powers=(1e-6,)),
    dict(signal_centers=(1e-6,), idler_centers=(1e-6,), band_width=1e-10, integration_time=0, avg_powers=(1e-6,)),
    dict(signal_centers=(1e-6,), idler_centers=(1e-6,), band_width=1e-10, integration_time=1, avg_powers=()),
])
def test_bad_plans(kw):
    with pytest.raises(ValueError):
        ScanPlan(**kw)


def test_detection_validation():
    with pytest.raises(ValueError):
        DetectionModel(efficiency_signal=0)
    with pytest.raises(ValueError):
        DetectionModel(raman_density=-1)
    d = DetectionModel(raman_density=((1560e-9, 1.0), (1550e-9, 3.0)))
    assert d.raman_at(1555e-9) == pytest.approx(2.0)


def test_rates_scale_and_accidentals(jsas, pump):
    det = DetectionModel(raman_density=0.0, calibration=1e25)
    sb, ib = FilterBand.from_nm(1560.4, 0.16), FilterBand.from_nm(1546.3, 0.16)
    full = expected_rates(jsas["e2"], sb, ib, det, pump)
    half = expected_rates(jsas["e2"], sb, ib, det, pump, pump.avg_power / 2)
    assert half.pairs == pytest.approx(full.pairs / 4)
    assert half.singles_s == pytest.approx(full.singles_s / 4)
    assert full.cacc == pytest.approx(full.singles_s * full.singles_i / pump.rep_rate)
    assert full.cc == pytest.approx(full.pairs + full.cacc)
    raman = expected_rates(jsas["e2"], sb, ib, DetectionModel(raman_density=1e9, calibration=1e25), pump)
    assert raman.singles_s - full.singles_s == pytest.approx(0.1 * 1e9 * pump.avg_power)


@pytest.fixture(scope="module")
def raster():
    return ScanPlan.raster((1558.5, 1568.3), (1548.4, 1537.9), 0.16, 0.16, 1, [60])


def test_calibrate_to_peak(scan_jsas, pump, raster):
    det = calibrate_to_peak(scan_jsas["e2"], pump, raster, DetectionModel(raman_density=1e9), 87.0)
    assert max(r.true for r in expected_scan(scan_jsas["e2"], pump, raster, det)) == pytest.approx(87.0)


def test_run_scan_seeded_and_thread_independent(scan_jsas, pump):
    plan = ScanPlan.paired((1558.5, 1562.0), (1548.4, 1544.9), 0.16, 0.16, 1, POWERS_UW)
    det = DetectionModel(raman_density=1e9, calibration=1e25)
    a = run_scan(scan_jsas["e4"], pump, plan, det, seed=7)
    assert a == run_scan(scan_jsas["e4"], pump, plan, det, seed=7, workers=4)
    assert a != run_scan(scan_jsas["e4"], pump, plan, det, seed=8)
    assert len(a) == len(plan.points) * len(POWERS_UW)


def test_negative_true_coincidences_kept():
    r = ScanRecord(1.56e-6, 1.546e-6, 1e-5, 1.0, 10, 10, 0, 2)
    assert r.true_coincidences == -2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
@settings(max_examples=100)
@given(st.floats(min_value=0, max_value=1e12), st.floats(min_value=0, max_value=1e16))
def test_raman_fit_recovers_noiseless(s1, s2):
    p = np.array(POWERS_UW) * 1e-6
    fit = raman_fit(p, s1 * p + s2 * p**2)
    scale = max(abs(s1) * 60e-6, abs(s2) * 3.6e-9, 1e-12)
    assert abs(fit.s1 * 60e-6 - s1 * 60e-6) <= 1e-9 * scale
    assert abs(fit.s2 * 3.6e-9 - s2 * 3.6e-9) <= 1e-9 * scale


def test_raman_fit_needs_three_powers():
    with pytest.raises(FitError):
        raman_fit([1e-5, 2e-5, 2e-5], [1, 2, 2])


def test_raman_fit_warns_on_negative_s2():
    with pytest.warns(RuntimeWarning):
        raman_fit([1, 2, 3, 4], [1, 1.8, 2.4, 2.8])


def test_visibility_from_ratio():
    assert visibility_from_quadratic_ratio(16.3) == pytest.approx(0.9387, abs=1e-4)
    assert visibility_from_quadratic_ratio(1.0) == 0.0
    assert visibility_from_quadratic_ratio(float("inf")) == 1.0
    with pytest.raises(ValueError):
        visibility_from_quadratic_ratio(0.5)


def test_sweep_missing_powers():
    recs = [ScanRecord(1.56e-6, 1.546e-6, p, 1.0, 100, 100, 0, 0) for p in (1e-5, 2e-5)]
    with pytest.raises(IncompleteDataError):
        fit_sweeps(recs)
    with pytest.raises(IncompleteDataError):
        raman_subtract([])


def test_noiseless_subtraction_matches_model(scan_jsas, pump):
    # very long integration makes Poisson noise negligible
    plan = ScanPlan.paired((1558.5, 1568.3), (1548.4, 1537.9), 0.16, 0.16, 1e6, POWERS_UW)
    det = DetectionModel(raman_density=1e9, calibration=1e25)
    recs = run_scan(scan_jsas["e4"], pump, plan, det, seed=1)
    spec = raman_subtract(recs, "signal", pump_wavelength=pump.lambda_p0)
    assert visibility(spec, 1560.4 * NM) == pytest.approx(0.95, abs=0.03)
    assert len(fit_sweeps(recs)) == len(plan.points)


def test_quadratic_ratio_keys(scan_jsas, pump):
    plan = ScanPlan((1560.4 * NM, 1561.9 * NM), (1546.3 * NM, 1546.3 * NM), 0.16 * NM, 1e6,
                    tuple(p * 1e-6 for p in POWERS_UW))
    det = DetectionModel(raman_density=1e9, calibration=1e25)
    recs = run_scan(scan_jsas["e4"], pump, plan, det, seed=3)
    r = quadratic_ratio(recs, plan.points[0], plan.points[1])
    assert 13 < r < 22
