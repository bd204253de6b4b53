from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from nlijsf.analysis import (
    AnalysisError,
    CorrelationClass,
    FilterBand,
    MarginalSpectrum,
    Rank,
    ResolutionError,
    apply_filter,
    classify_correlation,
    collection_efficiency,
    design_table,
    find_fringe,
    find_islands,
    fsum2d,
    island_bands,
    jsi,
    marginal,
    primary_island,
    schmidt_analysis,
    visibility,
)
from nlijsf.engine import JointSpectrum, island_wavelengths, stripe_width, synthesize_jsa
from nlijsf.physics import NM, SpectralGrid


def islands_of(key, jsas, specs, pump, grid):
    spec = specs[key]
    smf = spec.dispersive_segments[0] if spec.dispersive_segments else None
    return find_islands(jsi(jsas[key]), grid, pump, smf, spec.n_stages)


def test_single_stage_one_anti_island(jsas, specs, pump, grid):
    isl = islands_of("e1", jsas, specs, pump, grid)
    assert len(isl) == 1
    assert isl[0].order_m == 0 and isl[0].correlation_class is CorrelationClass.ANTI


def test_even_three_stage_catalog(jsas, specs, pump, grid, smf):
    isl = islands_of("e3", jsas, specs, pump, grid)
    prim = [s for s in isl if s.rank is Rank.PRIMARY]
    sec = [s for s in isl if s.rank is Rank.SECONDARY]
    assert [s.order_m for s in prim] == [1, 2, 3, 4]
    assert len(sec) == 4  # N - 2 = 1 between each pair of primaries, plus one past m = 4
    for s in prim:
        exp_s, exp_i = island_wavelengths(s.order_m, smf, pump)
        assert abs(s.center[0] - exp_s) < 0.3 * NM
        assert abs(s.center[1] - exp_i) < 0.3 * NM
    # secondaries sit between primaries in theta
    for s in sec:
        assert abs(s.theta_over_pi - round(s.theta_over_pi)) > 0.25


def test_uneven_has_no_secondaries(jsas, specs, pump, grid):
    for key in ("u3", "u4"):
        isl = islands_of(key, jsas, specs, pump, grid)
        assert isl and all(s.rank is Rank.PRIMARY for s in isl)


def test_correlation_rotates_with_order(jsas, specs, pump, grid):
    # larger m narrows the stripe, turning anti-correlation into positive correlation
    prim = [s for s in islands_of("e4", jsas, specs, pump, grid) if s.rank is Rank.PRIMARY]
    rhos = [s.rho for s in prim]
    assert rhos == sorted(rhos)
    assert prim[-1].correlation_class is CorrelationClass.POSITIVE


def test_classify_correlation_predictor(jsas, specs, pump, grid, smf):
    isl = primary_island(islands_of("e3", jsas, specs, pump, grid), 2)
    c = classify_correlation(isl, pump, stripe_width(3, 2, smf, pump))
    assert c.correlation_class is CorrelationClass.ROUND
    assert c.predictor == pytest.approx(2.6048657646083420 / 2, rel=1e-9)
    with pytest.raises(AnalysisError):
        primary_island([isl], 7)


def test_coarse_grid_raises_resolution_error(specs, pump):
    g = SpectralGrid.from_nm((1558.5, 1568.3), (1537.9, 1548.4), 30)
    a = synthesize_jsa(specs["e4"], pump, g)
    with pytest.raises(ResolutionError):
        find_islands(jsi(a), g, pump, specs["e4"].dispersive_segments[0], 4)


def test_marginal_normalized_and_mass(jsas, grid):
    m = marginal(jsas["e3"], "signal")
    assert m.intensity.max() == pytest.approx(1.0)
    # with no box averaging, scale * sum(intensity) * step equals the total mass
    total = fsum2d(jsi(jsas["e3"])) * grid.cell_area
    assert math.fsum((m.intensity * m.scale).tolist()) == pytest.approx(total, rel=1e-12)


def test_marginal_band_below_step(jsas, grid):
    with pytest.raises(ResolutionError):
        marginal(jsas["e3"], "signal", 0.5 * grid.signal_step)


def test_visibility_e4(jsas, pump):
    m = marginal(jsas["e4"], "signal", 0.16 * NM, pump)
    f = find_fringe(m, 1560.4 * NM)
    assert f.trough_wavelength > f.peak_wavelength
    assert visibility(m, 1560.4 * NM) == pytest.approx(0.957, abs=0.03)


def test_uneven_visibility_exceeds_even(jsas, pump):
    for m_nm in (1560.2, 1563.1, 1565.3):
        ve = visibility(marginal(jsas["e3"], "signal", 0.16 * NM, pump), m_nm * NM, 0.5 * NM)
        vu = visibility(marginal(jsas["u3"], "signal", 0.16 * NM, pump), m_nm * NM, 0.5 * NM)
        assert vu > ve


def test_fringe_synthetic():
    wl = np.linspace(1, 2, 11)
    y = np.array([0, 0.5, 1.0, 0.6, 0.2, 0.4, 0.9, 0.3, 0.1, 0.05, 0.0])
    m = MarginalSpectrum(wl, y, 0.1)
    f = find_fringe(m, 1.2)
    assert (f.peak_wavelength, f.trough_wavelength) == (wl[2], wl[4])
    assert visibility(m, 1.2) == pytest.approx(0.8)
    with pytest.raises(AnalysisError):
        find_fringe(m, 3.0)


def product_state(n=40):
    g = SpectralGrid.from_nm((1550, 1560), (1540, 1550), n)
    x = np.linspace(-2, 2, n)
    a = np.outer(np.exp(-x**2), np.exp(-(x - 0.3) ** 2))
    return JointSpectrum(g, a)


def test_schmidt_product_state_is_one():
    r = schmidt_analysis(product_state())
    assert r.schmidt_number == pytest.approx(1.0, abs=1e-12)
    assert r.purity == pytest.approx(1.0)


def test_schmidt_two_equal_modes():
    a = np.zeros((4, 4))
    a[0, 0] = a[1, 1] = 1.0
    assert schmidt_analysis(a).schmidt_number == pytest.approx(2.0)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (6, 5), elements=st.floats(-1, 1)).filter(lambda a: np.abs(a).sum() > 1e-3),
       st.floats(min_value=1e-3, max_value=1e3))
def test_schmidt_bounds_and_scale_invariance(a, k):
    r = schmidt_analysis(a)
    assert 1 - 1e-9 <= r.schmidt_number <= 5 + 1e-9
    assert math.fsum(r.weights.tolist()) == pytest.approx(1.0)
    assert schmidt_analysis(k * a).schmidt_number == pytest.approx(r.schmidt_number, rel=1e-9)


def test_collection_efficiency_full_bands():
    jsa = product_state()
    g = jsa.grid
    sb = FilterBand((g.signal[0] + g.signal[-1]) / 2, g.signal[-1] - g.signal[0])
    ib = FilterBand((g.idler[0] + g.idler[-1]) / 2, g.idler[-1] - g.idler[0])
    assert collection_efficiency(jsa, sb, ib) == pytest.approx((1.0, 1.0))


def test_band_outside_grid():
    jsa = product_state()
    with pytest.raises(ValueError):
        collection_efficiency(jsa, FilterBand.from_nm(1570, 1), FilterBand.from_nm(1545, 1))


def test_filter_zeroes_outside():
    jsa = product_state()
    f = apply_filter(jsa, FilterBand.from_nm(1555, 2), FilterBand.from_nm(1545, 2))
    ms = np.abs(jsa.grid.signal / NM - 1555) <= 1
    mi = np.abs(jsa.grid.idler / NM - 1545) <= 1
    assert np.all(f.amplitude[~ms, :] == 0) and np.all(f.amplitude[:, ~mi] == 0)
    assert np.array_equal(f.amplitude[np.ix_(ms, mi)], jsa.amplitude[np.ix_(ms, mi)])


def test_island_bands_contain_center(jsas, specs, pump, grid):
    isl = primary_island(islands_of("u3", jsas, specs, pump, grid), 2)
    sb, ib = island_bands(jsi(jsas["u3"]), grid, isl)
    assert sb.low < isl.center[0] < sb.high and ib.low < isl.center[1] < ib.high
    half_s, _ = island_bands(jsi(jsas["u3"]), grid, isl, level=0.5)
    assert half_s.width < sb.width


def test_design_table(pump, smf):
    rows = design_table(3, smf, pump)
    assert [r[0] for r in rows] == [1, 2, 3, 4]
    assert [r[2] for r in rows] == sorted((r[2] for r in rows), reverse=True)


def test_half_max_box_schmidt_bound(jsas, specs, pump, grid):
    isl = primary_island(islands_of("u3", jsas, specs, pump, grid), 2)
    sb, ib = island_bands(jsi(jsas["u3"]), grid, isl, level=0.5)
    assert schmidt_analysis(apply_filter(jsas["u3"], sb, ib)).schmidt_number <= 1.15
