"""Virtual counting experiment: filter scans, Poisson counts, Raman fitting.

FWM rates are computed once from a joint spectrum synthesized at the
reference pump power and scaled as (P_a / P_ref)^2; Raman noise is linear in
P_a and independent per detector.  Random streams are keyed by
(seed, point index, power index), so a scan is reproducible regardless of
evaluation order or worker count.
"""
from __future__ import annotations

import math
import warnings
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .analysis import FilterBand, MarginalSpectrum, band_masks, jsi
from .engine import JointSpectrum
from .physics import NM, PumpPulse


class FitError(ValueError):
    pass


class IncompleteDataError(ValueError):
    pass


def _frange(start: float, stop: float, step: float) -> list[float]:
    n = int(math.floor(abs(stop - start) / step + 1e-9)) + 1
    sign = 1.0 if stop >= start else -1.0
    return [start + sign * k * step for k in range(n)]


@dataclass(frozen=True)
class ScanPlan:
    """Filter settings to visit; ``signal_centers[k]`` pairs with ``idler_centers[k]``."""

    signal_centers: tuple[float, ...]
    idler_centers: tuple[float, ...]
    band_width: float
    integration_time: float
    avg_powers: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "signal_centers", tuple(float(x) for x in self.signal_centers))
        object.__setattr__(self, "idler_centers", tuple(float(x) for x in self.idler_centers))
        object.__setattr__(self, "avg_powers", tuple(float(x) for x in self.avg_powers))
        if len(self.signal_centers) != len(self.idler_centers):
            raise ValueError("signal and idler centers must be paired (equal length)")
        if not self.signal_centers:
            raise ValueError("scan plan has no points")
        if not self.band_width > 0:
            raise ValueError("band_width must be > 0")
        if not self.integration_time > 0:
            raise ValueError("integration_time must be > 0")
        if not self.avg_powers or any(p < 0 for p in self.avg_powers):
            raise ValueError("avg_powers must be non-empty and >= 0")

    @classmethod
    def paired(cls, signal_nm: tuple[float, float], idler_nm: tuple[float, float], step_nm: float,
               band_width_nm: float, integration_time: float,
               avg_powers_uw: Sequence[float]) -> ScanPlan:
        """Signal and idler filters stepped together (anti-scanned)."""
        sig = _frange(signal_nm[0], signal_nm[1], step_nm)
        idl = _frange(idler_nm[0], idler_nm[1], step_nm)
        n = min(len(sig), len(idl))
        return cls(tuple(x * NM for x in sig[:n]), tuple(x * NM for x in idl[:n]),
                   band_width_nm * NM, integration_time, tuple(p * 1e-6 for p in avg_powers_uw))

    @classmethod
    def raster(cls, signal_nm: tuple[float, float], idler_nm: tuple[float, float], step_nm: float,
               band_width_nm: float, integration_time: float,
               avg_powers_uw: Sequence[float]) -> ScanPlan:
        """Every signal setting combined with every idler setting (contour scan)."""
        sig = _frange(signal_nm[0], signal_nm[1], step_nm)
        idl = _frange(idler_nm[0], idler_nm[1], step_nm)
        ss = [s * NM for s in sig for _ in idl]
        ii = [i * NM for _ in sig for i in idl]
        return cls(tuple(ss), tuple(ii), band_width_nm * NM, integration_time,
                   tuple(p * 1e-6 for p in avg_powers_uw))

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.signal_centers, self.idler_centers))


@dataclass(frozen=True)
class DetectionModel:
    """Detector and background parameters.

    raman_density is the Raman single-count rate per watt of average pump
    power inside one filter band, before detection losses; either a constant
    or a table of (wavelength [m], density) pairs interpolated linearly.
    calibration converts JSI mass (grid integral of |F|^2 in m^2) into
    generated pairs per second at the reference power.
    """

    efficiency_signal: float = 0.1
    efficiency_idler: float = 0.1
    raman_density: float | tuple[tuple[float, float], ...] = 0.0
    calibration: float = 1.0

    def __post_init__(self):
        for name in ("efficiency_signal", "efficiency_idler"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name} must be in (0, 1], got {v}")
        if isinstance(self.raman_density, (int, float)):
            if self.raman_density < 0:
                raise ValueError("raman_density must be >= 0")
        else:
            table = tuple((float(w), float(d)) for w, d in self.raman_density)
            if any(d < 0 for _, d in table):
                raise ValueError("raman_density must be >= 0")
            object.__setattr__(self, "raman_density", tuple(sorted(table)))
        if not self.calibration >= 0:
            raise ValueError("calibration must be >= 0")

    def raman_at(self, wavelength: float) -> float:
        if isinstance(self.raman_density, (int, float)):
            return float(self.raman_density)
        w, d = zip(*self.raman_density)
        return float(np.interp(wavelength, w, d))


@dataclass(frozen=True)
class Rates:
    singles_s: float
    singles_i: float
    pairs: float
    cacc: float

    @property
    def cc(self) -> float:
        return self.pairs + self.cacc

    @property
    def true(self) -> float:
        # kept separately so tiny pair rates survive large accidental rates
        return self.pairs


@dataclass(frozen=True)
class ScanRecord:
    lambda_s: float
    lambda_i: float
    avg_power: float
    integration_time: float
    singles_s: int
    singles_i: int
    cc: int
    cacc: int

    @property
    def true_coincidences(self) -> int:
        return self.cc - self.cacc


class _MassTable:
    """Band-integrated JSI masses via a summed-area table."""

    def __init__(self, jsa: JointSpectrum):
        self.grid = jsa.grid
        intensity = jsi(jsa) * jsa.grid.cell_area
        sat = np.zeros((intensity.shape[0] + 1, intensity.shape[1] + 1))
        sat[1:, 1:] = np.cumsum(np.cumsum(intensity, axis=0), axis=1)
        self.sat = sat

    def _box(self, r0: int, r1: int, c0: int, c1: int) -> float:
        s = self.sat
        v = s[r1, c1] - s[r0, c1] - s[r1, c0] + s[r0, c0]
        return max(0.0, float(v))

    @staticmethod
    def _span(mask: np.ndarray) -> tuple[int, int]:
        idx = np.flatnonzero(mask)
        if idx.size == 0:
            return 0, 0
        return int(idx[0]), int(idx[-1]) + 1

    def masses(self, signal_band: FilterBand, idler_band: FilterBand) -> tuple[float, float, float]:
        ms, mi = band_masks(self.grid, signal_band, idler_band)
        r0, r1 = self._span(ms)
        c0, c1 = self._span(mi)
        nr, nc = self.sat.shape[0] - 1, self.sat.shape[1] - 1
        return (self._box(r0, r1, 0, nc), self._box(0, nr, c0, c1), self._box(r0, r1, c0, c1))


def expected_rates(jsa: JointSpectrum | _MassTable, signal_band: FilterBand,
                   idler_band: FilterBand, detection: DetectionModel, pump: PumpPulse,
                   avg_power: float | None = None) -> Rates:
    """Mean count rates [1/s] for one filter setting at ``avg_power``.

    ``jsa`` must have been synthesized at ``pump.avg_power`` (the reference
    power).  Accidentals use the adjacent-pulse product
    (S_s / f_rep) (S_i / f_rep) f_rep.
    """
    table = jsa if isinstance(jsa, _MassTable) else _MassTable(jsa)
    p = pump.avg_power if avg_power is None else avg_power
    if pump.avg_power > 0:
        scale = (p / pump.avg_power) ** 2
    elif p == 0:
        scale = 0.0
    else:
        raise ValueError("reference spectrum was synthesized with the pump off")
    m_s, m_i, m_si = table.masses(signal_band, idler_band)
    eta_s, eta_i, cal = detection.efficiency_signal, detection.efficiency_idler, detection.calibration
    singles_s = eta_s * (cal * m_s * scale + detection.raman_at(signal_band.center) * p)
    singles_i = eta_i * (cal * m_i * scale + detection.raman_at(idler_band.center) * p)
    pairs = eta_s * eta_i * cal * m_si * scale
    cacc = singles_s * singles_i / pump.rep_rate
    return Rates(singles_s, singles_i, pairs, cacc)


def _bands(plan: ScanPlan, k: int) -> tuple[FilterBand, FilterBand]:
    return (FilterBand(plan.signal_centers[k], plan.band_width),
            FilterBand(plan.idler_centers[k], plan.band_width))


def expected_scan(jsa: JointSpectrum, pump: PumpPulse, plan: ScanPlan,
                  detection: DetectionModel, avg_power: float | None = None) -> list[Rates]:
    table = _MassTable(jsa)
    return [expected_rates(table, *_bands(plan, k), detection, pump, avg_power)
            for k in range(len(plan.signal_centers))]


def calibrate_to_peak(jsa: JointSpectrum, pump: PumpPulse, plan: ScanPlan,
                      detection: DetectionModel, target_true_rate: float) -> DetectionModel:
    """Return ``detection`` with calibration set so the scan's peak true rate hits the target.

    Uses the expected (noiseless) true-coincidence rate at the reference
    power, which is linear in the calibration constant.
    """
    unit = replace(detection, calibration=1.0)
    best = max(r.true for r in expected_scan(jsa, pump, plan, unit))
    if best <= 0:
        raise ValueError("scan never overlaps the joint spectrum")
    return replace(detection, calibration=target_true_rate / best)


def run_scan(jsa: JointSpectrum, pump: PumpPulse, plan: ScanPlan, detection: DetectionModel,
             seed: int, workers: int = 1) -> list[ScanRecord]:
    """Draw Poisson counts for every (point, power) in ``plan``.

    Records are ordered point-major, power-minor.
    """
    table = _MassTable(jsa)
    t = plan.integration_time
    npts = len(plan.signal_centers)

    def point(k: int) -> list[ScanRecord]:
        sb, ib = _bands(plan, k)
        out = []
        for j, p in enumerate(plan.avg_powers):
            r = expected_rates(table, sb, ib, detection, pump, p)
            rng = np.random.default_rng([int(seed), k, j])
            pairs = rng.poisson(max(r.true, 0.0) * t)
            cacc = rng.poisson(r.cacc * t)
            # coincidence window sees true pairs plus accidentals at the same
            # rate as the adjacent-pulse window
            cc = pairs + rng.poisson(r.cacc * t)
            out.append(ScanRecord(sb.center, ib.center, p, t,
                                  int(rng.poisson(r.singles_s * t)),
                                  int(rng.poisson(r.singles_i * t)),
                                  int(cc), int(cacc)))
        return out

    if workers <= 1:
        chunks = [point(k) for k in range(npts)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(point, range(npts)))
    return [rec for chunk in chunks for rec in chunk]


@dataclass(frozen=True)
class RamanFit:
    s1: float
    s2: float
    residual: float

    def __call__(self, power):
        p = np.asarray(power, dtype=float)
        return self.s1 * p + self.s2 * p**2


def raman_fit(powers: Sequence[float], rates: Sequence[float]) -> RamanFit:
    """Least-squares fit of rate = s1 P + s2 P^2 (no constant term)."""
    p = np.asarray(powers, dtype=float)
    y = np.asarray(rates, dtype=float)
    if p.shape != y.shape or p.ndim != 1:
        raise FitError("powers and rates must be 1D and of equal length")
    if len(np.unique(p)) < 3:
        raise FitError("need at least 3 distinct powers")
    scale = float(np.max(np.abs(p)))
    x = p / scale
    design = np.column_stack([x, x * x])
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < 2:
        raise FitError("singular normal equations")
    s1, s2 = coef[0] / scale, coef[1] / scale**2
    resid = y - (s1 * p + s2 * p * p)
    rss = math.fsum((resid * resid).tolist())
    if s2 < 0:
        warnings.warn(f"negative quadratic coefficient s2={s2:g}", RuntimeWarning, stacklevel=2)
    return RamanFit(float(s1), float(s2), rss)


def visibility_from_quadratic_ratio(ratio: float) -> float:
    """Fringe visibility from the peak/valley ratio of fitted FWM terms."""
    if math.isnan(ratio) or ratio < 1:
        raise ValueError("ratio must be >= 1 (peak and valley swapped?)")
    if math.isinf(ratio):
        return 1.0
    return (ratio - 1.0) / ratio


def fit_sweeps(records: Iterable[ScanRecord], channel: str = "signal"
               ) -> dict[tuple[float, float], RamanFit]:
    """Fit rate vs power at every filter setting present in ``records``."""
    groups: dict[tuple[float, float], list[ScanRecord]] = defaultdict(list)
    for r in records:
        groups[(r.lambda_s, r.lambda_i)].append(r)
    fits = {}
    for key, recs in groups.items():
        powers = [r.avg_power for r in recs]
        if len(set(powers)) < 3:
            raise IncompleteDataError(
                f"filter setting {key[0] / NM:.3f}/{key[1] / NM:.3f} nm has no power sweep")
        counts = [r.singles_s if channel == "signal" else r.singles_i for r in recs]
        rates = [c / r.integration_time for c, r in zip(counts, recs)]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            fits[key] = raman_fit(powers, rates)
    return fits


def raman_subtract(records: Sequence[ScanRecord], channel: str = "signal",
                   reference_power: float | None = None,
                   pump_wavelength: float | None = None) -> MarginalSpectrum:
    """FWM-only single-count spectrum, s2 * P_ref^2 normalized to peak 1."""
    if not records:
        raise IncompleteDataError("no records")
    fits = fit_sweeps(records, channel)
    p_ref = max(r.avg_power for r in records) if reference_power is None else reference_power
    # singles depend only on their own filter, so a raster revisits each
    # wavelength once per partner setting; average those fits
    by_wl: dict[float, list[float]] = defaultdict(list)
    for (ls, li), fit in fits.items():
        by_wl[ls if channel == "signal" else li].append(fit.s2)
    wl = np.array(sorted(by_wl))
    fwm = np.array([math.fsum(by_wl[w]) / len(by_wl[w]) * p_ref**2 for w in wl])
    peak = float(fwm.max())
    if peak <= 0:
        raise FitError("no positive quadratic term anywhere in the scan")
    return MarginalSpectrum(wl, fwm / peak, _spacing(wl), axis=channel,
                            pump_wavelength=pump_wavelength, scale=peak)


def _spacing(wl: np.ndarray) -> float:
    if wl.size < 2:
        return 0.0
    return float(np.min(np.abs(np.diff(wl))))


def quadratic_ratio(records: Sequence[ScanRecord], peak: tuple[float, float],
                    valley: tuple[float, float], channel: str = "signal") -> float:
    """Ratio of fitted s2 at two filter settings (peak over valley)."""
    fits = fit_sweeps(records, channel)
    return fits[peak].s2 / fits[valley].s2
