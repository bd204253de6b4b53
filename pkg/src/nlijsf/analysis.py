"""Observables of a joint spectrum: marginals, fringes, islands, purity."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import ndimage

from .engine import JointSpectrum, dispersive_phase, island_wavelengths, stripe_width
from .physics import FiberSegment, PumpPulse, SpectralGrid, pump_sigma, to_angular_frequency

Axis = Literal["signal", "idler"]

ROUND_THRESHOLD = 0.1  # |rho| below this is called round
PRIMARY_TOLERANCE = 0.25  # |theta/pi - m| for a primary island
ISLAND_THRESHOLD = 0.02  # local maxima below this fraction of the global max are ignored
MIN_SAMPLES_ACROSS = 4
MATCHED_BAND_LEVEL = 0.05  # island box level used for heralding bands


class AnalysisError(RuntimeError):
    pass


class ResolutionError(AnalysisError):
    pass


class CorrelationClass(enum.Enum):
    ANTI = "anti"
    POSITIVE = "positive"
    ROUND = "round"


class Rank(enum.Enum):
    PRIMARY = "primary"
    SECONDARY = "secondary"


def fsum2d(a: np.ndarray) -> float:
    """Exactly rounded sum of a 2D array (row by row, left to right)."""
    return math.fsum(math.fsum(row) for row in np.asarray(a, dtype=float).tolist())


def jsi(jsa: JointSpectrum) -> np.ndarray:
    a = jsa.amplitude
    return a.real**2 + a.imag**2


@dataclass(frozen=True)
class MarginalSpectrum:
    """Normalized single-photon spectrum.

    ``scale`` is the peak of the box-averaged raw marginal, so
    ``intensity * scale`` recovers the unnormalized values.
    """

    wavelengths: np.ndarray
    intensity: np.ndarray
    band_width: float
    axis: Axis = "signal"
    pump_wavelength: float | None = None
    scale: float = 1.0

    def __post_init__(self):
        wl = np.asarray(self.wavelengths, dtype=float)
        it = np.asarray(self.intensity, dtype=float)
        if wl.shape != it.shape or wl.ndim != 1:
            raise ValueError("wavelengths and intensity must be 1D and of equal length")
        if not np.all(np.isfinite(it)):
            raise ValueError("intensity must be finite")
        object.__setattr__(self, "wavelengths", wl)
        object.__setattr__(self, "intensity", it)


def _box_average(values: list[float], half: int) -> list[float]:
    if half == 0:
        return list(values)
    n = len(values)
    out = []
    for k in range(n):
        lo, hi = max(0, k - half), min(n, k + half + 1)
        out.append(math.fsum(values[lo:hi]) / (hi - lo))
    return out


def marginal(jsa: JointSpectrum, axis: Axis = "signal", band_width: float | None = None,
             pump: PumpPulse | None = None) -> MarginalSpectrum:
    """Integrate the JSI over the conjugate photon and box-average.

    The box average mimics a rectangular detection band of ``band_width``
    centered on each sample; ``band_width`` equal to the grid step disables
    it.  The result is normalized to a peak of 1.
    """
    grid = jsa.grid
    step = grid.step(axis)
    if band_width is None:
        band_width = step
    if band_width < step * (1 - 1e-9):
        raise ResolutionError(f"band width {band_width:g} m is below the grid step {step:g} m")
    intensity = jsi(jsa)
    if axis == "idler":
        intensity = intensity.T
    cell = grid.cell_area
    raw = [math.fsum(row) * cell for row in intensity.tolist()]
    half = int(math.floor(band_width / (2 * step) + 1e-9))
    boxed = _box_average(raw, half)
    peak = max(boxed)
    norm = [v / peak for v in boxed] if peak > 0 else boxed
    return MarginalSpectrum(
        wavelengths=np.array(grid.axis(axis)),
        intensity=np.array(norm),
        band_width=float(band_width),
        axis=axis,
        pump_wavelength=None if pump is None else pump.lambda_p0,
        scale=peak if peak > 0 else 1.0,
    )


def _local_maxima_1d(y: np.ndarray) -> np.ndarray:
    interior = np.arange(1, len(y) - 1)
    keep = (y[1:-1] >= y[:-2]) & (y[1:-1] > y[2:])
    return interior[keep]


@dataclass(frozen=True)
class Fringe:
    peak_wavelength: float
    trough_wavelength: float
    i_max: float
    i_min: float

    @property
    def visibility(self) -> float:
        return (self.i_max - self.i_min) / self.i_max


def find_fringe(spectrum: MarginalSpectrum, peak_wavelength: float,
                search_window: float | None = None) -> Fringe:
    """Locate the fringe maximum nearest ``peak_wavelength`` and its outer trough.

    The trough is searched toward larger detuning from the pump (longer
    wavelength for a signal peak above the pump wavelength).
    """
    wl, y = spectrum.wavelengths, spectrum.intensity
    if not wl[0] <= peak_wavelength <= wl[-1]:
        raise AnalysisError("peak wavelength outside the marginal's range")
    maxima = _local_maxima_1d(y)
    if search_window is not None:
        maxima = maxima[np.abs(wl[maxima] - peak_wavelength) <= search_window]
    if maxima.size == 0:
        raise AnalysisError("no local maximum near the requested wavelength")
    ip = int(maxima[np.argmin(np.abs(wl[maxima] - peak_wavelength))])
    ref = spectrum.pump_wavelength
    outward = 1 if ref is None or wl[ip] >= ref else -1
    if wl[-1] < wl[0]:
        outward = -outward
    j = ip
    while 0 <= j + outward < len(y) and y[j + outward] <= y[j]:
        j += outward
    if j == ip:
        raise AnalysisError("no trough beyond the fringe maximum")
    return Fringe(float(wl[ip]), float(wl[j]), float(y[ip]), float(y[j]))


def visibility(spectrum: MarginalSpectrum, peak_wavelength: float,
               search_window: float | None = None) -> float:
    """(I_max - I_min) / I_max of the fringe nearest ``peak_wavelength``."""
    f = find_fringe(spectrum, peak_wavelength, search_window)
    if f.i_max <= 0:
        raise AnalysisError("fringe maximum is not positive")
    return min(1.0, max(0.0, f.visibility))


@dataclass(frozen=True)
class Correlation:
    correlation_class: CorrelationClass
    rho: float
    predictor: float | None = None


@dataclass(frozen=True)
class Island:
    center: tuple[float, float]
    order_m: int
    peak_intensity: float
    second_moments: np.ndarray
    correlation_class: CorrelationClass
    rank: Rank
    index: tuple[int, int]
    theta_over_pi: float = 0.0

    @property
    def rho(self) -> float:
        return _rho(self.second_moments)


def _rho(cov: np.ndarray) -> float:
    vs, vi = cov[0, 0], cov[1, 1]
    if not (vs > 0 and vi > 0):
        raise AnalysisError("degenerate island moments (zero variance)")
    return float(cov[0, 1] / math.sqrt(vs * vi))


def _class_from_rho(rho: float, threshold: float = ROUND_THRESHOLD) -> CorrelationClass:
    if abs(rho) < threshold:
        return CorrelationClass.ROUND
    return CorrelationClass.POSITIVE if rho > 0 else CorrelationClass.ANTI


def classify_correlation(island: Island, pump: PumpPulse, sigma_int: float | None = None,
                         threshold: float = ROUND_THRESHOLD) -> Correlation:
    """Correlation class from the island's measured frequency covariance.

    ``predictor`` is sigma_int / (sqrt(2) sigma_p): below 1 predicts
    anti-correlation, above 1 positive correlation.
    """
    rho = _rho(island.second_moments)
    pred = None if sigma_int is None else sigma_int / (math.sqrt(2.0) * pump_sigma(pump))
    return Correlation(_class_from_rho(rho, threshold), rho, pred)


def island_region(intensity: np.ndarray, index: tuple[int, int], level: float = 0.5) -> np.ndarray:
    """Connected region around ``index`` where intensity >= level * peak."""
    mask = intensity >= level * intensity[index]
    labels, _ = ndimage.label(mask)
    return labels == labels[index]


def _refine(values: np.ndarray, k: int, axis_values: np.ndarray) -> float:
    # three-point parabola through the maximum
    if 0 < k < len(values) - 1:
        y0, y1, y2 = values[k - 1], values[k], values[k + 1]
        den = y0 - 2 * y1 + y2
        if den < 0:
            off = 0.5 * (y0 - y2) / den
            return float(axis_values[k] + off * (axis_values[1] - axis_values[0]))
    return float(axis_values[k])


def _moments(intensity: np.ndarray, region: np.ndarray, grid: SpectralGrid) -> np.ndarray:
    rows, cols = np.nonzero(region)
    w = intensity[rows, cols]
    ws = to_angular_frequency(grid.signal)[rows]
    wi = to_angular_frequency(grid.idler)[cols]
    total = math.fsum(w.tolist())
    ms = math.fsum((w * ws).tolist()) / total
    mi = math.fsum((w * wi).tolist()) / total
    ds, di = ws - ms, wi - mi
    css = math.fsum((w * ds * ds).tolist()) / total
    cii = math.fsum((w * di * di).tolist()) / total
    csi = math.fsum((w * ds * di).tolist()) / total
    return np.array([[css, csi], [csi, cii]])


def _make_island(intensity: np.ndarray, grid: SpectralGrid, idx: tuple[int, int],
                 theta_over_pi: float, order_m: int, rank: Rank,
                 check_resolution: bool = True) -> Island:
    region = island_region(intensity, idx, 0.5)
    rows = np.flatnonzero(region.any(axis=1))
    cols = np.flatnonzero(region.any(axis=0))
    if check_resolution and (rows.size < MIN_SAMPLES_ACROSS or cols.size < MIN_SAMPLES_ACROSS):
        raise ResolutionError(
            f"island at index {idx} spans {rows.size}x{cols.size} samples above half maximum; "
            f"need at least {MIN_SAMPLES_ACROSS} per axis")
    cov = _moments(intensity, region, grid)
    i, j = idx
    center = (_refine(intensity[:, j], i, grid.signal), _refine(intensity[i, :], j, grid.idler))
    return Island(
        center=center,
        order_m=order_m,
        peak_intensity=float(intensity[idx]),
        second_moments=cov,
        correlation_class=_class_from_rho(_rho(cov)),
        rank=rank,
        index=(int(i), int(j)),
        theta_over_pi=theta_over_pi,
    )


def find_islands(intensity: np.ndarray, grid: SpectralGrid, pump: PumpPulse,
                 smf: FiberSegment | None, n_stages: int,
                 threshold: float = ISLAND_THRESHOLD) -> list[Island]:
    """Catalog the local maxima of a JSI matrix.

    Order m is theta(center)/pi rounded; islands within 0.25 of an integer
    are primary, the rest secondary.  Maxima on the grid border are skipped
    because their extent cannot be measured.
    """
    intensity = np.asarray(intensity, dtype=float)
    if intensity.shape != grid.shape:
        raise ValueError("intensity shape does not match grid")
    gmax = float(intensity.max())
    if gmax <= 0:
        return []
    if n_stages == 1 or smf is None:
        idx = np.unravel_index(int(np.argmax(intensity)), intensity.shape)
        isl = _make_island(intensity, grid, (int(idx[0]), int(idx[1])), 0.0, 0, Rank.PRIMARY,
                           check_resolution=False)
        return [Island(isl.center, 0, isl.peak_intensity, isl.second_moments,
                       CorrelationClass.ANTI, Rank.PRIMARY, isl.index, 0.0)]

    padded = np.pad(intensity, 1, constant_values=-np.inf)
    neighborhood = ndimage.maximum_filter(padded, size=3, mode="constant", cval=-np.inf)[1:-1, 1:-1]
    is_peak = (intensity >= neighborhood) & (intensity > threshold * gmax)
    is_peak[0, :] = is_peak[-1, :] = False
    is_peak[:, 0] = is_peak[:, -1] = False

    islands = []
    seen_regions: list[np.ndarray] = []
    for i, j in zip(*np.nonzero(is_peak)):
        idx = (int(i), int(j))
        if any(r[idx] for r in seen_regions):
            continue  # plateau duplicate
        isl_tmp = _make_island(intensity, grid, idx, 0.0, 0, Rank.PRIMARY)
        ws = to_angular_frequency(isl_tmp.center[0])
        wi = to_angular_frequency(isl_tmp.center[1])
        t = dispersive_phase(ws, wi, smf, pump) / math.pi
        m = int(math.floor(t + 0.5))
        rank = Rank.PRIMARY if abs(t - m) <= PRIMARY_TOLERANCE else Rank.SECONDARY
        islands.append(Island(isl_tmp.center, m, isl_tmp.peak_intensity, isl_tmp.second_moments,
                              isl_tmp.correlation_class, rank, idx, t))
        seen_regions.append(island_region(intensity, idx, 1.0 - 1e-12))
    islands.sort(key=lambda s: (s.theta_over_pi, s.center[0]))
    return islands


def primary_island(islands: list[Island], order_m: int) -> Island:
    cands = [s for s in islands if s.rank is Rank.PRIMARY and s.order_m == order_m]
    if not cands:
        raise AnalysisError(f"no primary island of order {order_m}")
    return max(cands, key=lambda s: s.peak_intensity)


@dataclass(frozen=True)
class FilterBand:
    """Rectangular pass band, center and full width in meters."""

    center: float
    width: float

    def __post_init__(self):
        if not (math.isfinite(self.width) and self.width > 0):
            raise ValueError("filter width must be > 0")

    @classmethod
    def from_nm(cls, center_nm: float, width_nm: float) -> FilterBand:
        return cls(center_nm * 1e-9, width_nm * 1e-9)

    @property
    def low(self) -> float:
        return self.center - self.width / 2

    @property
    def high(self) -> float:
        return self.center + self.width / 2

    def mask(self, axis_values: np.ndarray) -> np.ndarray:
        tol = 1e-9 * self.width
        return (axis_values >= self.low - tol) & (axis_values <= self.high + tol)


def _check_band(band: FilterBand, axis_values: np.ndarray, step: float, name: str) -> None:
    lo, hi = axis_values[0] - step / 2, axis_values[-1] + step / 2
    tol = 1e-6 * step
    if band.low < lo - tol or band.high > hi + tol:
        raise ValueError(f"{name} band [{band.low:g}, {band.high:g}] m lies outside the grid")


def band_masks(grid: SpectralGrid, signal_band: FilterBand,
               idler_band: FilterBand) -> tuple[np.ndarray, np.ndarray]:
    _check_band(signal_band, grid.signal, grid.signal_step, "signal")
    _check_band(idler_band, grid.idler, grid.idler_step, "idler")
    return signal_band.mask(grid.signal), idler_band.mask(grid.idler)


def apply_filter(jsa: JointSpectrum, signal_band: FilterBand, idler_band: FilterBand) -> JointSpectrum:
    """Zero the amplitude outside the signal x idler pass-band rectangle."""
    ms, mi = band_masks(jsa.grid, signal_band, idler_band)
    keep = np.outer(ms, mi)
    return JointSpectrum(jsa.grid, np.where(keep, jsa.amplitude, 0), jsa.normalization)


def island_bands(intensity: np.ndarray, grid: SpectralGrid, island: Island,
                 level: float = MATCHED_BAND_LEVEL) -> tuple[FilterBand, FilterBand]:
    """Signal and idler bands spanning the island down to ``level`` of its peak.

    ``level=0.5`` gives the half-maximum box; the default keeps nearly the
    whole island while stopping at the troughs toward its neighbours.
    """
    region = island_region(np.asarray(intensity), island.index, level)
    rows = np.flatnonzero(region.any(axis=1))
    cols = np.flatnonzero(region.any(axis=0))

    def band(axis_values, idx, step):
        lo, hi = axis_values[idx[0]], axis_values[idx[-1]]
        return FilterBand((lo + hi) / 2, hi - lo + step)

    return band(grid.signal, rows, grid.signal_step), band(grid.idler, cols, grid.idler_step)


@dataclass(frozen=True)
class SchmidtResult:
    singular_values: np.ndarray
    weights: np.ndarray
    schmidt_number: float

    @property
    def purity(self) -> float:
        return 1.0 / self.schmidt_number


def schmidt_analysis(jsa: JointSpectrum | np.ndarray) -> SchmidtResult:
    """Schmidt decomposition of the discretized amplitude via SVD.

    Singular values are scaled so that the weights (their squares) sum to 1;
    the Schmidt number is 1 / sum(weights^2).
    """
    amp = jsa.amplitude if isinstance(jsa, JointSpectrum) else np.asarray(jsa, dtype=complex)
    s = np.linalg.svd(amp, compute_uv=False)
    total = math.fsum((s**2).tolist())
    if total == 0:
        raise ValueError("cannot decompose an all-zero amplitude")
    weights = s**2 / total
    k = 1.0 / math.fsum((weights**2).tolist())
    return SchmidtResult(s / math.sqrt(total), weights, k)


def collection_efficiency(jsa: JointSpectrum, signal_band: FilterBand,
                          idler_band: FilterBand) -> tuple[float, float]:
    """Heralding efficiencies (idler given signal, signal given idler).

    Each is the JSI mass inside both bands divided by the mass inside the
    heralding band alone.
    """
    ms, mi = band_masks(jsa.grid, signal_band, idler_band)
    intensity = jsi(jsa)
    both = fsum2d(intensity[np.ix_(ms, mi)])
    sig = fsum2d(intensity[ms, :])
    idl = fsum2d(intensity[:, mi])
    if sig == 0 or idl == 0:
        raise ValueError("no JSI mass inside the heralding band")
    return both / sig, both / idl


def expected_island_centers(orders, smf: FiberSegment, pump: PumpPulse) -> list[tuple[float, float]]:
    return [island_wavelengths(m, smf, pump) for m in orders]


def design_table(n_stages: int, smf: FiberSegment, pump: PumpPulse,
                 orders=range(1, 5)) -> list[tuple[int, float, float]]:
    """(m, sigma_int, sigma_int / (sqrt(2) sigma_p)) for each order."""
    out = []
    for m in orders:
        s = stripe_width(n_stages, m, smf, pump)
        out.append((m, s, s / (math.sqrt(2.0) * pump_sigma(pump))))
    return out
