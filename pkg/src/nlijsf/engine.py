"""Phase matching, stage interference and joint spectral amplitude synthesis."""
from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from math import comb
from typing import Sequence

import numpy as np

from .physics import (
    C,
    FiberSegment,
    InterferometerSpec,
    PumpPulse,
    SpectralGrid,
    peak_power,
    pump_sigma,
    to_angular_frequency,
    validate_spec,
)

SINC_SERIES_CUTOFF = 1e-4


class UnsupportedConfigurationError(ValueError):
    pass


class Normalization(enum.Enum):
    RAW = "raw"
    PEAK_UNITY = "peak_unity"


@dataclass(frozen=True)
class JointSpectrum:
    """Complex joint spectral amplitude sampled on ``grid``.

    ``amplitude[i, j]`` belongs to signal wavelength ``grid.signal[i]`` and
    idler wavelength ``grid.idler[j]``.
    """

    grid: SpectralGrid
    amplitude: np.ndarray
    normalization: Normalization = Normalization.RAW

    def __post_init__(self):
        amp = np.asarray(self.amplitude, dtype=complex)
        if amp.shape != self.grid.shape:
            raise ValueError(f"amplitude shape {amp.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(amp)):
            raise ValueError("amplitude contains non-finite entries")
        amp = amp.copy()
        amp.flags.writeable = False
        object.__setattr__(self, "amplitude", amp)

    def normalized(self) -> JointSpectrum:
        peak = np.abs(self.amplitude).max()
        if peak == 0:
            raise ValueError("cannot peak-normalize an all-zero spectrum")
        return JointSpectrum(self.grid, self.amplitude / peak, Normalization.PEAK_UNITY)


@dataclass(frozen=True)
class StagePhases:
    theta: float
    gains: tuple[float, ...]

    def __post_init__(self):
        if any(g < 0 for g in self.gains):
            raise ValueError("stage gains must be >= 0")


def sinc(x):
    """Unnormalized sinc, sin(x)/x, with a series branch near zero."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < SINC_SERIES_CUTOFF
    safe = np.where(small, 1.0, x)
    x2 = x * x
    out = np.where(small, 1.0 - x2 / 6.0 + x2 * x2 / 120.0, np.sin(safe) / safe)
    return float(out) if out.ndim == 0 else out


def _require(seg: FiberSegment, nonlinear: bool) -> None:
    if seg.is_nonlinear != nonlinear:
        want = "nonlinear" if nonlinear else "dispersive"
        raise ValueError(f"expected a {want} segment, got {seg.kind.value}")


def phase_mismatch(omega_s, omega_i, dsf: FiberSegment, pump: PumpPulse):
    """FWM phase mismatch in a dispersion-shifted fiber [1/m].

    Quadratic in detuning through the dispersion slope, offset by the
    self-phase-modulation term -2 gamma P_p.
    """
    _require(dsf, nonlinear=True)
    lp = pump.lambda_p0
    detuning = np.asarray(omega_s, dtype=float) - np.asarray(omega_i, dtype=float)
    linear = lp**2 / (8.0 * math.pi * C) * dsf.dispersion_slope * (lp - dsf.lambda0)
    out = linear * detuning**2 - 2.0 * dsf.gamma * peak_power(pump)
    return float(out) if np.ndim(out) == 0 else out


def dispersion_coefficient(smf: FiberSegment, pump: PumpPulse) -> float:
    """theta / (omega_s - omega_i)^2 for one dispersive gap [s^2]."""
    _require(smf, nonlinear=False)
    return pump.lambda_p0**2 * smf.dispersion * smf.length / (16.0 * math.pi * C)


def dispersive_phase(omega_s, omega_i, smf: FiberSegment, pump: PumpPulse):
    """Relative phase theta [rad] picked up across one SMF gap."""
    coef = dispersion_coefficient(smf, pump)
    detuning = np.asarray(omega_s, dtype=float) - np.asarray(omega_i, dtype=float)
    out = coef * detuning**2
    return float(out) if np.ndim(out) == 0 else out


def detuning_for_phase(theta: float, smf: FiberSegment, pump: PumpPulse) -> float:
    """|omega_s - omega_i| at which the gap phase equals ``theta``."""
    return math.sqrt(theta / dispersion_coefficient(smf, pump))


def island_wavelengths(order_m: float, smf: FiberSegment, pump: PumpPulse) -> tuple[float, float]:
    """(signal, idler) wavelengths where theta = m*pi on the energy-conservation line.

    Signal is taken as the long-wavelength (low-frequency) photon.
    """
    half = 0.5 * detuning_for_phase(order_m * math.pi, smf, pump)
    wp = pump.omega_p0
    return to_angular_frequency(wp - half), to_angular_frequency(wp + half)


def _stage_sum(theta, weights: Sequence) -> np.ndarray:
    # Horner-free explicit sum, stage 1 first
    theta = np.asarray(theta, dtype=float)
    out = np.zeros(np.broadcast(theta, *[np.asarray(w) for w in weights]).shape, dtype=complex)
    for n, w in enumerate(weights):
        out = out + w * np.exp(2j * n * theta)
    return out


def interference_factor_even(theta, n_stages: int):
    """Stage-sum interference factor for N identical stages.

    Evaluated as sum_{n=0}^{N-1} exp(2 i n theta); its modulus equals
    |sin(N theta) / sin(theta)| but the sum has no singularity.
    """
    if n_stages < 1:
        raise ValueError("n_stages must be >= 1")
    out = _stage_sum(theta, [1.0] * n_stages)
    return complex(out) if out.ndim == 0 else out


def interference_factor_uneven(theta, lengths: Sequence[float]):
    """Length-weighted interference factor sum_n L_n exp(2 i (n-1) theta)."""
    lengths = [float(x) for x in lengths]
    if not lengths:
        raise ValueError("lengths must be non-empty")
    if any(not (x > 0) for x in lengths):
        raise ValueError("lengths must be > 0")
    out = _stage_sum(theta, lengths)
    return complex(out) if out.ndim == 0 else out


def binomial_lengths(n_stages: int, l1: float) -> list[float]:
    if n_stages < 1:
        raise ValueError("n_stages must be >= 1")
    if not l1 > 0:
        raise ValueError("l1 must be > 0")
    return [l1 * comb(n_stages - 1, k) for k in range(n_stages)]


def stripe_width(n_stages: int, order_m: int, smf: FiberSegment, pump: PumpPulse) -> float:
    """Stripe width sigma_int [rad/s] of the interference factor at order m."""
    _require(smf, nonlinear=False)
    if n_stages < 2:
        raise ValueError("stripe width is undefined without interference (n_stages >= 2)")
    if order_m < 1:
        raise ValueError("order_m must be >= 1")
    denom = (n_stages - 1) * order_m * pump.lambda_p0**2 * smf.dispersion * smf.length
    return math.sqrt(4.0 * C / denom)


def roundness_ratio(n_stages: int, order_m: int, smf: FiberSegment, pump: PumpPulse) -> float:
    """sigma_int / (sqrt(2) sigma_p); 1 predicts a round island."""
    return stripe_width(n_stages, order_m, smf, pump) / (math.sqrt(2.0) * pump_sigma(pump))


def stage_gains(omega_s, omega_i, spec: InterferometerSpec, pump: PumpPulse) -> list:
    """Per-stage gain gamma P_p L_n sinc(dk L_n / 2), one array per DSF."""
    pp = peak_power(pump)
    out = []
    for dsf in spec.nonlinear_segments:
        dk = phase_mismatch(omega_s, omega_i, dsf, pump)
        out.append(dsf.gamma * pp * dsf.length * sinc(dk * dsf.length / 2.0))
    return out


def stage_phases(omega_s: float, omega_i: float, spec: InterferometerSpec,
                 pump: PumpPulse) -> StagePhases:
    gaps = _uniform_gap(spec)
    theta = 0.0 if gaps is None else dispersive_phase(omega_s, omega_i, gaps, pump)
    gains = tuple(float(g) for g in stage_gains(omega_s, omega_i, spec, pump))
    return StagePhases(theta=theta, gains=gains)


def _uniform_gap(spec: InterferometerSpec) -> FiberSegment | None:
    gaps = spec.dispersive_segments
    if not gaps:
        return None
    first = gaps[0]
    for g in gaps[1:]:
        if g.length != first.length or g.dispersion != first.dispersion:
            raise UnsupportedConfigurationError(
                "dispersive gaps must all have the same length and dispersion")
    return first


def _jsa_row(ws: float, wi: np.ndarray, spec: InterferometerSpec, pump: PumpPulse,
             gap: FiberSegment | None) -> np.ndarray:
    envelope = np.exp(-((ws + wi - 2.0 * pump.omega_p0) ** 2) / (4.0 * pump_sigma(pump) ** 2))
    gains = stage_gains(ws, wi, spec, pump)
    if gap is None:
        return envelope * gains[0]
    theta = dispersive_phase(ws, wi, gap, pump)
    return envelope * _stage_sum(theta, gains)


def synthesize_jsa(spec: InterferometerSpec, pump: PumpPulse, grid: SpectralGrid,
                   normalization: Normalization = Normalization.RAW,
                   workers: int = 1) -> JointSpectrum:
    """Joint spectral amplitude of the N-stage interferometer on ``grid``.

    F = exp[-(ws + wi - 2 wp)^2 / (4 sigma_p^2)] * sum_n g_n exp(2i(n-1) theta)

    Rows (signal wavelengths) are evaluated independently, so the result is
    bitwise identical for any ``workers`` count.
    """
    validate_spec(spec)
    gap = _uniform_gap(spec)
    ws = to_angular_frequency(grid.signal)
    wi = to_angular_frequency(grid.idler)
    amp = np.empty(grid.shape, dtype=complex)

    def fill(rows: range) -> None:
        for r in rows:
            amp[r] = _jsa_row(float(ws[r]), wi, spec, pump, gap)

    n = grid.shape[0]
    if workers <= 1:
        fill(range(n))
    else:
        chunk = math.ceil(n / workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill, [range(k, min(k + chunk, n)) for k in range(0, n, chunk)]))

    jsa = JointSpectrum(grid, amp, Normalization.RAW)
    if normalization is Normalization.PEAK_UNITY:
        return jsa.normalized()
    return jsa
