"""Physical parameters of a pulse-pumped multi-stage fiber interferometer.

Everything is stored in SI units (m, s, rad/s, W).  The ``from_lab_units``
constructors accept the units fiber-optics people usually quote (nm,
ps/(nm km), ps/(km nm^2), 1/(W km), uW, MHz, ps) and convert once at the
boundary.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

C = 299_792_458.0  # m/s
HBAR = 1.054_571_817e-34  # J s
H_PLANCK = 2.0 * math.pi * HBAR

NM = 1e-9
PS = 1e-12
KM = 1e3

# 1 ps/(nm km) in s/m^2 and 1 ps/(km nm^2) in s/m^3
PS_PER_NM_KM = PS / (NM * KM)
PS_PER_KM_NM2 = PS / (KM * NM**2)
# 1 /(W km) in 1/(W m)
PER_W_KM = 1.0 / KM

# Intensity FWHM -> standard deviation of the amplitude Gaussian.
FWHM_TO_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))

DEFAULT_PULSE_DURATION = 4 * PS


class SpecValidationError(ValueError):
    """Raised when an interferometer description is inconsistent.

    ``violations`` holds one human-readable entry per problem found.
    """

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


def _require_finite_positive(name: str, value: float) -> None:
    if not (math.isfinite(value) and value > 0):
        raise ValueError(f"{name} must be finite and > 0, got {value!r}")


class SegmentKind(enum.Enum):
    NONLINEAR = "nonlinear"
    DISPERSIVE = "dispersive"


@dataclass(frozen=True)
class FiberSegment:
    """One piece of fiber in the interferometer chain.

    Nonlinear segments (dispersion-shifted fiber) carry ``lambda0``,
    ``dispersion_slope`` and ``gamma``; dispersive segments (standard SMF)
    carry ``dispersion`` only.  Field values are SI.
    """

    kind: SegmentKind
    length: float
    lambda0: float | None = None
    dispersion_slope: float | None = None
    gamma: float | None = None
    dispersion: float | None = None

    @classmethod
    def nonlinear(cls, length_m: float, lambda0_nm: float,
                  dispersion_slope_ps_km_nm2: float, gamma_per_w_km: float) -> FiberSegment:
        return cls(
            kind=SegmentKind.NONLINEAR,
            length=float(length_m),
            lambda0=lambda0_nm * NM,
            dispersion_slope=dispersion_slope_ps_km_nm2 * PS_PER_KM_NM2,
            gamma=gamma_per_w_km * PER_W_KM,
        )

    @classmethod
    def dispersive(cls, length_m: float, dispersion_ps_nm_km: float) -> FiberSegment:
        return cls(
            kind=SegmentKind.DISPERSIVE,
            length=float(length_m),
            dispersion=dispersion_ps_nm_km * PS_PER_NM_KM,
        )

    @property
    def is_nonlinear(self) -> bool:
        return self.kind is SegmentKind.NONLINEAR

    def problems(self) -> list[str]:
        """List the invariant violations of this segment (empty when valid)."""
        out = []
        if not (math.isfinite(self.length) and self.length > 0):
            out.append(f"{self.kind.value} segment length must be > 0 (got {self.length})")
        nl = (self.lambda0, self.dispersion_slope, self.gamma)
        if self.is_nonlinear:
            if any(v is None for v in nl):
                out.append("nonlinear segment needs lambda0, dispersion_slope and gamma")
            elif not all(math.isfinite(v) for v in nl):
                out.append("nonlinear segment coefficients must be finite")
            elif self.lambda0 <= 0:
                out.append("nonlinear segment lambda0 must be > 0")
            if self.dispersion is not None:
                out.append("nonlinear segment must not carry a dispersion coefficient")
        else:
            if self.dispersion is None:
                out.append("dispersive segment needs a dispersion coefficient")
            elif not math.isfinite(self.dispersion):
                out.append("dispersive segment dispersion must be finite")
            if any(v is not None for v in nl):
                out.append("dispersive segment must not carry nonlinear coefficients")
        return out


@dataclass(frozen=True)
class PumpPulse:
    lambda_p0: float
    fwhm_lambda: float
    rep_rate: float
    avg_power: float
    pulse_duration: float = DEFAULT_PULSE_DURATION

    def __post_init__(self):
        _require_finite_positive("lambda_p0", self.lambda_p0)
        _require_finite_positive("fwhm_lambda", self.fwhm_lambda)
        _require_finite_positive("rep_rate", self.rep_rate)
        _require_finite_positive("pulse_duration", self.pulse_duration)
        # zero average power is allowed so that "pump off" can be simulated
        if not (math.isfinite(self.avg_power) and self.avg_power >= 0):
            raise ValueError(f"avg_power must be finite and >= 0, got {self.avg_power!r}")
        if self.fwhm_lambda >= 0.1 * self.lambda_p0:
            raise ValueError("fwhm_lambda must be much smaller than lambda_p0")

    @classmethod
    def from_lab_units(cls, wavelength_nm: float, fwhm_nm: float, rep_rate_mhz: float,
                       avg_power_uw: float, pulse_duration_ps: float = 4.0) -> PumpPulse:
        return cls(
            lambda_p0=wavelength_nm * NM,
            fwhm_lambda=fwhm_nm * NM,
            rep_rate=rep_rate_mhz * 1e6,
            avg_power=avg_power_uw * 1e-6,
            pulse_duration=pulse_duration_ps * PS,
        )

    def with_power(self, avg_power: float) -> PumpPulse:
        return PumpPulse(self.lambda_p0, self.fwhm_lambda, self.rep_rate, avg_power, self.pulse_duration)

    @property
    def omega_p0(self) -> float:
        return to_angular_frequency(self.lambda_p0)

    @property
    def sigma(self) -> float:
        return pump_sigma(self)

    @property
    def peak_power(self) -> float:
        return peak_power(self)


@dataclass(frozen=True)
class InterferometerSpec:
    """Ordered fiber chain: DSF, SMF, DSF, ..., DSF."""

    segments: tuple[FiberSegment, ...]

    def __init__(self, segments: Sequence[FiberSegment]):
        object.__setattr__(self, "segments", tuple(segments))

    @classmethod
    def from_lengths(cls, dsf_lengths: Sequence[float], smf_length: float, *,
                     lambda0_nm: float = 1552.5, dispersion_slope_ps_km_nm2: float = 0.075,
                     gamma_per_w_km: float = 2.0, smf_dispersion_ps_nm_km: float = 17.0
                     ) -> InterferometerSpec:
        """Build a chain of identical-fiber DSFs separated by equal SMF gaps.

        Defaults are the fiber parameters of the reference experiment.
        """
        segs: list[FiberSegment] = []
        for k, length in enumerate(dsf_lengths):
            if k:
                segs.append(FiberSegment.dispersive(smf_length, smf_dispersion_ps_nm_km))
            segs.append(FiberSegment.nonlinear(length, lambda0_nm, dispersion_slope_ps_km_nm2,
                                               gamma_per_w_km))
        return cls(segs)

    @property
    def nonlinear_segments(self) -> tuple[FiberSegment, ...]:
        return tuple(s for s in self.segments if s.is_nonlinear)

    @property
    def dispersive_segments(self) -> tuple[FiberSegment, ...]:
        return tuple(s for s in self.segments if not s.is_nonlinear)

    @property
    def n_stages(self) -> int:
        return len(self.nonlinear_segments)


@dataclass(frozen=True)
class ValidatedSpec:
    spec: InterferometerSpec
    n_stages: int
    dsf_lengths: tuple[float, ...]
    smf_lengths: tuple[float, ...]


@dataclass(frozen=True)
class SpectralGrid:
    """Rectangular wavelength grid; ranges are (min, max) in meters."""

    signal_range: tuple[float, float]
    idler_range: tuple[float, float]
    signal_points: int
    idler_points: int
    signal: np.ndarray = field(init=False, repr=False, compare=False)
    idler: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name, (lo, hi) in (("signal", self.signal_range), ("idler", self.idler_range)):
            if not (math.isfinite(lo) and math.isfinite(hi) and 0 < lo < hi):
                raise ValueError(f"{name} range must satisfy 0 < min < max, got {(lo, hi)}")
        if int(self.signal_points) < 2 or int(self.idler_points) < 2:
            raise ValueError("grids need at least 2 points per axis")
        object.__setattr__(self, "signal_range", (float(self.signal_range[0]), float(self.signal_range[1])))
        object.__setattr__(self, "idler_range", (float(self.idler_range[0]), float(self.idler_range[1])))
        sig = np.linspace(*self.signal_range, int(self.signal_points))
        idl = np.linspace(*self.idler_range, int(self.idler_points))
        sig.flags.writeable = False
        idl.flags.writeable = False
        object.__setattr__(self, "signal", sig)
        object.__setattr__(self, "idler", idl)

    @classmethod
    def from_nm(cls, signal_nm: tuple[float, float], idler_nm: tuple[float, float],
                signal_points: int, idler_points: int | None = None) -> SpectralGrid:
        return cls((signal_nm[0] * NM, signal_nm[1] * NM), (idler_nm[0] * NM, idler_nm[1] * NM),
                   signal_points, signal_points if idler_points is None else idler_points)

    @property
    def shape(self) -> tuple[int, int]:
        return (int(self.signal_points), int(self.idler_points))

    @property
    def signal_step(self) -> float:
        return (self.signal_range[1] - self.signal_range[0]) / (self.signal_points - 1)

    @property
    def idler_step(self) -> float:
        return (self.idler_range[1] - self.idler_range[0]) / (self.idler_points - 1)

    @property
    def cell_area(self) -> float:
        return self.signal_step * self.idler_step

    def axis(self, which: str) -> np.ndarray:
        return self.signal if which == "signal" else self.idler

    def step(self, which: str) -> float:
        return self.signal_step if which == "signal" else self.idler_step

    @property
    def is_exchange_symmetric(self) -> bool:
        return self.signal_range == self.idler_range and self.signal_points == self.idler_points


def to_angular_frequency(wavelength):
    """Vacuum wavelength [m] -> angular frequency [rad/s]; works on arrays."""
    arr = np.asarray(wavelength, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise ValueError("wavelength must be finite and > 0")
    out = 2.0 * math.pi * C / arr
    return float(out) if out.ndim == 0 else out


def to_wavelength(omega):
    """Inverse of :func:`to_angular_frequency`."""
    return to_angular_frequency(omega)


def pump_sigma(pump: PumpPulse) -> float:
    """Spectral standard deviation of the pump amplitude, in rad/s.

    The quoted FWHM is read as the intensity FWHM of a Gaussian amplitude
    spectrum, so sigma = delta_omega / (2 sqrt(2 ln 2)).
    """
    return fwhm_to_delta_omega(pump) / FWHM_TO_SIGMA


def fwhm_to_delta_omega(pump: PumpPulse) -> float:
    return 2.0 * math.pi * C * pump.fwhm_lambda / pump.lambda_p0**2


def peak_power(pump: PumpPulse) -> float:
    # rectangular-pulse equivalent
    return pump.avg_power / (pump.rep_rate * pump.pulse_duration)


def photon_energy(wavelength: float) -> float:
    return HBAR * to_angular_frequency(wavelength)


def photons_per_pulse(pump: PumpPulse) -> float:
    return (pump.avg_power / pump.rep_rate) / photon_energy(pump.lambda_p0)


def validate_spec(spec: InterferometerSpec) -> ValidatedSpec:
    """Check ordering and coefficients of ``spec``.

    Raises SpecValidationError listing every violation; nothing is repaired.
    """
    segs = spec.segments
    violations: list[str] = []
    if not segs:
        raise SpecValidationError(["interferometer has no segments"])
    for k, seg in enumerate(segs):
        want = SegmentKind.NONLINEAR if k % 2 == 0 else SegmentKind.DISPERSIVE
        if seg.kind is not want:
            violations.append(f"segment {k} is {seg.kind.value}, expected {want.value} "
                              "(chain must alternate and start with a nonlinear fiber)")
        violations.extend(f"segment {k}: {p}" for p in seg.problems())
    if not segs[-1].is_nonlinear:
        violations.append("chain must end with a nonlinear fiber")
    if violations:
        raise SpecValidationError(violations)
    return ValidatedSpec(
        spec=spec,
        n_stages=spec.n_stages,
        dsf_lengths=tuple(s.length for s in spec.nonlinear_segments),
        smf_lengths=tuple(s.length for s in spec.dispersive_segments),
    )
