"""JSON run configuration.

All wavelengths are nanometers and powers microwatts in the document; they
are converted to SI here and nowhere else.  See ``docs/config.md`` for the
schema and ``configs/`` for complete examples.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .engine import Normalization
from .experiment import DetectionModel, ScanPlan
from .physics import (
    NM,
    FiberSegment,
    InterferometerSpec,
    PumpPulse,
    SpectralGrid,
    SpecValidationError,
    validate_spec,
)


class ConfigError(ValueError):
    """Invalid configuration; ``problems`` lists every issue found."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("\n".join(self.problems))


DSF_KEYS = ("lambda0_nm", "dispersion_slope_ps_km_nm2", "gamma_per_w_km")


@dataclass(frozen=True)
class Calibration:
    value: float | None = None
    pin_true_cc: float | None = None
    reference_spec: InterferometerSpec | None = None
    reference_scan: ScanPlan | None = None


@dataclass(frozen=True)
class RunConfig:
    pump: PumpPulse
    spec: InterferometerSpec
    grid: SpectralGrid
    marginal_band_width: float = 0.16 * NM
    normalization: Normalization = Normalization.RAW
    scan: ScanPlan | None = None
    detection: DetectionModel | None = None
    calibration: Calibration | None = None
    seed: int | None = None
    output_dir: str | None = None
    raw: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def digest(self) -> str:
        return config_digest(self.raw)


def config_digest(doc: dict) -> str:
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _missing(block: dict, keys, problems: list, where: str) -> bool:
    """Report every absent key; True if any were absent."""
    absent = [k for k in keys if k not in block]
    problems.extend(f"{where}: missing '{k}'" for k in absent)
    return bool(absent)


def _segments(items: Any, defaults: dict, problems: list, where: str) -> list[FiberSegment]:
    if not isinstance(items, list) or not items:
        problems.append(f"{where}: must be a non-empty list")
        return []
    out = []
    dsf_def = defaults.get("dsf", {})
    smf_def = defaults.get("smf", {})
    for k, item in enumerate(items):
        loc = f"{where}[{k}]"
        if not isinstance(item, dict):
            problems.append(f"{loc}: must be an object")
            continue
        kind = str(item.get("type", "")).lower()
        length = item.get("length_m")
        if length is None:
            problems.append(f"{loc}: missing 'length_m'")
            continue
        if kind in ("dsf", "nonlinear"):
            vals = {key: item.get(key, dsf_def.get(key)) for key in DSF_KEYS}
            missing = [key for key, v in vals.items() if v is None]
            if missing:
                problems.append(f"{loc}: nonlinear fiber missing {', '.join(missing)}")
                continue
            out.append(FiberSegment.nonlinear(float(length), float(vals["lambda0_nm"]),
                                              float(vals["dispersion_slope_ps_km_nm2"]),
                                              float(vals["gamma_per_w_km"])))
        elif kind in ("smf", "dispersive"):
            d = item.get("dispersion_ps_nm_km", smf_def.get("dispersion_ps_nm_km"))
            if d is None:
                problems.append(f"{loc}: dispersive fiber missing dispersion_ps_nm_km")
                continue
            out.append(FiberSegment.dispersive(float(length), float(d)))
        else:
            problems.append(f"{loc}: unknown segment type {item.get('type')!r} (use 'dsf' or 'smf')")
    return out


def _spec(items, defaults, problems, where) -> InterferometerSpec | None:
    n_before = len(problems)
    segs = _segments(items, defaults, problems, where)
    if len(problems) > n_before:
        return None
    spec = InterferometerSpec(segs)
    try:
        validate_spec(spec)
    except SpecValidationError as exc:
        problems.extend(f"{where}: {v}" for v in exc.violations)
        return None
    return spec


def _scan(block: dict, problems: list, where: str) -> ScanPlan | None:
    if not isinstance(block, dict):
        problems.append(f"{where}: must be an object")
        return None
    mode = block.get("mode", "raster")
    keys = ["integration_time_s", "avg_powers_uw"]
    keys += ["points_nm"] if mode == "points" else ["signal_nm", "idler_nm"]
    if _missing(block, keys, problems, where):
        return None
    try:
        bw = float(block.get("band_width_nm", 0.16))
        t = float(block["integration_time_s"])
        powers = [float(p) for p in block["avg_powers_uw"]]
        if mode == "points":
            pts = block["points_nm"]
            return ScanPlan(tuple(p[0] * NM for p in pts), tuple(p[1] * NM for p in pts),
                            bw * NM, t, tuple(p * 1e-6 for p in powers))
        sig = block["signal_nm"]
        idl = block["idler_nm"]
        step = float(block.get("step_nm", 0.16))
        if mode == "raster":
            return ScanPlan.raster(tuple(sig), tuple(idl), step, bw, t, powers)
        if mode == "paired":
            return ScanPlan.paired(tuple(sig), tuple(idl), step, bw, t, powers)
        problems.append(f"{where}: unknown mode {mode!r} (raster, paired or points)")
    except (TypeError, ValueError, IndexError) as exc:
        problems.append(f"{where}: {exc}")
    return None


def parse_config(doc: dict, *, seed: int | None = None, grid_points: int | None = None,
                 output_dir: str | None = None) -> RunConfig:
    """Build a RunConfig from a parsed JSON document; CLI overrides win."""
    problems: list[str] = []
    if not isinstance(doc, dict):
        raise ConfigError(["configuration must be a JSON object"])

    pump = None
    pb = doc.get("pump")
    if not isinstance(pb, dict):
        problems.append("pump: missing block")
    elif not _missing(pb, ("wavelength_nm", "fwhm_nm", "rep_rate_mhz", "avg_power_uw"),
                      problems, "pump"):
        try:
            pump = PumpPulse.from_lab_units(
                float(pb["wavelength_nm"]), float(pb["fwhm_nm"]),
                float(pb["rep_rate_mhz"]), float(pb["avg_power_uw"]),
                float(pb.get("pulse_duration_ps", 4.0)),
            )
        except (TypeError, ValueError) as exc:
            problems.append(f"pump: {exc}")

    defaults = doc.get("fiber_defaults", {})
    spec = _spec(doc.get("segments"), defaults, problems, "segments")

    grid = None
    gb = doc.get("grid")
    if not isinstance(gb, dict):
        problems.append("grid: missing block")
    elif not _missing(gb, ("signal_nm", "idler_nm") + (() if grid_points else ("signal_points",)),
                      problems, "grid"):
        try:
            sp = int(grid_points or gb["signal_points"])
            ip = int(grid_points or gb.get("idler_points", sp))
            grid = SpectralGrid.from_nm(tuple(gb["signal_nm"]), tuple(gb["idler_nm"]), sp, ip)
        except (TypeError, ValueError) as exc:
            problems.append(f"grid: {exc}")

    norm = doc.get("normalization", "raw")
    try:
        normalization = Normalization(norm)
    except ValueError:
        problems.append(f"normalization: unknown value {norm!r}")
        normalization = Normalization.RAW

    band = float(doc.get("marginal", {}).get("band_width_nm", 0.16)) * NM

    scan = None
    if "scan" in doc:
        scan = _scan(doc["scan"], problems, "scan")

    detection = None
    calibration = None
    if "detection" in doc and not isinstance(doc["detection"], dict):
        problems.append("detection: must be an object")
    elif "detection" in doc:
        db = doc["detection"]
        try:
            cal = db.get("calibration", 1.0)
            detection = DetectionModel(
                efficiency_signal=float(db.get("efficiency_signal", 0.1)),
                efficiency_idler=float(db.get("efficiency_idler", 0.1)),
                raman_density=float(db.get("raman_density_per_s_per_w", 0.0)),
                calibration=float(cal) if not isinstance(cal, dict) else 1.0,
            )
            if isinstance(cal, dict):
                ref_spec = spec
                if "reference_segments" in cal:
                    ref_spec = _spec(cal["reference_segments"], defaults, problems,
                                     "detection.calibration.reference_segments")
                ref_scan = scan
                if "reference_scan" in cal:
                    ref_scan = _scan(cal["reference_scan"], problems,
                                     "detection.calibration.reference_scan")
                if not _missing(cal, ("pin_true_cc",), problems, "detection.calibration"):
                    calibration = Calibration(pin_true_cc=float(cal["pin_true_cc"]),
                                              reference_spec=ref_spec, reference_scan=ref_scan)
            else:
                calibration = Calibration(value=float(cal))
        except (TypeError, ValueError) as exc:
            problems.append(f"detection: {exc}")

    if seed is None:
        seed = doc.get("seed")
    if seed is not None:
        try:
            seed = int(seed)
            if not 0 <= seed < 2**64:
                raise ValueError
        except (TypeError, ValueError):
            problems.append("seed: must be an unsigned 64-bit integer")
    if "scan" in doc and seed is None:
        problems.append("seed: required when a scan block is present")

    if problems:
        raise ConfigError(problems)
    return RunConfig(pump=pump, spec=spec, grid=grid, marginal_band_width=band,
                     normalization=normalization, scan=scan, detection=detection,
                     calibration=calibration, seed=seed,
                     output_dir=output_dir or doc.get("output_dir"), raw=doc)


def load_config(path: str | Path, **overrides) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError([f"config file not found: {path}"]) from None
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: invalid JSON ({exc})"]) from None
    return parse_config(doc, **overrides)
